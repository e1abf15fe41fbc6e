"""Sensitivity, tracking-error, disturbance and noise transfer functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import LoopConfig, PlantModel, block_tfs, plant_expr
from .loop_synthesis import closed_loop, equivalent_controller, pch_ratio, reference_model
from .tf_core import ONE, Feedback, Product, Scale, Sum, TFExpr, evaluate

IDENTITY_TOL = 1e-8
IDENTITY_BAND = (1e-2, 1e3)


class WiringError(RuntimeError):
    """A performance function failed its identity check against the open loop."""


@dataclass(frozen=True, eq=False)
class PerformanceSet:
    """Closed-loop performance functions.

    The disturbance enters at the plant input and the noise at the sensor
    input, so ``S = 1/(1 + L_u)``, ``T_yd = P S`` and ``T_yn = S - 1``.
    """

    S: TFExpr
    T_ec: TFExpr
    T_yd: TFExpr
    T_yn: TFExpr
    L_u: TFExpr
    P: TFExpr
    T_yc: TFExpr
    pch: bool

    def identity_residuals(self, omegas) -> dict[str, float]:
        s = 1j * np.asarray(omegas, dtype=float)
        S = evaluate(self.S, s)
        L = evaluate(self.L_u, s)
        P = evaluate(self.P, s)
        return {
            "S(1+L)=1": float(np.max(np.abs(S * (1 + L) - 1))),
            "T_yd=PS": float(np.max(np.abs(evaluate(self.T_yd, s) - P * S) / np.maximum(1.0, np.abs(P * S)))),
            "T_yn=S-1": float(np.max(np.abs(evaluate(self.T_yn, s) - (S - 1)))),
        }


def performance_set(
    cfg: LoopConfig, m: PlantModel, pch: bool | None = None, check_points: int = 50
) -> PerformanceSet:
    """Build the four performance functions from the block diagram.

    Each function is wired from the blocks directly rather than from
    ``L_u``; the identities against ``L_u`` are checked on a log grid of
    ``check_points`` frequencies.

    Raises
    ------
    WiringError
        If any identity residual exceeds 1e-8.
    """
    pch = cfg.pch if pch is None else pch
    blk = block_tfs(cfg)
    P = plant_expr(m)
    C_bar = equivalent_controller(cfg, pch)
    loops = closed_loop(cfg, m, pch)
    ctrl = Product((blk.Ga, C_bar))
    # measurement seen by the controller, traced backwards from y_m
    S = Feedback(ONE, Product((ctrl, blk.H, P)))
    T_yd = Feedback(P, Product((ctrl, blk.H)))
    T_yn = Scale(-1.0) * Feedback(Product((P, ctrl, blk.H)), ONE)
    T_ec = Sum((reference_model(cfg), Scale(-1.0) * loops.T_ymc))
    ps = PerformanceSet(S, T_ec, T_yd, T_yn, loops.L_u, P, loops.T_yc, pch)
    if check_points:
        w = np.logspace(np.log10(IDENTITY_BAND[0]), np.log10(IDENTITY_BAND[1]), check_points)
        for name, res in ps.identity_residuals(w).items():
            if not res <= IDENTITY_TOL:
                raise WiringError(f"identity {name} violated: residual {res:.3e}")
    return ps


@dataclass
class PchDelta:
    omegas: np.ndarray
    ratio_magnitude: np.ndarray
    loop_magnitude: np.ndarray
    loop_magnitude_pch: np.ndarray
    S: np.ndarray
    S_pch: np.ndarray
    T_yd: np.ndarray
    T_yd_pch: np.ndarray
    T_yn: np.ndarray
    T_yn_pch: np.ndarray
    direction: str  # "attenuating", "amplifying" or "neutral"

    @property
    def bound_holds(self) -> bool:
        """The |R| bound implied by the gain ordering, with 1e-12 slack."""
        r = self.ratio_magnitude
        if self.direction == "attenuating":
            return bool(np.all(r <= 1 + 1e-12) and np.all(self.loop_magnitude_pch <= self.loop_magnitude * (1 + 1e-12)))
        if self.direction == "amplifying":
            return bool(np.all(r >= 1 - 1e-12) and np.all(self.loop_magnitude_pch >= self.loop_magnitude * (1 - 1e-12)))
        return bool(np.all(np.abs(r - 1) <= 1e-12))


def pch_performance_delta(cfg: LoopConfig, m: PlantModel, omegas) -> PchDelta:
    """Magnitude curves of the performance functions with hedging on and off."""
    w = np.asarray(omegas, dtype=float)
    s = 1j * w
    off = performance_set(cfg, m, pch=False)
    on = performance_set(cfg, m, pch=True)
    mag = lambda e: np.abs(evaluate(e, s))
    if cfg.K_p > cfg.K_r:
        direction = "attenuating"
    elif cfg.K_p < cfg.K_r:
        direction = "amplifying"
    else:
        direction = "neutral"
    return PchDelta(
        w,
        np.abs(pch_ratio(cfg)(s)),
        mag(off.L_u),
        mag(on.L_u),
        mag(off.S),
        mag(on.S),
        mag(off.T_yd),
        mag(on.T_yd),
        mag(off.T_yn),
        mag(on.T_yn),
        direction,
    )
