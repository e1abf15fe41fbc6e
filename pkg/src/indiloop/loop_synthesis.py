"""Transfer functions of the incremental loop.

Every function here returns a :class:`~indiloop.tf_core.TFExpr` built from
the element blocks, so delays stay exact until a caller rationalizes.
The inner actuator-measurement loop ``1/(1 - Ga Gam)`` is kept as a
feedback node rather than expanded.
"""

from __future__ import annotations

from typing import NamedTuple

from .blocks import LoopConfig, PlantModel, block_tfs, plant_expr
from .tf_core import (
    Atom,
    Feedback,
    ONE,
    Polynomial,
    Product,
    Rational,
    S,
    Scale,
    Sum,
    TFExpr,
    rationalize,
)


class SingularStructureError(ValueError):
    """``1 - Ga Gam`` vanishes identically, so the controller does not exist."""


class LoopSet(NamedTuple):
    C_bar: TFExpr
    L_u: TFExpr
    T_yc: TFExpr
    T_ymc: TFExpr
    pch: bool


def _s() -> TFExpr:
    return Atom(Rational(S))


def _kp_plus_sF(cfg: LoopConfig, F: TFExpr) -> TFExpr:
    return Sum((Scale(cfg.K_p), Product((_s(), F))))


def _reciprocal(x: TFExpr) -> TFExpr:
    # 1/x as the unity-feedback loop 1/(1 + (x - 1))
    return Feedback(ONE, Sum((x, Scale(-1.0))))


def reference_model(cfg: LoopConfig) -> TFExpr:
    """``K_r / (s + K_r)``."""
    return Atom(Rational(Polynomial([cfg.K_r]), Polynomial([cfg.K_r, 1.0])))


def pch_ratio(cfg: LoopConfig) -> Rational:
    """Ratio of the hedged to the unhedged open loop,
    ``(s + K_r) / (s + K_r + K_v T_act (K_p - K_r))``."""
    a = cfg.kv * cfg.T_act
    return Rational(
        Polynomial([cfg.K_r, 1.0]),
        Polynomial([cfg.K_r + a * (cfg.K_p - cfg.K_r), 1.0]),
    )


def equivalent_controller(cfg: LoopConfig, pch: bool | None = None) -> TFExpr:
    """Equivalent controller from measured output ``y_m`` to ``u_c``.

    ``T_act K_v (K_p + s F) / (B_hat (1 - Ga Gam))``, times the hedge ratio
    when pseudo-control hedging is on.

    Raises
    ------
    SingularStructureError
        If ``1 - Ga Gam`` is identically zero (no actuator lag, no delays and
        no measurement dynamics).
    """
    pch = cfg.pch if pch is None else pch
    blk = block_tfs(cfg)
    GaGam = Product((blk.Ga, blk.Gam))
    if rationalize(Sum((ONE, -GaGam))).numerator.is_zero():
        raise SingularStructureError("1 - Ga*Gam vanishes identically")
    inner = Feedback(ONE, -GaGam)
    parts = [Scale(cfg.T_act * cfg.kv / cfg.B_hat), _kp_plus_sF(cfg, blk.F), inner]
    if pch:
        parts.append(Atom(pch_ratio(cfg)))
    return Product(tuple(parts))


def open_loop(cfg: LoopConfig, m: PlantModel, pch: bool | None = None) -> TFExpr:
    """Loop transfer broken at the plant input, ``Ga C_bar H P``."""
    blk = block_tfs(cfg)
    return Product((blk.Ga, equivalent_controller(cfg, pch), blk.H, plant_expr(m)))


def closed_loop(cfg: LoopConfig, m: PlantModel, pch: bool | None = None) -> LoopSet:
    """Command-to-output and command-to-measurement transfer functions.

    Both hedged and unhedged loops share the form
    ``K_r/(s+K_r) * (K_p+s)/(K_p+sF) * Ga C_bar P / (1 + Ga C_bar H P)``.
    """
    pch = cfg.pch if pch is None else pch
    blk = block_tfs(cfg)
    C_bar = equivalent_controller(cfg, pch)
    P = plant_expr(m)
    L_u = Product((blk.Ga, C_bar, blk.H, P))
    lead = Product((Atom(Rational(Polynomial([cfg.K_p, 1.0]))), _reciprocal(_kp_plus_sF(cfg, blk.F))))
    T_yc = Product((reference_model(cfg), lead, Feedback(Product((blk.Ga, C_bar, P)), blk.H)))
    T_ymc = Product((blk.H, T_yc))
    return LoopSet(C_bar, L_u, T_yc, T_ymc, pch)


def pid_reduction(cfg: LoopConfig) -> tuple[float, float, float]:
    """Proportional, integral and derivative gains of the ideal-case controller."""
    if not cfg.is_ideal():
        raise ValueError(
            "PID reduction requires unity sensor, filter and measurement paths without delays"
        )
    a = cfg.kv / cfg.B_hat
    return ((cfg.K_p * cfg.T_act + 1.0) * a, cfg.K_p * a, cfg.T_act * a)


def gamma1(tau1: float, T_act: float) -> Rational:
    """Equivalent effect of a synchronized delay on the ideal open loop."""
    _check_gamma_args(tau1, 0.0, T_act)
    t = tau1
    return Rational(
        Polynomial([12.0, -6.0 * t, t * t]),
        Polynomial([12.0 + 12.0 * t / T_act, 6.0 * t, t * t]),
    )


def gamma2(tau1: float, tau2: float, T_act: float) -> Rational:
    """Equivalent effect of unsynchronized sensor/measurement delays."""
    _check_gamma_args(tau1, tau2, T_act)
    n1 = Polynomial([12.0, -6.0 * tau1, tau1 * tau1])
    d1 = Polynomial([12.0, 6.0 * tau1, tau1 * tau1])
    d2 = Polynomial([12.0, 6.0 * tau2, tau2 * tau2])
    d2c = Polynomial([12.0 + 12.0 * tau2 / T_act, 6.0 * tau2, tau2 * tau2])
    return Rational(n1 * d2, d1 * d2c)


def _check_gamma_args(tau1, tau2, T_act):
    if tau1 < 0 or tau2 < 0:
        raise ValueError("delays must be non-negative")
    if not T_act > 0:
        raise ValueError("T_act must be positive")


def compensation_variants(cfg: LoopConfig, m: PlantModel) -> tuple[TFExpr, TFExpr, TFExpr]:
    """Open loops without compensation, with filter compensation, and with
    filter plus sensor compensation in the actuator-measurement path."""
    flags = ((False, False), (True, False), (True, True))
    return tuple(
        open_loop(cfg.replace(comp_filter=f, comp_sensor=h), m) for f, h in flags
    )
