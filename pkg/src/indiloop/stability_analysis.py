"""Stability margins, delay bounds and delay-plane stability maps."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .blocks import LoopConfig, PlantModel, plant_tf
from .loop_synthesis import compensation_variants, open_loop
from .tf_core import (
    NumericalFailure,
    ONE,
    Polynomial,
    Product,
    Delay,
    Sum,
    TFExpr,
    evaluate,
    poly_roots,
    rationalize,
)

DEFAULT_BAND = (1e-3, 1e4)
SCAN_POINTS = 801
STABILITY_GUARD = 1e-9


@dataclass(frozen=True)
class MarginReport:
    """Classical margins of a loop transfer function.

    ``gain_margin`` is a ratio (``inf`` when the phase never reaches an odd
    multiple of -180 deg in the band); ``phase_margin`` is in degrees and
    ``time_delay_margin`` in seconds.  When no gain crossover exists in the
    band, ``crossover_found`` is false and phase/delay margins are ``nan``.
    """

    gain_margin: float
    phase_margin: float
    time_delay_margin: float
    gain_crossover: float
    phase_crossovers: tuple[float, ...] = ()
    gain_crossovers: tuple[float, ...] = ()
    crossover_found: bool = True

    @property
    def gain_margin_db(self) -> float:
        return 20 * math.log10(self.gain_margin) if self.gain_margin > 0 else -math.inf


def _bisect(f, lo, hi, rtol=1e-6, max_iter=200):
    # bisection in log-frequency on a sign change of f
    flo = f(lo)
    for _ in range(max_iter):
        if hi / lo - 1.0 <= rtol:
            break
        mid = math.sqrt(lo * hi)
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def margins(expr: TFExpr, band=DEFAULT_BAND, points: int = SCAN_POINTS) -> MarginReport:
    """Gain, phase and time-delay margins of ``expr`` over ``band`` (rad/s).

    Crossings are bracketed on a log-spaced scan of at least 801 points and
    refined by bisection to 1e-6 relative frequency.  Every gain crossover
    is examined; the reported phase margin belongs to the one with the
    smallest delay margin.
    """
    lo, hi = band
    if not (0 < lo < hi):
        raise ValueError(f"invalid band {band!r}")
    points = max(points, SCAN_POINTS)
    w = np.logspace(math.log10(lo), math.log10(hi), points)
    L = evaluate(expr, 1j * w)
    logmag = np.log(np.abs(L))
    phase = np.unwrap(np.angle(L))

    def f_mag(om):
        return math.log(abs(evaluate(expr, 1j * om)))

    gain_x = []
    for i in range(points - 1):
        a, b = logmag[i], logmag[i + 1]
        if a == 0.0:
            gain_x.append(float(w[i]))
        elif (a < 0) != (b < 0) and b != 0.0:
            gain_x.append(_bisect(f_mag, w[i], w[i + 1]))
    if logmag[-1] == 0.0:
        gain_x.append(float(w[-1]))

    phase_x = []
    for i in range(points - 1):
        p0, p1 = phase[i], phase[i + 1]
        k_lo = math.ceil((min(p0, p1) - math.pi) / (2 * math.pi))
        k_hi = math.floor((max(p0, p1) - math.pi) / (2 * math.pi))
        for k in range(k_lo, k_hi + 1):
            level = math.pi + 2 * math.pi * k
            if level in (p0, p1) and level == p1:
                continue  # counted in the next interval
            rot = complex(math.cos(level), -math.sin(level))

            def f_phase(om, rot=rot):
                return np.angle(evaluate(expr, 1j * om) * rot)

            phase_x.append(_bisect(f_phase, w[i], w[i + 1]))

    gm = math.inf
    for om in phase_x:
        gm = min(gm, 1.0 / abs(evaluate(expr, 1j * om)))

    if not gain_x:
        return MarginReport(gm, math.nan, math.nan, math.nan, tuple(phase_x), (), False)
    best = None
    for om in gain_x:
        pm = float(np.angle(-evaluate(expr, 1j * om)))
        tdm = pm / om
        if best is None or tdm < best[2]:
            best = (om, pm, tdm)
    om, pm, tdm = best
    return MarginReport(gm, math.degrees(pm), tdm, om, tuple(phase_x), tuple(gain_x), True)


def roll_crossover(K_p: float, K_v: float, L_p: float, effectiveness_ratio: float = 1.0) -> float:
    """Gain-crossover frequency of the ideal roll-mode loop.

    Solves ``K_v^2 (w^2 + K_p^2) = rho^2 w^2 (w^2 + L_p^2)`` for ``w^2`` with
    ``rho`` the estimated-to-true control effectiveness ratio.
    """
    rho2 = effectiveness_ratio**2
    b = K_v**2 - rho2 * L_p**2
    w2 = (b + math.sqrt(b * b + 4 * rho2 * K_p**2 * K_v**2)) / (2 * rho2)
    return math.sqrt(w2)


def roll_margins_closed_form(
    K_p: float, K_v: float, L_p: float, effectiveness_ratio: float = 1.0
) -> MarginReport:
    if not (K_p > 0 and K_v > 0):
        raise ValueError("K_p and K_v must be positive")
    wc = roll_crossover(K_p, K_v, L_p, effectiveness_ratio)
    pm = math.atan(wc / K_p) - math.atan(L_p / wc)
    return MarginReport(math.inf, math.degrees(pm), pm / wc, wc, (), (wc,), True)


# ---------------------------------------------------------------------------
# Synchronized delay
# ---------------------------------------------------------------------------


def _require_exact_estimate(cfg: LoopConfig, m: PlantModel):
    if abs(cfg.B_hat - m.CB) > 1e-12 * abs(m.CB):
        raise ValueError(f"requires B_hat == CB (got {cfg.B_hat} vs {m.CB})")


def sync_delay_char_poly(cfg: LoopConfig, m: PlantModel, tau1: float) -> Polynomial:
    """Closed-loop characteristic polynomial for equal sensor and
    measurement-path delay ``tau1`` (Padé-2, ideal filter and sensor).

    For plants whose transfer numerator is not the constant ``CB`` the
    numerator's monic factor multiplies the controller term.
    """
    _require_exact_estimate(cfg, m)
    if tau1 < 0:
        raise ValueError("tau1 must be non-negative")
    P = plant_tf(m)
    den = P.denominator
    zeros = P.numerator * (1.0 / m.CB)
    s = Polynomial([0.0, 1.0])
    kv_term = Polynomial([cfg.K_p, 1.0]) * cfg.kv * zeros
    if tau1 == 0:
        return den * s + kv_term
    t = tau1
    pade_den = Polynomial([12.0, 6.0 * t, t * t])
    pade_num = Polynomial([12.0, -6.0 * t, t * t])
    return den * (s * pade_den + s * (12.0 * t / cfg.T_act)) + kv_term * pade_num


def roll_sync_quartic(K_p, K_v, L_p, T_act, tau1) -> Polynomial:
    """Expanded quartic of the roll-mode synchronized-delay loop."""
    t = tau1
    return Polynomial(
        [
            12 * K_p * K_v,
            12 * K_v - 12 * L_p * (1 + t / T_act) - 6 * K_p * K_v * t,
            12 * t / T_act - 6 * L_p * t - 6 * K_v * t + K_p * K_v * t * t + 12,
            6 * t + K_v * t * t - L_p * t * t,
            t * t,
        ]
    )


def sync_delay_bound(K_p: float, K_v: float, L_p: float, T_act: float) -> float:
    """Closed-form synchronized-delay tolerance of the roll loop.

    Returns ``(2K_v - 2L_p)/(K_p K_v + 2L_p/T_act)`` when
    ``K_p K_v > -2 L_p / T_act`` and ``inf`` otherwise.  This is exactly the
    root of the quartic's linear coefficient; the full Hurwitz condition is
    stricter, see :func:`sync_delay_limit`.
    """
    if K_v > 1.0 / T_act:
        warnings.warn("K_v exceeds 1/T_act; the closed-form bound assumes otherwise", stacklevel=2)
    if K_p * K_v > -2.0 * L_p / T_act:
        return (2 * K_v - 2 * L_p) / (K_p * K_v + 2 * L_p / T_act)
    return math.inf


def max_real_part(p: Polynomial) -> float:
    return float(np.max(poly_roots(p).real))


def sync_delay_limit(
    K_p: float, K_v: float, L_p: float, T_act: float, tau_max: float = 10.0, rtol: float = 1e-9
) -> float:
    """Smallest synchronized delay at which a root of the roll quartic
    reaches the imaginary axis, by scan and bisection; ``inf`` if none up to
    ``tau_max``."""

    def unstable(t):
        return max_real_part(roll_sync_quartic(K_p, K_v, L_p, T_act, t)) >= 0

    grid = np.geomspace(1e-6, tau_max, 400)
    prev = 0.0
    for t in grid:
        if unstable(t):
            lo, hi = prev, float(t)
            while hi - lo > rtol * hi:
                mid = 0.5 * (lo + hi)
                if unstable(mid):
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
        prev = float(t)
    return math.inf


# ---------------------------------------------------------------------------
# General closed-loop stability and the delay plane
# ---------------------------------------------------------------------------


def closed_loop_char_poly(cfg: LoopConfig, m: PlantModel, pch: bool | None = None) -> Polynomial:
    """Numerator of ``1 + L_u`` with every delay replaced by Padé-2.

    Only stable factors (actuator lag, Padé denominators) can be shared
    between numerator and denominator of ``L_u``, so the roots decide
    closed-loop stability.
    """
    L = open_loop(cfg, m, pch)
    return rationalize(Sum((ONE, L))).numerator


def loop_char_poly(L: TFExpr) -> Polynomial:
    return rationalize(Sum((ONE, L))).numerator


def is_stable(p: Polynomial, guard: float = STABILITY_GUARD) -> bool:
    return max_real_part(p) < -guard


@dataclass(frozen=True, eq=False)
class StabilityGrid:
    """Stability over the (sensor-path, measurement-path) total delay plane.

    ``stable[i, j]`` refers to ``tau1_values[i]`` and ``tau2_values[j]``;
    ``indeterminate`` marks cells where root finding failed (never stable).
    """

    tau1_values: np.ndarray
    tau2_values: np.ndarray
    stable: np.ndarray
    max_real_part: np.ndarray
    indeterminate: np.ndarray
    config: LoopConfig

    def __post_init__(self):
        shape = (len(self.tau1_values), len(self.tau2_values))
        for arr in (self.stable, self.max_real_part, self.indeterminate):
            if arr.shape != shape:
                raise ValueError("grid matrix shape does not match its axes")

    @property
    def area(self) -> int:
        return int(self.stable.sum())


def delay_stability_grid(cfg: LoopConfig, m: PlantModel, tau1s, tau2s) -> StabilityGrid:
    """Stable cells of the ``(tau1, tau2)`` plane.

    ``tau1`` is the total sensor-path delay and ``tau2`` the total
    actuator-measurement-path delay; each cell puts them on the sensor and
    measurement blocks with no separate actuator delay.
    """
    t1 = np.asarray(tau1s, dtype=float)
    t2 = np.asarray(tau2s, dtype=float)
    if t1.size == 0 or t2.size == 0 or np.any(t1 < 0) or np.any(t2 < 0):
        raise ValueError("delay axes must be nonempty and non-negative")
    stable = np.zeros((t1.size, t2.size), dtype=bool)
    maxre = np.full((t1.size, t2.size), np.nan)
    indet = np.zeros((t1.size, t2.size), dtype=bool)
    for i, a in enumerate(t1):
        for j, b in enumerate(t2):
            cell = cfg.replace(tau_a=0.0, tau_s=float(a), tau_am=float(b))
            try:
                mr = max_real_part(closed_loop_char_poly(cell, m))
            except NumericalFailure:
                indet[i, j] = True
                continue
            maxre[i, j] = mr
            stable[i, j] = mr < -STABILITY_GUARD
    return StabilityGrid(t1, t2, stable, maxre, indet, cfg)


def with_extra_delay(L: TFExpr, tau: float) -> TFExpr:
    return Product((Delay(tau), L))


# ---------------------------------------------------------------------------
# Compensation comparison
# ---------------------------------------------------------------------------


@dataclass
class CompensationReport:
    omegas: np.ndarray
    magnitudes: np.ndarray  # shape (3, n)
    relative_phase_21: np.ndarray  # angle(L2/L1), rad
    relative_phase_32: np.ndarray  # angle(L3/L2), rad
    margins: tuple[MarginReport, MarginReport, MarginReport]
    violations: list = field(default_factory=list)

    @property
    def magnitude_chain_holds(self) -> bool:
        return not any(v[0] == "magnitude" for v in self.violations)

    @property
    def phase_chain_holds(self) -> bool:
        return not any(v[0] == "phase" for v in self.violations)

    @property
    def margins_nondecreasing(self) -> dict[str, bool]:
        m1, m2, m3 = self.margins
        return {
            "GM": m1.gain_margin <= m2.gain_margin <= m3.gain_margin,
            "PM": m1.phase_margin <= m2.phase_margin <= m3.phase_margin,
            "TDM": m1.time_delay_margin <= m2.time_delay_margin <= m3.time_delay_margin,
        }


def compensation_compare(cfg: LoopConfig, m: PlantModel, omegas, band=DEFAULT_BAND) -> CompensationReport:
    """Compare the uncompensated, filter-compensated and fully compensated
    loops.  Violations of ``|L1| > |L2| > |L3|`` or ``angle L3 > angle L2 >
    angle L1`` are listed as ``(chain, omega, values)`` rather than raised."""
    if not (cfg.T_sensor > 0 and cfg.T_diff > 0):
        raise ValueError("compensation comparison needs T_sensor > 0 and T_diff > 0")
    w = np.asarray(omegas, dtype=float)
    loops = compensation_variants(cfg, m)
    vals = np.array([evaluate(L, 1j * w) for L in loops])
    mags = np.abs(vals)
    ph21 = np.angle(vals[1] / vals[0])
    ph32 = np.angle(vals[2] / vals[1])
    violations = []
    for k, om in enumerate(w):
        if not (mags[0, k] > mags[1, k] > mags[2, k]):
            violations.append(("magnitude", float(om), tuple(mags[:, k])))
        if not (ph32[k] > 0 and ph21[k] > 0):
            violations.append(("phase", float(om), (float(ph21[k]), float(ph32[k]))))
    reports = tuple(margins(L, band) for L in loops)
    return CompensationReport(w, mags, ph21, ph32, reports, violations)
