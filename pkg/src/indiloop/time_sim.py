"""Fixed-step simulation of the incremental loop and the metric battery.

Signals are radians inside the kernel and degrees in every returned trace
and metric.  Delays are whole multiples of the step; values between grid
points are linearly interpolated from the stored history.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .blocks import (
    GustSpec,
    LoopConfig,
    NoiseSpec,
    PlantModel,
    command_square,
    gust_profile,
)
from .tf_core import DomainError, NumericalFailure
from .stability_analysis import MarginReport, margins, closed_loop_char_poly, max_real_part
from .loop_synthesis import open_loop

DEG = 180.0 / math.pi
RAD = math.pi / 180.0
DIVERGENCE_LIMIT = 1e6

KINDS = ("tracking", "disturbance", "noise", "robustness")
COMMANDS = ("square", "step", "sine", "none")


class SimConfigError(DomainError):
    """Scenario or loop settings the simulator cannot honour."""


class DivergenceError(RuntimeError):
    """The simulated output left the ``1e6`` envelope."""

    def __init__(self, time: float):
        super().__init__(f"simulation diverged at t = {time:.6g} s")
        self.time = time


@dataclass(frozen=True)
class SimScenario:
    """One simulation run.

    ``amplitude`` is in deg/s and ``uncertainty`` maps plant derivative
    names to relative half-widths of uniform perturbations.
    """

    kind: str = "tracking"
    duration: float = 12.0
    dt: float = 1e-4
    command: str = "square"
    amplitude: float = 10.0
    interval: float = 3.0
    command_frequency: float = 1.0
    gust: GustSpec | None = None
    noise: NoiseSpec | None = None
    mc_samples: int = 100
    mc_seed: int = 0
    uncertainty: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SimConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.command not in COMMANDS:
            raise SimConfigError(f"command must be one of {COMMANDS}, got {self.command!r}")
        if not self.dt > 0:
            raise SimConfigError("dt must be positive")
        if self.duration < 10 * self.dt:
            raise SimConfigError("duration must cover at least 10 steps")
        if self.kind == "robustness" and self.mc_samples < 2:
            raise SimConfigError("robustness runs need at least 2 samples")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def replace(self, **changes) -> "SimScenario":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Uniformly sampled signals; rates in deg/s, deflections in deg."""

    time: np.ndarray
    c: np.ndarray
    r: np.ndarray
    r_ref: np.ndarray  # reference model without hedging
    y: np.ndarray
    y_m: np.ndarray
    u_c: np.ndarray
    u: np.ndarray
    u_0: np.ndarray
    v_h: np.ndarray

    FIELDS = ("time", "c", "r", "r_ref", "y", "y_m", "u_c", "u", "u_0", "v_h")

    def columns(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.FIELDS}


def _steps(delay: float, dt: float) -> int:
    k = delay / dt
    n = int(round(k))
    if abs(k - n) > 1e-9 * max(1.0, k):
        raise SimConfigError(f"delay {delay} is not a whole number of steps of {dt}")
    return n


def _validate(cfg: LoopConfig, sc: SimScenario):
    if not cfg.T_act > 0:
        raise SimConfigError("the simulator needs T_act > 0")
    positive = [t for t in (cfg.T_act, cfg.T_diff, cfg.T_sensor) if t > 0]
    if sc.dt > min(positive) / 10 * (1 + 1e-12):
        raise SimConfigError(f"dt = {sc.dt} exceeds a tenth of the fastest time constant {min(positive)}")
    if sc.noise is not None and sc.noise.variance > 0 and cfg.T_diff == 0:
        raise SimConfigError("measurement noise needs a derivative filter (T_diff > 0)")
    return tuple(_steps(t, sc.dt) for t in (cfg.tau_a, cfg.tau_s, cfg.tau_am))


def _half_grid(sc: SimScenario) -> np.ndarray:
    return np.arange(2 * sc.n_steps + 1) * (0.5 * sc.dt)


def _command(sc: SimScenario, t: np.ndarray) -> np.ndarray:
    if sc.command == "square":
        return command_square(t, sc.amplitude, sc.interval)
    if sc.command == "step":
        return np.full_like(t, sc.amplitude)
    if sc.command == "sine":
        return sc.amplitude * np.sin(sc.command_frequency * t)
    return np.zeros_like(t)


@njit(cache=True)
def _delayed(hist, k, h, m, current):
    # value at grid position k + h - m, h in {0, 0.5, 1}
    if m == 0:
        return current
    p = k + h - m
    if p < 0.0:
        return 0.0
    i = int(math.floor(p))
    f = p - i
    if f == 0.0:
        return hist[i]
    return hist[i] + f * (hist[i + 1] - hist[i])


@njit(cache=True)
def _stage(st, k, h, c, alpha_g, noise, A, B, C, E, par, ints, hist_uc, hist_y, hist_yd, hist_u, out, d):
    K_p, K_r, T_act, T_sensor, T_diff, gain, B_hat, pch = par[0], par[1], par[2], par[3], par[4], par[5], par[6], par[7]
    m_a, m_s, m_am, comp_f, comp_s = ints[0], ints[1], ints[2], ints[3], ints[4]
    n = A.shape[0]
    r, r0, u, ys, z, g1, g2 = st[0], st[1], st[2], st[3], st[4], st[5], st[6]
    d[:] = 0.0
    y = 0.0
    ydot = 0.0
    for i in range(n):
        acc = B[i] * u + E[i] * alpha_g
        for j in range(n):
            acc += A[i, j] * st[7 + j]
        d[7 + i] = acc
        y += C[i] * st[7 + i]
        ydot += C[i] * acc
    y_in = _delayed(hist_y, k, h, m_s, y)
    if T_sensor > 0:
        ym_clean = ys
        d[3] = (y_in - ys) / T_sensor
        ymdot = d[3]
    else:
        ym_clean = y_in
        ymdot = _delayed(hist_yd, k, h, m_s, ydot)
    ym = ym_clean + noise
    if T_diff > 0:
        yf = (ym - z) / T_diff
        d[4] = yf
    else:
        yf = ymdot
    u0 = _delayed(hist_u, k, h, m_am, u)
    if comp_f == 1 and T_diff > 0:
        d[5] = (u0 - g1) / T_diff
        u0 = g1
    if comp_s == 1 and T_sensor > 0:
        d[6] = (u0 - g2) / T_sensor
        u0 = g2
    vr = K_r * (c - r)
    duc = gain * (vr + K_p * (r - ym) - yf)
    uc = u0 + duc
    vh = B_hat * duc if pch == 1.0 else 0.0
    d[0] = vr - vh
    d[1] = K_r * (c - r0)
    d[2] = (_delayed(hist_uc, k, h, m_a, uc) - u) / T_act
    out[0] = y
    out[1] = ym
    out[2] = uc
    out[3] = u0
    out[4] = vh
    out[5] = ydot


@njit(cache=True)
def _run(n_steps, dt, c_half, ag_half, noise, A, B, C, E, par, ints, limit):
    n = A.shape[0]
    ns = 7 + n
    st = np.zeros(ns)
    tmp = np.zeros(ns)
    k1 = np.zeros(ns)
    k2 = np.zeros(ns)
    k3 = np.zeros(ns)
    k4 = np.zeros(ns)
    hist_uc = np.zeros(n_steps + 1)
    hist_y = np.zeros(n_steps + 1)
    hist_yd = np.zeros(n_steps + 1)
    hist_u = np.zeros(n_steps + 1)
    rec = np.zeros((n_steps + 1, 8))
    out = np.zeros(6)
    scratch = np.zeros(6)
    for k in range(n_steps + 1):
        nk = noise[min(k, n_steps - 1)]
        _stage(st, k, 0.0, c_half[2 * k], ag_half[2 * k], nk, A, B, C, E, par, ints,
               hist_uc, hist_y, hist_yd, hist_u, out, k1)
        hist_uc[k] = out[2]
        hist_y[k] = out[0]
        hist_yd[k] = out[5]
        hist_u[k] = st[2]
        rec[k, 0] = st[0]
        rec[k, 1] = st[1]
        rec[k, 2] = out[0]
        rec[k, 3] = out[1]
        rec[k, 4] = out[2]
        rec[k, 5] = st[2]
        rec[k, 6] = out[3]
        rec[k, 7] = out[4]
        if not abs(out[0]) <= limit:
            return rec, k
        if k == n_steps:
            break
        for i in range(ns):
            tmp[i] = st[i] + 0.5 * dt * k1[i]
        _stage(tmp, k, 0.5, c_half[2 * k + 1], ag_half[2 * k + 1], nk, A, B, C, E, par, ints,
               hist_uc, hist_y, hist_yd, hist_u, scratch, k2)
        for i in range(ns):
            tmp[i] = st[i] + 0.5 * dt * k2[i]
        _stage(tmp, k, 0.5, c_half[2 * k + 1], ag_half[2 * k + 1], nk, A, B, C, E, par, ints,
               hist_uc, hist_y, hist_yd, hist_u, scratch, k3)
        for i in range(ns):
            tmp[i] = st[i] + dt * k3[i]
        _stage(tmp, k, 1.0, c_half[2 * k + 2], ag_half[2 * k + 2], nk, A, B, C, E, par, ints,
               hist_uc, hist_y, hist_yd, hist_u, scratch, k4)
        for i in range(ns):
            st[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return rec, -1


def simulate(cfg: LoopConfig, m: PlantModel, sc: SimScenario) -> SimTrace:
    """Integrate the closed loop with classical RK4 at step ``sc.dt``.

    Raises
    ------
    SimConfigError
        Delays not on the step grid, step too coarse, or noise without a
        derivative filter.
    DivergenceError
        If ``|y|`` exceeds ``1e6`` rad/s.
    """
    m_a, m_s, m_am = _validate(cfg, sc)
    n = sc.n_steps
    th = _half_grid(sc)
    c_half = _command(sc, th) * RAD
    if sc.gust is not None:
        ag_half = np.asarray(gust_profile(th, sc.gust)[1]) / sc.gust.V
    else:
        ag_half = np.zeros_like(th)
    if sc.noise is not None:
        noise = sc.noise.sequence(n, sc.dt)
    else:
        noise = np.zeros(n)
    par = np.array(
        [cfg.K_p, cfg.K_r, cfg.T_act, cfg.T_sensor, cfg.T_diff,
         cfg.T_act * cfg.kv / cfg.B_hat, cfg.B_hat, 1.0 if cfg.pch else 0.0]
    )
    ints = np.array([m_a, m_s, m_am, int(cfg.comp_filter), int(cfg.comp_sensor)], dtype=np.int64)
    rec, bad = _run(
        n, sc.dt, c_half, ag_half, noise,
        np.ascontiguousarray(m.A), np.ascontiguousarray(m.B), np.ascontiguousarray(m.C),
        np.ascontiguousarray(m.gust_input), par, ints, DIVERGENCE_LIMIT,
    )
    if bad >= 0:
        raise DivergenceError(bad * sc.dt)
    rec = rec * DEG
    return SimTrace(th[::2], c_half[::2] * DEG, *(rec[:, i] for i in range(8)))


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x)))


# ---------------------------------------------------------------------------
# Metric battery
# ---------------------------------------------------------------------------

METRIC_FIELDS = ("GM", "PM", "TDM", "RMSer", "RMSur", "RMSed", "RMSud", "RMSen", "RMSun", "sigma_RMSer")


@dataclass
class MetricsReport:
    """Margins (GM in dB, PM in deg, TDM in s) and RMS metrics in deg/s and
    deg.  Metrics not run are ``None``; ``divergent`` lists scenarios that
    blew up, whose metrics are ``nan``."""

    GM: float | None = None
    PM: float | None = None
    TDM: float | None = None
    RMSer: float | None = None
    RMSur: float | None = None
    RMSed: float | None = None
    RMSud: float | None = None
    RMSen: float | None = None
    RMSun: float | None = None
    sigma_RMSer: float | None = None
    mc_excluded: int = 0
    divergent: list = field(default_factory=list)
    traces: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict[str, float | None]:
        return {k: getattr(self, k) for k in METRIC_FIELDS}


@dataclass(frozen=True)
class Battery:
    tracking: SimScenario | None
    disturbance: SimScenario | None
    noise: SimScenario | None
    robustness: SimScenario | None

    def selected(self, names) -> "Battery":
        return Battery(**{k: (getattr(self, k) if k in names else None) for k in KINDS})


def default_battery(dt: float = 1e-4, seed: int = 0, samples: int = 100, V: float = 40.0) -> Battery:
    """The four-run protocol: square-wave tracking, 1-cos gust at zero
    command, sensor noise at zero command, and Monte-Carlo tracking."""
    tracking = SimScenario("tracking", duration=12.0, dt=dt, command="square", amplitude=10.0, interval=3.0)
    return Battery(
        tracking=tracking,
        disturbance=SimScenario("disturbance", duration=10.0, dt=dt, command="none", gust=GustSpec(V=V)),
        noise=SimScenario("noise", duration=10.0, dt=dt, command="none", noise=NoiseSpec(seed=seed)),
        robustness=tracking.replace(
            kind="robustness",
            mc_samples=samples,
            mc_seed=seed,
            uncertainty={"M_alpha": 0.2, "M_q": 0.2, "M_eta": 0.2},
        ),
    )


def robustness_mc(cfg: LoopConfig, m: PlantModel, sc: SimScenario):
    """Spread of the tracking RMS error over perturbed plants.

    Sample ``i`` draws from ``default_rng([mc_seed, i])``; every listed
    derivative is scaled by ``1 + U(-w, w)``.  Unstable samples (roots of
    the Padé closed loop in the right half-plane, or divergence) are
    excluded.

    Returns
    -------
    sigma : float
        Population standard deviation of the kept RMS errors (deg/s).
    samples : ndarray
        RMS error per sample, ``nan`` for excluded ones.
    excluded : int
    """
    names = sorted(sc.uncertainty)
    track = sc.replace(kind="tracking")
    out = np.full(sc.mc_samples, np.nan)
    for i in range(sc.mc_samples):
        rng = np.random.default_rng([sc.mc_seed, i])
        draws = rng.uniform(-1.0, 1.0, len(names))
        factors = {k: 1.0 + sc.uncertainty[k] * u for k, u in zip(names, draws)}
        mi = m.perturbed(factors) if factors else m
        try:
            if max_real_part(closed_loop_char_poly(cfg, mi)) >= 0:
                continue
            tr = simulate(cfg, mi, track)
        except (DivergenceError, NumericalFailure):
            continue
        out[i] = rms(tr.r_ref - tr.y)
    kept = out[np.isfinite(out)]
    sigma = float(np.std(kept)) if kept.size else math.nan
    return sigma, out, int(sc.mc_samples - kept.size)


def run_metrics(
    cfg: LoopConfig, m: PlantModel, battery: Battery, band=(1e-3, 1e4), keep_traces: bool = True
) -> MetricsReport:
    """Margins of the configured loop plus the RMS metrics of each run in
    the battery; noise metrics are taken against a noise-free baseline."""
    rep = MetricsReport()
    mr: MarginReport = margins(open_loop(cfg, m), band)
    rep.GM, rep.PM, rep.TDM = mr.gain_margin_db, mr.phase_margin, mr.time_delay_margin

    def run(sc):
        try:
            return simulate(cfg, m, sc)
        except DivergenceError:
            rep.divergent.append(sc.kind)
            return None

    if battery.tracking is not None:
        tr = run(battery.tracking)
        rep.RMSer, rep.RMSur = (rms(tr.r_ref - tr.y), rms(tr.u)) if tr else (math.nan, math.nan)
        if tr and keep_traces:
            rep.traces["tracking"] = tr
    if battery.disturbance is not None:
        tr = run(battery.disturbance)
        rep.RMSed, rep.RMSud = (rms(tr.y), rms(tr.u)) if tr else (math.nan, math.nan)
        if tr and keep_traces:
            rep.traces["disturbance"] = tr
    if battery.noise is not None:
        tr = run(battery.noise)
        base = run(battery.noise.replace(noise=None))
        if tr and base:
            rep.RMSen, rep.RMSun = rms(tr.y - base.y), rms(tr.u - base.u)
            if keep_traces:
                rep.traces["noise"] = tr
        else:
            rep.RMSen = rep.RMSun = math.nan
    if battery.robustness is not None:
        sigma, _, excluded = robustness_mc(cfg, m, battery.robustness)
        rep.sigma_RMSer, rep.mc_excluded = sigma, excluded
    return rep
