"""Plant models, loop configuration, the element blocks of the loop, and
scenario signal generators (square-wave command, 1-cos gusts, sensor noise).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .tf_core import Atom, Delay, DomainError, ONE, Polynomial, Product, Rational, TFExpr, lag

# Short-period stand-in derivatives used as the default desk plant.
# STAND-IN VALUES, not reference data: no complete parameter set is available.
DESK_SHORT_PERIOD = dict(Z_alpha=-1.2, Z_eta=-0.1, M_alpha=-8.0, M_q=-1.5, M_eta=-12.0)


@dataclass(frozen=True, eq=False)
class PlantModel:
    """SISO LTI plant ``x' = A x + B u``, ``y = C x``.

    ``gust_input`` maps an angle-of-attack perturbation into the state
    derivative (zeros when the plant has no such channel).  ``params`` keeps
    the physical derivatives so perturbed copies can be rebuilt.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    label: str = "generic"
    kind: str = "generic"
    params: dict = field(default_factory=dict)
    gust_input: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if n < 1 or A.shape != (n, n):
            raise DomainError(f"A must be square with n >= 1, got shape {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(n)
        C = np.asarray(self.C, dtype=float).reshape(n)
        E = np.zeros(n) if self.gust_input is None else np.asarray(self.gust_input, float).reshape(n)
        if float(C @ B) == 0.0:
            raise DomainError("C B must be nonzero (relative degree one)")
        for name, val in (("A", A), ("B", B), ("C", C), ("gust_input", E)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def CB(self) -> float:
        return float(self.C @ self.B)

    def perturbed(self, factors: dict[str, float]) -> "PlantModel":
        """Copy with each named derivative multiplied by ``factors[name]``."""
        unknown = set(factors) - set(self.params)
        if unknown:
            raise KeyError(f"plant has no parameter(s) {sorted(unknown)}")
        new = {k: v * factors.get(k, 1.0) for k, v in self.params.items()}
        if self.kind == "short_period":
            return make_short_period(**new)
        if self.kind == "roll":
            return make_roll(**new)
        raise DomainError(f"cannot rebuild a {self.kind!r} plant from parameters")


def make_short_period(Z_alpha, Z_eta, M_alpha, M_q, M_eta) -> PlantModel:
    """Short-period pitch dynamics, states ``[alpha, q]``, output ``q``."""
    if M_eta == 0:
        raise DomainError("M_eta must be nonzero")
    return PlantModel(
        A=np.array([[Z_alpha, 1.0], [M_alpha, M_q]]),
        B=np.array([Z_eta, M_eta]),
        C=np.array([0.0, 1.0]),
        label="short-period",
        kind="short_period",
        params=dict(Z_alpha=Z_alpha, Z_eta=Z_eta, M_alpha=M_alpha, M_q=M_q, M_eta=M_eta),
        gust_input=np.array([Z_alpha, M_alpha]),
    )


def make_roll(L_p, L_da) -> PlantModel:
    """Roll-mode dynamics ``p' = L_p p + L_da da``."""
    if L_da == 0:
        raise DomainError("L_da must be nonzero")
    return PlantModel(
        A=np.array([[L_p]]),
        B=np.array([L_da]),
        C=np.array([1.0]),
        label="roll",
        kind="roll",
        params=dict(L_p=L_p, L_da=L_da),
    )


def desk_plant() -> PlantModel:
    return make_short_period(**DESK_SHORT_PERIOD)


def _char_poly_and_adjugate(A: np.ndarray):
    # Faddeev-LeVerrier: det(sI - A) and the matrix coefficients of adj(sI - A)
    n = A.shape[0]
    coeffs = [0.0] * (n + 1)
    coeffs[n] = 1.0
    M = np.eye(n)
    mats = []
    for k in range(1, n + 1):
        mats.append(M)
        AM = A @ M
        coeffs[n - k] = -np.trace(AM) / k
        M = AM + coeffs[n - k] * np.eye(n)
    return coeffs, mats


def plant_tf(m: PlantModel) -> Rational:
    """``P(s) = C adj(sI - A) B / det(sI - A)``."""
    den, mats = _char_poly_and_adjugate(m.A)
    n = m.n
    num = [0.0] * n
    for k, M in enumerate(mats, start=1):
        num[n - k] = float(m.C @ M @ m.B)
    return Rational(Polynomial(num), Polynomial(den))


def plant_char_poly(m: PlantModel) -> Polynomial:
    """``det(sI - A)``."""
    return Polynomial(_char_poly_and_adjugate(m.A)[0])


# ---------------------------------------------------------------------------
# Loop configuration and element blocks
# ---------------------------------------------------------------------------

LAWS = ("modified", "conventional")


@dataclass(frozen=True)
class LoopConfig:
    """Controller and hardware parameters of the incremental loop.

    Gains in 1/s, time constants and delays in s, ``B_hat`` in plant units.
    The conventional law is the modified law with ``T_act * K_v = 1``; use
    :attr:`kv` for the gain actually applied.
    """

    K_p: float
    K_v: float
    K_r: float
    T_act: float
    B_hat: float
    tau_a: float = 0.0
    T_sensor: float = 0.0
    tau_s: float = 0.0
    T_diff: float = 0.0
    tau_am: float = 0.0
    law: str = "modified"
    pch: bool = False
    comp_filter: bool = False
    comp_sensor: bool = False

    def __post_init__(self):
        for name in ("T_act", "T_sensor", "T_diff", "tau_a", "tau_s", "tau_am"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be finite and >= 0, got {v}")
        if self.B_hat == 0:
            raise DomainError("B_hat must be nonzero")
        if not self.K_r > 0:
            raise DomainError(f"K_r must be positive, got {self.K_r}")
        if self.law not in LAWS:
            raise DomainError(f"law must be one of {LAWS}, got {self.law!r}")
        if self.law == "conventional" and self.T_act <= 0:
            raise DomainError("the conventional law needs T_act > 0")

    @property
    def kv(self) -> float:
        return 1.0 / self.T_act if self.law == "conventional" else self.K_v

    @property
    def tau1(self) -> float:
        return self.tau_a + self.tau_s

    @property
    def tau2(self) -> float:
        return self.tau_a + self.tau_am

    def replace(self, **changes) -> "LoopConfig":
        return dataclasses.replace(self, **changes)

    def is_ideal(self) -> bool:
        """Sensor, filter and measurement paths all unity, no delays."""
        return (
            self.T_sensor == 0
            and self.T_diff == 0
            and self.tau_a == 0
            and self.tau_s == 0
            and self.tau_am == 0
        )


# Desk loop for the short-period plant.  K_p, T_diff, tau_am, B_hat = CB and
# both compensations follow the reference setup; the rest are STAND-IN VALUES,
# tuned so the margins land near 22 dB / 63 deg / 0.05 s.
DESK_LOOP = dict(
    K_p=8.0, K_v=50.0, K_r=4.0, T_act=0.02, T_sensor=0.005, T_diff=1.0 / 30.0,
    tau_a=0.0, tau_s=0.0, tau_am=0.0, comp_filter=True, comp_sensor=True,
)


def desk_loop(m: PlantModel | None = None, **changes) -> LoopConfig:
    m = m or desk_plant()
    params = {**DESK_LOOP, **changes}
    params.setdefault("B_hat", m.CB)
    return LoopConfig(**params)


class Blocks(NamedTuple):
    Ga: TFExpr
    H: TFExpr
    F: TFExpr
    Gam: TFExpr


def _delayed(tau: float, *parts: TFExpr) -> TFExpr:
    items = [p for p in parts if p is not ONE]
    if tau > 0:
        items.insert(0, Delay(tau))
    if not items:
        return ONE
    return items[0] if len(items) == 1 else Product(tuple(items))


def block_tfs(cfg: LoopConfig) -> Blocks:
    """Actuator, sensor, filter and actuator-measurement transfer functions."""
    Ga = _delayed(cfg.tau_a, lag(cfg.T_act))
    H = _delayed(cfg.tau_s, lag(cfg.T_sensor))
    F = lag(cfg.T_diff)
    Gam = _delayed(
        cfg.tau_am,
        lag(cfg.T_diff) if cfg.comp_filter else ONE,
        lag(cfg.T_sensor) if cfg.comp_sensor else ONE,
    )
    return Blocks(Ga, H, F, Gam)


def plant_expr(m: PlantModel) -> TFExpr:
    return Atom(plant_tf(m))


# ---------------------------------------------------------------------------
# Scenario signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GustSpec:
    """Discrete 1-cos gust; distances in m, speeds in m/s, time in s."""

    d_x: float = 120.0
    d_z: float = 80.0
    u_m: float = 3.5
    w_m: float = 3.0
    V: float = 40.0  # implementer-chosen airspeed
    start_time: float = 3.0

    def __post_init__(self):
        if not (self.d_x > 0 and self.d_z > 0 and self.V > 0):
            raise DomainError("gust lengths and airspeed must be positive")
        if self.u_m < 0 or self.w_m < 0:
            raise DomainError("gust amplitudes must be non-negative")


def _one_minus_cos(x, length, peak):
    return np.where((x >= 0) & (x <= length), 0.5 * peak * (1 - np.cos(np.pi * x / length)), 0.0)


def gust_profile(t, g: GustSpec):
    """Horizontal and vertical gust velocity ``(u_g, w_g)`` at time ``t``.

    Zero outside ``0 <= x <= d`` where ``x = V (t - start_time)``.
    """
    x = g.V * (np.asarray(t, dtype=float) - g.start_time)
    u = _one_minus_cos(x, g.d_x, g.u_m)
    w = _one_minus_cos(x, g.d_z, g.w_m)
    if np.ndim(t) == 0:
        return float(u), float(w)
    return u, w


def command_square(t, amplitude: float, interval: float):
    """Two-way square wave: ``+amplitude`` on even intervals, ``-amplitude`` on odd."""
    if not interval > 0:
        raise DomainError("interval must be positive")
    k = np.floor(np.asarray(t, dtype=float) / interval)
    out = np.where(np.mod(k, 2) == 0, amplitude, -amplitude)
    return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class NoiseSpec:
    """White measurement noise; variance in (rad/s)^2.

    ``sample_rate`` of ``None`` draws a fresh sample every integration step.
    """

    variance: float = 4.0e-7
    seed: int = 0
    sample_rate: float | None = None

    def __post_init__(self):
        if not self.variance >= 0:
            raise DomainError("noise variance must be >= 0")

    def sequence(self, n_steps: int, dt: float) -> np.ndarray:
        """Noise value held over each integration step (zero-order hold)."""
        rng = np.random.default_rng(self.seed)
        sigma = math.sqrt(self.variance)
        if self.sample_rate is None:
            return sigma * rng.standard_normal(n_steps)
        t = np.arange(n_steps) * dt
        idx = np.floor(t * self.sample_rate + 1e-9).astype(int)
        draws = sigma * rng.standard_normal(int(idx[-1]) + 1 if n_steps else 0)
        return draws[idx]
