"""Polynomial and transfer-function algebra.

Polynomials store coefficients in ascending powers of ``s``.  Transfer
functions are small expression trees (:class:`TFExpr`) so that pure
transport delays can be evaluated exactly on the imaginary axis and only
replaced by a second-order Padé approximant when a rational form is needed
for root-based analysis.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "SingularEvaluationError",
    "NumericalFailure",
    "Polynomial",
    "Rational",
    "TFExpr",
    "Atom",
    "Delay",
    "Scale",
    "Sum",
    "Product",
    "Feedback",
    "FrequencyResponse",
    "RouthResult",
    "S",
    "ONE",
    "pade2",
    "eval_exact",
    "evaluate",
    "rationalize",
    "poly_roots",
    "routh_stable",
    "freq_response",
    "lag",
]

_EPS = np.finfo(float).eps


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularEvaluationError(ZeroDivisionError):
    """A transfer function was evaluated on one of its poles."""

    def __init__(self, omega, message="singular evaluation"):
        super().__init__(f"{message} at omega={omega!r} rad/s")
        self.omega = omega


class NumericalFailure(ArithmeticError):
    """An iterative numerical method did not reach its accuracy target."""


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------


def _trim(coeffs) -> tuple[float, ...]:
    c = [float(v) for v in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    if not c:
        c = [0.0]
    return tuple(c)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial, coefficients in ascending powers of ``s``.

    Trailing (highest-power) zeros are trimmed on construction, so
    ``Polynomial([1, 2, 0])`` is ``1 + 2 s``.  The zero polynomial is stored
    as ``(0.0,)``.
    """

    coefficients: tuple[float, ...]

    def __init__(self, coefficients: Sequence[float]):
        c = _trim(coefficients)
        if not all(math.isfinite(v) for v in c):
            raise ArithmeticError(f"non-finite polynomial coefficient in {c}")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls([value])

    @classmethod
    def from_descending(cls, coeffs: Sequence[float]) -> "Polynomial":
        return cls(list(coeffs)[::-1])

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading(self) -> float:
        return self.coefficients[-1]

    def is_zero(self) -> bool:
        return self.coefficients == (0.0,)

    def descending(self) -> np.ndarray:
        return np.array(self.coefficients[::-1])

    def __call__(self, s):
        acc = 0.0 * s
        for a in reversed(self.coefficients):
            acc = acc * s + a
        return acc

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other)
        a, b = self.coefficients, other.coefficients
        n = max(len(a), len(b))
        return Polynomial(
            [(a[i] if i < len(a) else 0.0) + (b[i] if i < len(b) else 0.0) for i in range(n)]
        )

    __radd__ = __add__

    def __neg__(self):
        return Polynomial([-v for v in self.coefficients])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial([v * float(other) for v in self.coefficients])
        return Polynomial(np.convolve(self.coefficients, other.coefficients))

    __rmul__ = __mul__

    def derivative(self) -> "Polynomial":
        c = self.coefficients
        return Polynomial([k * c[k] for k in range(1, len(c))] or [0.0])

    def __repr__(self):
        return f"Polynomial({list(self.coefficients)})"


S = Polynomial([0.0, 1.0])


@dataclass(frozen=True)
class Rational:
    """Ratio of two polynomials; no cancellation is ever performed."""

    numerator: Polynomial
    denominator: Polynomial = field(default_factory=lambda: Polynomial([1.0]))

    def __post_init__(self):
        if not isinstance(self.numerator, Polynomial):
            object.__setattr__(self, "numerator", Polynomial(self.numerator))
        if not isinstance(self.denominator, Polynomial):
            object.__setattr__(self, "denominator", Polynomial(self.denominator))
        if self.denominator.is_zero():
            raise DomainError("rational function with zero denominator")

    def __call__(self, s):
        return self.numerator(s) / self.denominator(s)

    def __add__(self, other: "Rational") -> "Rational":
        return Rational(
            self.numerator * other.denominator + other.numerator * self.denominator,
            self.denominator * other.denominator,
        )

    def __mul__(self, other: "Rational") -> "Rational":
        return Rational(self.numerator * other.numerator, self.denominator * other.denominator)

    def scaled(self, k: float) -> "Rational":
        return Rational(self.numerator * k, self.denominator)

    def feedback(self, loop: "Rational") -> "Rational":
        """Closed loop ``self / (1 + self * loop)``."""
        return Rational(
            self.numerator * loop.denominator,
            self.denominator * loop.denominator + self.numerator * loop.numerator,
        )

    def dc_gain(self) -> float:
        return self.numerator.coefficients[0] / self.denominator.coefficients[0]


# ---------------------------------------------------------------------------
# Expression trees
# ---------------------------------------------------------------------------


class TFExpr:
    """Base class of transfer-function expression nodes.

    Operators build new trees: ``a * b`` is a :class:`Product`, ``a + b`` a
    :class:`Sum`, ``-a`` scales by -1.  Nodes are immutable.
    """

    def _eval(self, s):
        raise NotImplementedError

    def _rational(self) -> Rational:
        raise NotImplementedError

    def __call__(self, s):
        return evaluate(self, s)

    def __mul__(self, other):
        return Product((self, _as_expr(other)))

    def __rmul__(self, other):
        return Product((_as_expr(other), self))

    def __add__(self, other):
        return Sum((self, _as_expr(other)))

    def __radd__(self, other):
        return Sum((_as_expr(other), self))

    def __neg__(self):
        return Product((Scale(-1.0), self))

    def __sub__(self, other):
        return Sum((self, -_as_expr(other)))

    def __rsub__(self, other):
        return Sum((_as_expr(other), -self))


def _as_expr(x) -> TFExpr:
    if isinstance(x, TFExpr):
        return x
    if isinstance(x, Rational):
        return Atom(x)
    if isinstance(x, Polynomial):
        return Atom(Rational(x))
    return Scale(float(x))


def _checked_div(num, den, where):
    den = np.asarray(den)
    bad = den == 0
    if np.any(bad):
        s_bad = np.asarray(where)[bad].flat[0] if np.ndim(where) else where
        raise SingularEvaluationError(complex(s_bad).imag)
    out = np.asarray(num) / den
    return out if out.ndim else out[()]


@dataclass(frozen=True, eq=False)
class Atom(TFExpr):
    rational: Rational

    def _eval(self, s):
        return _checked_div(self.rational.numerator(s), self.rational.denominator(s), s)

    def _rational(self):
        return self.rational


@dataclass(frozen=True, eq=False)
class Delay(TFExpr):
    tau: float

    def __post_init__(self):
        if not self.tau >= 0:
            raise DomainError(f"delay must be non-negative, got {self.tau}")

    def _eval(self, s):
        return np.exp(-s * self.tau)

    def _rational(self):
        return pade2(self.tau)


@dataclass(frozen=True, eq=False)
class Scale(TFExpr):
    gain: float

    def _eval(self, s):
        return self.gain + 0.0 * s

    def _rational(self):
        return Rational(Polynomial([self.gain]))


@dataclass(frozen=True, eq=False)
class Sum(TFExpr):
    children: tuple[TFExpr, ...]

    def _eval(self, s):
        acc = 0.0 * s
        for c in self.children:
            acc = acc + c._eval(s)
        return acc

    def _rational(self):
        out = Rational(Polynomial([0.0]))
        for c in self.children:
            out = out + c._rational()
        return out


@dataclass(frozen=True, eq=False)
class Product(TFExpr):
    children: tuple[TFExpr, ...]

    def _eval(self, s):
        acc = 1.0 + 0.0 * s
        for c in self.children:
            acc = acc * c._eval(s)
        return acc

    def _rational(self):
        out = Rational(Polynomial([1.0]))
        for c in self.children:
            out = out * c._rational()
        return out


@dataclass(frozen=True, eq=False)
class Feedback(TFExpr):
    """Negative feedback ``forward / (1 + forward * loop)``."""

    forward: TFExpr
    loop: TFExpr

    def _eval(self, s):
        g = self.forward._eval(s)
        return _checked_div(g, 1.0 + g * self.loop._eval(s), s)

    def _rational(self):
        return self.forward._rational().feedback(self.loop._rational())


ONE = Scale(1.0)


def lag(time_constant: float) -> TFExpr:
    """First-order lag ``1/(T s + 1)``; unity when ``T == 0``."""
    if time_constant < 0:
        raise DomainError(f"time constant must be non-negative, got {time_constant}")
    if time_constant == 0:
        return ONE
    return Atom(Rational(Polynomial([1.0]), Polynomial([1.0, time_constant])))


def pade2(tau: float) -> Rational:
    """Second-order Padé approximant of ``exp(-tau s)``."""
    if not tau >= 0:
        raise DomainError(f"delay must be non-negative, got {tau}")
    if tau == 0:
        return Rational(Polynomial([1.0]), Polynomial([1.0]))
    return Rational(
        Polynomial([12.0, -6.0 * tau, tau * tau]),
        Polynomial([12.0, 6.0 * tau, tau * tau]),
    )


def evaluate(expr: TFExpr, s):
    """Evaluate ``expr`` at complex ``s`` (scalar or array); delays are exact."""
    s = np.asarray(s, dtype=complex)
    out = expr._eval(s)
    return complex(out) if np.ndim(out) == 0 else out


def eval_exact(expr: TFExpr, omega: float) -> complex:
    """Evaluate ``expr(j omega)`` with ``exp(-j omega tau)`` for every delay."""
    if not omega > 0:
        raise DomainError(f"omega must be positive, got {omega}")
    return evaluate(expr, 1j * omega)


def rationalize(expr: TFExpr) -> Rational:
    """Collapse ``expr`` into one :class:`Rational`.

    Delays become :func:`pade2`; products, sums and feedback loops are
    multiplied out without any common-factor cancellation.
    """
    return expr._rational()


# ---------------------------------------------------------------------------
# Roots and Routh
# ---------------------------------------------------------------------------


def _initial_guesses(c: np.ndarray) -> np.ndarray:
    """Starting points from the upper convex hull of ``(k, log|a_k|)``."""
    n = len(c) - 1
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(c))
    hull: list[int] = []
    for k in range(n + 1):
        if not np.isfinite(logs[k]):
            continue
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j if it lies on or below the segment i -> k
            if (logs[j] - logs[i]) * (k - i) <= (logs[k] - logs[i]) * (j - i):
                hull.pop()
            else:
                break
        hull.append(k)
    z = []
    sigma = 0.7
    for i, j in zip(hull[:-1], hull[1:]):
        m = j - i
        radius = math.exp((logs[i] - logs[j]) / m)
        for q in range(m):
            angle = 2 * math.pi * q / m + 2 * math.pi * i / n + sigma
            z.append(radius * cmath.exp(1j * angle))
    return np.array(z, dtype=complex)


def _horner(c_desc: np.ndarray, z: np.ndarray):
    p = np.full_like(z, c_desc[0])
    dp = np.zeros_like(z)
    for a in c_desc[1:]:
        dp = dp * z + p
        p = p * z + a
    return p, dp


def poly_roots(p: Polynomial, *, max_iter: int = 200) -> np.ndarray:
    """All complex roots of ``p`` by Aberth-Ehrlich simultaneous iteration.

    Roots are accepted when the scaled residual
    ``|p(z)| / (max|a_k| * max(1, |z|)**deg)`` is below ``1e-8``.

    Raises
    ------
    DomainError
        For the zero polynomial or a constant.
    NumericalFailure
        If the residual bound is not met after ``max_iter`` iterations.
    """
    if p.is_zero():
        raise DomainError("roots of the zero polynomial are undefined")
    n = p.degree
    if n < 1:
        raise DomainError("polynomial of degree 0 has no roots")
    c = np.array(p.coefficients, dtype=float)
    n_zero = int(np.argmax(c != 0.0))
    c = c[n_zero:]
    zero_roots = np.zeros(n_zero, dtype=complex)
    m = len(c) - 1
    if m == 0:
        return zero_roots
    c = c / c[-1]
    if m == 1:
        return np.concatenate([zero_roots, np.array([-c[0] + 0j])])

    c_desc = c[::-1].astype(complex)
    abs_desc = np.abs(c[::-1])
    z = _initial_guesses(c)
    active = np.ones(m, dtype=bool)
    for _ in range(max_iter):
        pz, dpz = _horner(c_desc, z)
        bound = 4 * _EPS * np.polyval(abs_desc, np.abs(z))
        active &= np.abs(pz) > bound
        if not active.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            recip = (1.0 / diff).sum(axis=1)
            ratio = pz / dpz
            w = ratio / (1.0 - ratio * recip)
        w = np.where(active & np.isfinite(w), w, 0.0)
        z = z - w

    z = _merge_clusters(c_desc, z)
    roots = np.concatenate([zero_roots, z])
    _check_residual(p, roots)
    return roots


def _merge_clusters(c_desc, z, rel=1e-6):
    # multiple roots only resolve to ~sqrt(eps); their centroid is accurate
    z = z.copy()
    seen = np.zeros(len(z), dtype=bool)
    for i in range(len(z)):
        if seen[i]:
            continue
        near = np.abs(z - z[i]) <= rel * max(1.0, abs(z[i]))
        near &= ~seen
        seen |= near
        if near.sum() < 2:
            continue
        centre = z[near].mean()
        before = np.abs(np.polyval(c_desc, z[near])).max()
        after = abs(np.polyval(c_desc, centre))
        if after <= before:
            z[near] = centre
    return z


def _check_residual(p: Polynomial, roots: np.ndarray, tol: float = 1e-8):
    scale = max(abs(v) for v in p.coefficients)
    mag = np.maximum(1.0, np.abs(roots)) ** p.degree
    resid = np.abs(p(roots)) / (scale * mag)
    if not np.all(resid < tol):
        raise NumericalFailure(
            f"root residual {resid.max():.3e} exceeds {tol:g} for {p!r}"
        )


class RouthResult(NamedTuple):
    stable: bool
    first_column: list[float]
    boundary_suspect: bool


def routh_stable(p: Polynomial, *, tol: float = 0.0) -> RouthResult:
    """Routh-Hurwitz test for strict left-half-plane stability.

    A zero pivot is replaced by ``1e-12`` times the largest first-column
    magnitude so far, and a vanishing row (roots symmetric about the origin,
    e.g. on the imaginary axis) makes the verdict unstable.  Either event
    sets ``boundary_suspect``.
    """
    if p.is_zero() or p.degree < 1:
        raise DomainError("Routh test needs a polynomial of degree >= 1")
    c = list(p.coefficients[::-1])
    if c[0] < 0:
        c = [-v for v in c]
    n = len(c) - 1
    width = n // 2 + 1
    rows = [
        np.array(c[0::2] + [0.0] * (width - len(c[0::2]))),
        np.array(c[1::2] + [0.0] * (width - len(c[1::2]))),
    ]
    suspect = False
    degenerate = False
    first = [rows[0][0], rows[1][0]]
    for _ in range(n - 1):
        upper, lower = rows[-2], rows[-1]
        if np.all(lower == 0.0):
            # vanishing row: continue with the auxiliary polynomial derivative
            suspect = degenerate = True
            order = n - len(rows) + 2
            lower = np.array(
                [upper[k] * (order - 2 * k) for k in range(width)], dtype=float
            )
            rows[-1] = lower
            first[-1] = lower[0]
        pivot = lower[0]
        if pivot == 0.0:
            suspect = True
            pivot = 1e-12 * max(abs(v) for v in first)
            lower = lower.copy()
            lower[0] = pivot
            rows[-1] = lower
            first[-1] = pivot
        new = np.zeros(width)
        for k in range(width - 1):
            new[k] = (pivot * upper[k + 1] - upper[0] * lower[k + 1]) / pivot
        rows.append(new)
        first.append(new[0])
    first = [float(v) for v in first[: n + 1]]
    stable = (not degenerate) and all(v > tol for v in first)
    return RouthResult(stable, first, suspect)


# ---------------------------------------------------------------------------
# Frequency response
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyResponse:
    frequencies: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if w.shape != v.shape:
            raise ValueError("frequency and value arrays differ in length")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise DomainError("frequencies must be positive and strictly increasing")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "values", v)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def magnitude_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20 * np.log10(self.magnitude)

    @property
    def phase(self) -> np.ndarray:
        """Unwrapped phase in radians."""
        return np.unwrap(np.angle(self.values))

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(self.phase)


def freq_response(expr: TFExpr, omegas) -> FrequencyResponse:
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or np.any(omegas <= 0) or np.any(np.diff(omegas) <= 0):
        raise DomainError("omegas must be positive and strictly increasing")
    return FrequencyResponse(omegas, evaluate(expr, 1j * omegas))
