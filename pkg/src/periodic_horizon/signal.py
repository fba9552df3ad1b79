"""Grids, sampled signals, discount-weighted norms and periodic extension.

Time runs over ``[0, K*T)`` sampled at ``m`` nodes per period.  Integrals
against the discount density ``exp(-r t)`` are split period by period,

    int_0^inf e^{-rt} h(t) dt = sum_k q^k int_0^T e^{-rs} h(s + kT) ds,

with ``q = exp(-r T)``, so every quadrature in this package has the product
form ``w[j + k*m] = omega[j] * q**k``.  ``omega`` integrates ``exp(-r s)``
exactly against the periodic hat functions of the period grid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "TailPolicy",
    "DiscountConfig",
    "Grid",
    "Signal",
    "PeriodSignal",
    "make_grid",
    "period_weights",
    "tail_power_sum",
    "weighted_lp_norm",
    "weighted_inner",
    "period_lp_norm",
    "sobolev_norm",
    "periodic_extend",
    "restrict_to_period",
    "finite_diff_derivative",
    "trend_signal",
]

#: largest admissible q = exp(-rT); beyond this the 1/(1-q) factors are meaningless
Q_MAX = 1.0 - 1e-8


class TailPolicy(str, enum.Enum):
    """How a stored signal continues beyond its horizon ``K*T``.

    ``ZERO``
        The signal vanishes after the horizon (finite data).
    ``PERIODIC``
        The last stored period repeats forever, shifted by ``T*slope`` each
        period.  With ``slope = 0`` the continuation is exactly periodic.
    """

    ZERO = "zero"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class DiscountConfig:
    """Discount rate ``r`` (1/time) and period ``T`` (time)."""

    r: float
    T: float

    def __post_init__(self):
        r, T = float(self.r), float(self.T)
        if not (math.isfinite(r) and math.isfinite(T)):
            raise ValueError(f"r and T must be finite, got r={r}, T={T}")
        if r <= 0 or T <= 0:
            raise ValueError(f"r and T must be positive, got r={r}, T={T}")
        if math.exp(-r * T) > Q_MAX:
            raise ValueError(
                f"degenerate discount/period: q = exp(-rT) = {math.exp(-r * T)!r} "
                f"exceeds {Q_MAX!r} (rT = {r * T!r} too small)"
            )
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "T", T)

    @property
    def q(self) -> float:
        return math.exp(-self.r * self.T)


@dataclass(frozen=True)
class Grid:
    """Uniform period-aligned grid on ``[0, K*T)``; node ``j`` sits at ``j*T/m``."""

    discount: DiscountConfig
    m: int
    K: int

    @property
    def dt(self) -> float:
        return self.discount.T / self.m

    @property
    def size(self) -> int:
        return self.m * self.K

    def times(self) -> np.ndarray:
        # j*T/m rather than j*dt so that t[j+m] - t[j] == T holds to rounding
        k, j = np.divmod(np.arange(self.size), self.m)
        return k * self.discount.T + j * self.dt

    def period_times(self) -> np.ndarray:
        return np.arange(self.m) * self.dt


def make_grid(discount: DiscountConfig, m: int, K: int) -> Grid:
    """Build a :class:`Grid` with ``m >= 2`` samples per period and ``K >= 1`` periods."""
    if not isinstance(discount, DiscountConfig):
        raise TypeError("discount must be a DiscountConfig")
    if int(m) != m or m < 2:
        raise ValueError(f"m must be an integer >= 2, got {m!r}")
    if int(K) != K or K < 1:
        raise ValueError(f"K must be an integer >= 1, got {K!r}")
    return Grid(discount, int(m), int(K))


def _as_samples(values, length=None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"samples must have shape (N,) or (N, n), got {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"expected {length} samples, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Signal:
    """R^n-valued samples on a :class:`Grid`, one row per node.

    Parameters
    ----------
    grid : Grid
    values : array_like, shape (m*K,) or (m*K, n)
    tail : TailPolicy
        Continuation beyond the stored horizon.
    slope : array_like, shape (n,), optional
        Per-period drift of the ``PERIODIC`` continuation, in units of
        value per time.  Must be zero for ``ZERO`` tails.
    """

    grid: Grid
    values: np.ndarray
    tail: TailPolicy = TailPolicy.ZERO
    slope: np.ndarray = field(default=None)

    def __post_init__(self):
        values = _as_samples(self.values, self.grid.size)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tail", TailPolicy(self.tail))
        if self.slope is None:
            slope = np.zeros(values.shape[1])
        else:
            slope = np.array(self.slope, dtype=float).reshape(-1)
            if slope.shape != (values.shape[1],) or not np.all(np.isfinite(slope)):
                raise ValueError("slope must be a finite vector of length dim")
        if self.tail is TailPolicy.ZERO and np.any(slope != 0):
            raise ValueError("a ZERO tail cannot carry a nonzero slope")
        slope.setflags(write=False)
        object.__setattr__(self, "slope", slope)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, tail=TailPolicy.ZERO, slope=None) -> "Signal":
        """Sample ``f(t)`` (vectorised over a 1-D time array) on ``grid``."""
        return cls(grid, f(grid.times()), tail, slope)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def discount(self) -> DiscountConfig:
        return self.grid.discount

    def periods(self) -> np.ndarray:
        """Values reshaped to ``(K, m, n)``."""
        g = self.grid
        return self.values.reshape(g.K, g.m, self.dim)

    def with_tail(self, tail, slope=None) -> "Signal":
        return Signal(self.grid, self.values, tail, slope)

    def _check_compatible(self, other: "Signal"):
        if not isinstance(other, Signal):
            raise TypeError(f"cannot combine Signal with {type(other).__name__}")
        if other.grid != self.grid or other.dim != self.dim:
            raise ValueError("signals live on different grids or dimensions")
        if other.tail is not self.tail:
            raise ValueError(f"tail policies differ: {self.tail.value} vs {other.tail.value}")

    def __add__(self, other: "Signal") -> "Signal":
        self._check_compatible(other)
        return Signal(self.grid, self.values + other.values, self.tail, self.slope + other.slope)

    def __sub__(self, other: "Signal") -> "Signal":
        self._check_compatible(other)
        return Signal(self.grid, self.values - other.values, self.tail, self.slope - other.slope)

    def __mul__(self, c: float) -> "Signal":
        c = float(c)
        return Signal(self.grid, c * self.values, self.tail, c * self.slope)

    __rmul__ = __mul__

    def __neg__(self) -> "Signal":
        return -1.0 * self


@dataclass(frozen=True, eq=False)
class PeriodSignal:
    """R^n-valued samples on one period ``[0, T)``; the point ``T`` is not stored."""

    discount: DiscountConfig
    values: np.ndarray

    def __post_init__(self):
        values = _as_samples(self.values)
        if values.shape[0] < 2:
            raise ValueError("a period needs at least 2 samples")
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return self.discount.T / self.m

    def times(self) -> np.ndarray:
        return np.arange(self.m) * self.dt


def period_weights(discount: DiscountConfig, m: int, weighted: bool = True) -> np.ndarray:
    """Quadrature weights of one period, ``sum_j w[j] f(s_j) ~ int_0^T w(s) f(s) ds``.

    Each weight is the exact integral of ``exp(-r s)`` (or of 1 when
    ``weighted`` is false) against the periodic hat function of node ``j``,
    i.e. the trapezoid rule for a piecewise-linear periodic signal.  The
    weights sum to ``(1 - exp(-rT))/r`` exactly in the weighted case.
    """
    dt = discount.T / m
    if not weighted:
        return np.full(m, dt)
    h = discount.r * dt
    if h < 1e-3:
        # Taylor branches: the closed forms lose digits to cancellation here
        right = 0.5 - h / 6 + h**2 / 24 - h**3 / 120 + h**4 / 720
        left = 0.5 + h / 6 + h**2 / 24 + h**3 / 120 + h**4 / 720
    else:
        right = (h + math.expm1(-h)) / h**2
        left = (math.expm1(h) - h) / h**2
    s = np.arange(m) * dt
    w = dt * np.exp(-discount.r * s) * (left + right)
    # node 0: right half-hat at 0, left half-hat at T folded back by periodicity
    w[0] = dt * (right + discount.q * left)
    return w


def tail_power_sum(q: float, K: int, p: int) -> float:
    """Closed form of ``sum_{k >= K} k**p * q**k`` for ``p`` in {0, 1, 2}."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    one = 1.0 - q
    head = q**K
    if p == 0:
        return head / one
    if p == 1:
        return head * (K * one + q) / one**2
    if p == 2:
        return head * (K**2 * one**2 + 2 * K * q * one + q * (1 + q)) / one**3
    raise ValueError("only p in {0, 1, 2} is supported")


def _tail_parts(s: Signal):
    """Return ``(A, B)`` with the continuation ``x_{K-1+i} = A + i*B`` for ``i >= 1``."""
    A = s.periods()[-1]
    B = np.broadcast_to(s.grid.discount.T * s.slope, A.shape)
    return A, B


def _tail_sum_numeric(h: Callable[[np.ndarray], np.ndarray], q: float, K: int) -> float:
    """``sum_{i >= 1} q**(K-1+i) * h(i)`` summed in blocks until negligible.

    ``h`` maps an integer array of offsets ``i`` to nonnegative contributions.
    """
    total = 0.0
    block = 64
    start = 1
    for _ in range(100000):
        i = np.arange(start, start + block)
        part = float(np.sum(q ** (K - 1 + i) * h(i)))
        total += part
        if part <= 1e-17 * total or part == 0.0 and start > 1:
            return total
        start += block
    raise ArithmeticError("tail series failed to converge")


def _resolve_tail(s: Signal, tail) -> TailPolicy:
    return s.tail if tail is None else TailPolicy(tail)


def weighted_lp_norm(s: Signal, alpha: float, tail=None) -> float:
    """Discount-weighted L^alpha norm ``(int_0^inf e^{-rt} |s(t)|^alpha dt)^(1/alpha)``.

    Parameters
    ----------
    s : Signal
    alpha : float
        Norm order, ``alpha >= 1``.
    tail : TailPolicy or str, optional
        Overrides ``s.tail``.  ``ZERO`` integrates the stored horizon only;
        ``PERIODIC`` adds the continuation in closed form (numerically
        summed when ``slope != 0`` and ``alpha != 2``).
    """
    alpha = float(alpha)
    if not alpha >= 1:
        raise ValueError(f"norm order must be >= 1, got {alpha}")
    tail = _resolve_tail(s, tail)
    g = s.grid
    q = g.discount.q
    omega = period_weights(g.discount, g.m)
    mag = np.linalg.norm(s.periods(), axis=2) ** alpha  # (K, m)
    total = float(np.sum(q ** np.arange(g.K) * (mag @ omega)))
    if tail is TailPolicy.PERIODIC:
        A, B = _tail_parts(s)
        if not np.any(B):
            total += tail_power_sum(q, g.K, 0) * float(omega @ np.linalg.norm(A, axis=1) ** alpha)
        elif alpha == 2.0:
            total += q ** (g.K - 1) * float(
                omega
                @ (
                    tail_power_sum(q, 1, 0) * np.sum(A * A, axis=1)
                    + 2 * tail_power_sum(q, 1, 1) * np.sum(A * B, axis=1)
                    + tail_power_sum(q, 1, 2) * np.sum(B * B, axis=1)
                )
            )
        else:
            def h(i):
                vals = A[None] + i[:, None, None] * B[None]
                return np.linalg.norm(vals, axis=2) ** alpha @ omega

            total += _tail_sum_numeric(h, q, g.K)
    return total ** (1.0 / alpha)


def weighted_inner(f: Signal, g: Signal) -> float:
    """``int_0^inf e^{-rt} f(t).g(t) dt`` with the shared tail policy of ``f`` and ``g``."""
    f._check_compatible(g)
    grid = f.grid
    q = grid.discount.q
    omega = period_weights(grid.discount, grid.m)
    dots = np.sum(f.periods() * g.periods(), axis=2)  # (K, m)
    total = float(np.sum(q ** np.arange(grid.K) * (dots @ omega)))
    if f.tail is TailPolicy.PERIODIC:
        Af, Bf = _tail_parts(f)
        Ag, Bg = _tail_parts(g)
        total += q ** (grid.K - 1) * float(
            omega
            @ (
                tail_power_sum(q, 1, 0) * np.sum(Af * Ag, axis=1)
                + tail_power_sum(q, 1, 1) * np.sum(Af * Bg + Bf * Ag, axis=1)
                + tail_power_sum(q, 1, 2) * np.sum(Bf * Bg, axis=1)
            )
        )
    return total


def period_lp_norm(p: PeriodSignal, alpha: float, weighted: bool = True) -> float:
    """L^alpha norm over ``[0, T)``, discount-weighted or plain Lebesgue."""
    alpha = float(alpha)
    if not alpha >= 1:
        raise ValueError(f"norm order must be >= 1, got {alpha}")
    w = period_weights(p.discount, p.m, weighted)
    return float(w @ np.linalg.norm(p.values, axis=1) ** alpha) ** (1.0 / alpha)


def sobolev_norm(s: Signal, alpha: float, tail=None) -> float:
    """Weighted W^{1,alpha} norm ``(||s||^alpha + ||s'||^alpha)^(1/alpha)``."""
    tail = _resolve_tail(s, tail)
    ds = finite_diff_derivative(s)
    ds = ds.with_tail(tail, None)
    base = weighted_lp_norm(s, alpha, tail)
    return (base**alpha + weighted_lp_norm(ds, alpha) ** alpha) ** (1.0 / alpha)


def periodic_extend(p: PeriodSignal, K: int) -> Signal:
    """Tile one period over ``K`` periods; the result carries a ``PERIODIC`` tail."""
    if int(K) != K or K < 1:
        raise ValueError(f"K must be an integer >= 1, got {K!r}")
    grid = make_grid(p.discount, p.m, int(K))
    return Signal(grid, np.tile(p.values, (int(K), 1)), TailPolicy.PERIODIC)


def restrict_to_period(s: Signal) -> PeriodSignal:
    return PeriodSignal(s.grid.discount, s.values[: s.grid.m])


def _diff(values: np.ndarray, dt: float) -> np.ndarray:
    if values.shape[0] < 3:
        raise ValueError("finite differences need at least 3 samples")
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2 * dt)
    d[0] = (-3 * values[0] + 4 * values[1] - values[2]) / (2 * dt)
    d[-1] = (3 * values[-1] - 4 * values[-2] + values[-3]) / (2 * dt)
    return d


def finite_diff_derivative(s: Union[Signal, PeriodSignal]):
    """Second-order finite-difference derivative (central inside, one-sided at the ends)."""
    if isinstance(s, Signal):
        return Signal(s.grid, _diff(s.values, s.grid.dt), s.tail)
    if isinstance(s, PeriodSignal):
        return PeriodSignal(s.discount, _diff(s.values, s.dt))
    raise TypeError(f"expected Signal or PeriodSignal, got {type(s).__name__}")


def trend_signal(grid: Grid, a, tail=TailPolicy.ZERO) -> Signal:
    """The pure trend ``t -> t*a``; with a ``PERIODIC`` tail it continues exactly."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    tail = TailPolicy(tail)
    values = grid.times()[:, None] * a[None, :]
    return Signal(grid, values, tail, a if tail is TailPolicy.PERIODIC else None)
