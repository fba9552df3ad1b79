"""Projection onto periodic signals and the seasonality + trend decomposition.

For the discount-weighted L2 inner product, the periodic part of a signal
is its averaged period tiled over the horizon.  The best fit of
``x(t) ~ p(t) + t*a`` with ``p`` periodic has the closed form computed by
:func:`decompose`.  :func:`decompose_oracle` solves the same least-squares
problem through its normal equations, as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .averaging import average_signal, average_tilde_signal, period_moment
from .signal import (
    PeriodSignal,
    Signal,
    TailPolicy,
    period_weights,
    periodic_extend,
    tail_power_sum,
    trend_signal,
    weighted_inner,
)

__all__ = [
    "ProjectionResult",
    "Decomposition",
    "DegenerateProblemError",
    "project_periodic",
    "orthogonality_residual",
    "decompose",
    "decompose_oracle",
    "decomposition_residual",
    "decomposition_energy",
]


class DegenerateProblemError(np.linalg.LinAlgError):
    """The normal equations are singular to working precision."""


@dataclass(frozen=True)
class ProjectionResult:
    period: PeriodSignal
    lifted: Signal


@dataclass(frozen=True)
class Decomposition:
    """Seasonality ``p_hat`` (one period), trend slope ``a_hat`` and ``E(p_hat, a_hat)``."""

    p_hat: PeriodSignal
    a_hat: np.ndarray
    residual_energy: float

    def seasonal(self, K: int, tail=TailPolicy.PERIODIC) -> Signal:
        return periodic_extend(self.p_hat, K).with_tail(tail)

    def trend(self, grid, tail=TailPolicy.PERIODIC) -> Signal:
        return trend_signal(grid, self.a_hat, tail)


def project_periodic(x: Signal) -> ProjectionResult:
    """Orthogonal projection of ``x`` onto the periodic signals.

    ``lifted`` is the averaged period tiled over the horizon of ``x``; it
    carries a ``PERIODIC`` tail because it is periodic by construction.
    """
    period = average_signal(x)
    return ProjectionResult(period, periodic_extend(period, x.grid.K))


def orthogonality_residual(x: Signal) -> float:
    """``max_j |sum_k q**k x(s_j + kT)|``: zero iff ``x`` is orthogonal to periodic signals."""
    return float(np.max(np.linalg.norm(period_moment(x, 0), axis=1)))


def _weight_moments(x: Signal):
    """``(B0, B1, B2)`` with ``Bp = sum_k k**p q**k`` over the periods that ``x`` covers."""
    g = x.grid
    q = g.discount.q
    if x.tail is TailPolicy.PERIODIC:
        return tuple(tail_power_sum(q, 0, p) for p in range(3))
    k = np.arange(g.K, dtype=float)
    w = q**k
    return float(w.sum()), float((k * w).sum()), float((k * k * w).sum())


def decomposition_residual(x: Signal, p_hat: PeriodSignal, a_hat) -> Signal:
    """``x - E_T(p_hat) - t*a_hat`` with the tail policy of ``x``."""
    seasonal = periodic_extend(p_hat, x.grid.K).with_tail(x.tail)
    return x - seasonal - trend_signal(x.grid, a_hat, x.tail)


def decomposition_energy(x: Signal, p_hat: PeriodSignal, a_hat) -> float:
    """``E(p, a) = int_0^inf e^{-rt} |x - p - t a|^2 dt`` (truncated for ``ZERO`` tails)."""
    res = decomposition_residual(x, p_hat, a_hat)
    return max(0.0, weighted_inner(res, res))


def decompose(x: Signal) -> Decomposition:
    """Closed-form seasonality + trend split of ``x``.

    With the infinite series (``PERIODIC`` tail) this is

        a_hat = (r/T) int_0^T e^{-rs} (Atilde x(s) - A x(s)) ds
        p_hat(s) = A x(s) - a_hat s - a_hat T q / (1 - q)

    where the integral uses the period quadrature and ``r`` is replaced by
    ``(1-q) / sum(omega)`` (identical in exact arithmetic).  Under a ``ZERO``
    tail the same derivation is applied to the K-term partial sums, so the
    result minimises the truncated objective exactly.
    """
    g = x.grid
    d = g.discount
    q = d.q
    T = d.T
    M0 = average_signal(x).values / (1 - q)
    M1 = average_tilde_signal(x).values * q / (1 - q) ** 2
    B0, B1, B2 = _weight_moments(x)
    kbar = B1 / B0
    spread = B2 - B1 * B1 / B0
    omega = period_weights(d, g.m)
    a_hat = omega @ (M1 - kbar * M0) / (T * omega.sum() * spread)
    s = g.period_times()
    p_values = M0 / B0 - (s[:, None] + T * kbar) * a_hat[None, :]
    p_hat = PeriodSignal(d, p_values)
    return Decomposition(p_hat, a_hat, decomposition_energy(x, p_hat, a_hat))


def _explicit_periods(x: Signal, eps: float = 1e-22):
    """Stored periods plus enough explicit continuation that the rest is below ``eps``."""
    g = x.grid
    q = g.discount.q
    X = x.periods()
    if x.tail is TailPolicy.ZERO:
        return X
    k_ext = g.K
    while q**k_ext * (k_ext + 1.0) ** 2 > eps:
        k_ext += 1
    offsets = np.arange(1, k_ext - g.K + 1, dtype=float)
    extra = X[-1][None] + offsets[:, None, None] * (g.discount.T * x.slope)[None, None, :]
    return np.concatenate([X, extra], axis=0)


def decompose_oracle(x: Signal, cond_max: float = 1e13) -> Decomposition:
    """Seasonality + trend split by brute-force normal equations.

    The unknowns are the ``m*n`` seasonal samples and the ``n`` slope
    components.  The Gram matrix is accumulated node by node with weights
    ``omega_j q**k``.  A ``PERIODIC`` continuation is enumerated explicitly
    period by period, with no closed-form series.

    Raises
    ------
    DegenerateProblemError
        If the normal matrix is numerically singular.
    """
    g = x.grid
    d = g.discount
    m, n = g.m, x.dim
    if m * n + n > 10**4:
        raise ValueError("too many unknowns for the dense oracle")
    X = _explicit_periods(x)
    kk = np.arange(X.shape[0], dtype=float)
    w = d.q**kk[:, None] * period_weights(d, m)[None, :]  # (k, m)
    t = kk[:, None] * d.T + g.period_times()[None, :]

    N = m * n + n
    G = np.zeros((N, N))
    rhs = np.zeros(N)
    sw = w.sum(axis=0)
    swt = (w * t).sum(axis=0)
    swtt = float((w * t * t).sum())
    for i in range(n):
        a_idx = m * n + i
        p_idx = np.arange(m) * n + i
        G[p_idx, p_idx] = sw
        G[p_idx, a_idx] = swt
        G[a_idx, p_idx] = swt
        G[a_idx, a_idx] = swtt
        rhs[p_idx] = (w * X[:, :, i]).sum(axis=0)
        rhs[a_idx] = (w * t * X[:, :, i]).sum()
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_max:
        raise DegenerateProblemError(
            f"normal matrix is near-singular (cond={cond:.3e}); check the discount/period combination"
        )
    sol = np.linalg.solve(G, rhs)
    p_hat = PeriodSignal(d, sol[: m * n].reshape(m, n))
    a_hat = sol[m * n:]
    return Decomposition(p_hat, a_hat, decomposition_energy(x, p_hat, a_hat))
