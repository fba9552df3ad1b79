"""The averaging operators and the averaged Lagrangian.

``average_signal`` folds a signal on ``[0, inf)`` onto one period with the
weights ``(1-q) q**k``; ``average_tilde_signal`` uses ``k q**k`` normalised by
``(1-q)**2/q``.  Both weight sequences sum to one over ``k >= 0``.

For a Lagrangian ``L(t, x, y)`` the same fold in ``t`` with ``(x, y)`` frozen
gives the averaged Lagrangian, which turns the discounted infinite-horizon
integral over a ``T``-periodic path into a weighted integral over one period.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .report import CheckReport, CheckResult
from .signal import (
    DiscountConfig,
    PeriodSignal,
    Signal,
    TailPolicy,
    period_lp_norm,
    tail_power_sum,
    weighted_lp_norm,
)

logger = logging.getLogger(__name__)

__all__ = [
    "AveragingParams",
    "Lagrangian",
    "AveragedLagrangian",
    "SeriesConvergenceError",
    "NormCheck",
    "period_moment",
    "average_signal",
    "average_tilde_signal",
    "operator_norm_check",
    "averaged_lagrangian",
    "averaged_lagrangian_grad",
    "structural_checks",
    "validate_gradient",
]


class SeriesConvergenceError(ArithmeticError):
    """The averaging series missed its tolerance and its terms are not shrinking."""


@dataclass(frozen=True)
class AveragingParams:
    discount: DiscountConfig
    tol: float = 1e-10
    max_terms: int = 10**6
    terms: Optional[int] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise ValueError("max_terms must be a positive integer")
        if self.terms is not None and (int(self.terms) != self.terms or not 1 <= self.terms <= self.max_terms):
            raise ValueError("terms must be an integer in [1, max_terms]")


def _params_for(s: Signal, params: Optional[AveragingParams]) -> AveragingParams:
    if params is None:
        return AveragingParams(s.grid.discount)
    if params.discount != s.grid.discount:
        raise ValueError("averaging parameters and signal use different discount settings")
    return params


def period_moment(s: Signal, power: int) -> np.ndarray:
    """``sum_k k**power q**k x(s_j + kT)`` per phase ``j``, tail included; shape ``(m, n)``.

    Only ``power`` in {0, 1}.  A ``ZERO`` tail contributes nothing; a
    ``PERIODIC`` tail is summed in closed form.
    """
    if power not in (0, 1):
        raise ValueError("power must be 0 or 1")
    g = s.grid
    q = g.discount.q
    k = np.arange(g.K, dtype=float)
    coef = q**k * k**power
    total = np.tensordot(coef, s.periods(), axes=1)
    if s.tail is TailPolicy.PERIODIC:
        A = s.periods()[-1]
        B = g.discount.T * s.slope
        Sp = tail_power_sum(q, g.K, power)
        Sp1 = tail_power_sum(q, g.K, power + 1)
        # x_k = A + (k - K + 1) B for k >= K
        total = total + Sp * A + (Sp1 - (g.K - 1) * Sp) * B[None, :]
    return total


def average_signal(s: Signal, params: Optional[AveragingParams] = None) -> PeriodSignal:
    """Averaged period ``(1-q) sum_k q**k s(. + kT)``.

    Under a ``ZERO`` tail this is the K-term partial sum; data is never
    extrapolated.
    """
    params = _params_for(s, params)
    q = params.discount.q
    if s.tail is TailPolicy.PERIODIC:
        # the weights sum to 1, so average deviations from the first period;
        # an exactly periodic signal then maps to its period bit for bit
        ref = s.periods()[0]
        shifted = Signal(s.grid, s.values - np.tile(ref, (s.grid.K, 1)), s.tail, s.slope)
        return PeriodSignal(params.discount, ref + (1 - q) * period_moment(shifted, 0))
    return PeriodSignal(params.discount, (1 - q) * period_moment(s, 0))


def average_tilde_signal(s: Signal, params: Optional[AveragingParams] = None) -> PeriodSignal:
    """k-weighted average ``((1-q)**2/q) sum_k k q**k s(. + kT)``."""
    params = _params_for(s, params)
    q = params.discount.q
    return PeriodSignal(params.discount, (1 - q) ** 2 / q * period_moment(s, 1))


@dataclass(frozen=True)
class NormCheck:
    lhs: float
    rhs: float
    ok: bool


def operator_norm_check(s: Signal, alpha: float, rel_tol: float = 1e-12) -> NormCheck:
    """Compare ``||A s||_{L^alpha(0,T)}`` with ``((1-q)/q)**(1/alpha) ||s||_{L^alpha(mu_r)}``.

    The left side is the plain Lebesgue norm on one period.  ``rel_tol``
    only absorbs rounding, since the discrete quadrature satisfies the bound
    exactly.
    """
    q = s.grid.discount.q
    lhs = period_lp_norm(average_signal(s), alpha, weighted=False)
    rhs = ((1 - q) / q) ** (1.0 / alpha) * weighted_lp_norm(s, alpha)
    return NormCheck(lhs, rhs, lhs <= rhs * (1 + rel_tol) + 1e-300)


def _points(t, x, y, dim):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim <= 1 and t.size == 1
    x = x.reshape(-1, dim)
    y = y.reshape(-1, dim)
    P = max(t.size, x.shape[0], y.shape[0])
    t = np.broadcast_to(t, (P,))
    x = np.broadcast_to(x, (P, dim))
    y = np.broadcast_to(y, (P, dim))
    return t, x, y, scalar


@dataclass(frozen=True)
class Lagrangian:
    """A running cost ``L(t, x, y)`` with optional derivatives.

    All callables are vectorised: ``t`` has shape ``(P,)``, ``x`` and ``y``
    have shape ``(P, n)``.  ``value`` returns ``(P,)``; ``grad`` returns the
    triple ``(D1 (P,), D2 (P, n), D3 (P, n))``; ``hess_yy`` returns
    ``(P, n, n)``.

    The remaining fields are optional growth data: ``c0``, ``c1``, ``alpha``
    for ``c0|y|^alpha <= L <= c1(1 + |y|^alpha)``, ``rho`` for a lower bound
    ``L >= rho(y)``, and ``growth`` for ``M(R)`` bounding ``|D2 L| + |D3 L|``
    by ``M(R)(1 + |y|^2)`` when ``|x|^2 + |y|^2 <= R^2``.
    """

    dim: int
    value: Callable
    grad: Optional[Callable] = None
    hess_yy: Optional[Callable] = None
    c0: Optional[float] = None
    c1: Optional[float] = None
    alpha: Optional[float] = None
    rho: Optional[Callable] = None
    growth: Optional[Callable] = None
    name: str = ""

    def __call__(self, t, x, y):
        t, x, y, scalar = _points(t, x, y, self.dim)
        v = np.asarray(self.value(t, x, y), dtype=float)
        return float(v[0]) if scalar else v

    def gradient(self, t, x, y):
        if self.grad is None:
            raise ValueError(f"Lagrangian {self.name!r} has no analytic gradient")
        t, x, y, scalar = _points(t, x, y, self.dim)
        d1, d2, d3 = self.grad(t, x, y)
        if scalar:
            return float(d1[0]), np.asarray(d2[0]), np.asarray(d3[0])
        return np.asarray(d1), np.asarray(d2), np.asarray(d3)


def validate_gradient(L: Lagrangian, samples: int = 50, seed: int = 0, radius: float = 2.0,
                      t_max: float = 10.0, rel_tol: float = 1e-5) -> CheckResult:
    """Compare ``L.grad`` with central differences of ``L.value`` at random points."""
    rng = np.random.default_rng(seed)
    n = L.dim
    t = rng.uniform(0, t_max, samples)
    x = rng.uniform(-radius, radius, (samples, n))
    y = rng.uniform(-radius, radius, (samples, n))
    analytic = np.concatenate([a.reshape(samples, -1) for a in L.gradient(t, x, y)], axis=1)
    z = np.concatenate([t[:, None], x, y], axis=1)
    numeric = _central_gradient(lambda zz: L.value(zz[:, 0], zz[:, 1:1 + n], zz[:, 1 + n:]), z)
    err, witness = _relative_error(analytic, numeric)
    return CheckResult("gradient_matches_finite_differences", err < rel_tol, err, rel_tol,
                       None if err < rel_tol else {"point": z[witness].tolist()})


def _central_gradient(f: Callable, z: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences of a vectorised scalar field ``f: (P, d) -> (P,)``."""
    out = np.empty_like(z)
    for i in range(z.shape[1]):
        h = rel_step * np.maximum(1.0, np.abs(z[:, i]))
        zp = z.copy()
        zm = z.copy()
        zp[:, i] += h
        zm[:, i] -= h
        out[:, i] = (f(zp) - f(zm)) / (2 * h)
    return out


def _relative_error(a: np.ndarray, b: np.ndarray):
    """Worst per-point relative error ``|a-b| / max(1, |b|)`` and its row index."""
    err = np.linalg.norm(a - b, axis=1) / np.maximum(1.0, np.linalg.norm(b, axis=1))
    i = int(np.argmax(err))
    return float(err[i]), i


class AveragedLagrangian:
    """``(s, x, y) -> (1-q) sum_k q**k L(s + kT, x, y)`` on ``s`` in ``[0, T]``.

    The series is summed in blocks of terms.  It stops once every term of
    a block satisfies ``q**k |L| < tol``.  When the base Lagrangian supplies
    ``c1`` and ``alpha``, the a-priori tail bound ``c1 (1 + |y|**alpha) q**k
    < tol`` fixes the number of terms up front.
    """

    def __init__(self, base: Lagrangian, params: AveragingParams):
        self.base = base
        self.params = params

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def discount(self) -> DiscountConfig:
        return self.params.discount

    def _a_priori_terms(self, y: np.ndarray) -> Optional[int]:
        L = self.base
        if L.c1 is None or L.alpha is None:
            return None
        q = self.discount.q
        bound = L.c1 * (1.0 + np.max(np.linalg.norm(y, axis=1)) ** L.alpha)
        if bound <= self.params.tol:
            return 1
        return int(min(self.params.max_terms, math.ceil(math.log(self.params.tol / bound) / math.log(q)) + 1))

    def _series(self, fn: Callable, t, x, y):
        """Sum ``(1-q) q**k fn(t + kT, x, y)`` where ``fn`` returns a tuple of arrays."""
        q = self.discount.q
        T = self.discount.T
        tol = self.params.tol
        max_terms = self.params.max_terms
        P = t.shape[0]
        fixed = self.params.terms if self.params.terms is not None else self._a_priori_terms(y)
        acc = None
        k0 = 0
        block = 8
        prev_peak = math.inf
        while True:
            nb = min(block, max_terms - k0)
            if fixed is not None:
                nb = min(nb, fixed - k0)
            k = np.arange(k0, k0 + nb)
            tt = (t[None, :] + T * k[:, None]).reshape(-1)
            xx = np.tile(x, (nb, 1))
            yy = np.tile(y, (nb, 1))
            parts = fn(tt, xx, yy)
            weights = q ** k.astype(float)
            terms = []
            peak = np.zeros(nb)
            for part in parts:
                arr = np.asarray(part, dtype=float).reshape((nb, P) + np.shape(part)[1:])
                w = weights.reshape((nb,) + (1,) * (arr.ndim - 1))
                weighted = w * arr
                terms.append(weighted.sum(axis=0))
                peak = np.maximum(peak, np.abs(weighted).reshape(nb, -1).max(axis=1))
            if not all(np.all(np.isfinite(tm)) for tm in terms):
                raise FloatingPointError("non-finite Lagrangian value inside the averaging series")
            acc = terms if acc is None else [a + b for a, b in zip(acc, terms)]
            k0 += nb
            if fixed is not None:
                if k0 >= fixed:
                    break
                continue
            if np.all(peak < tol):
                break
            if k0 >= max_terms:
                if not peak[-1] < prev_peak:
                    raise SeriesConvergenceError(
                        f"averaging series did not reach tol={tol} within {max_terms} terms "
                        f"and terms are not decreasing (last term {peak[-1]!r})"
                    )
                logger.warning("averaging series stopped at max_terms=%d above tol", max_terms)
                break
            prev_peak = float(peak.max())
            block = min(2 * block, 1024)
        return [(1 - q) * a for a in acc], k0

    def value(self, s, x, y, return_terms: bool = False):
        t, x, y, scalar = _points(s, x, y, self.dim)
        (val,), n_terms = self._series(lambda *a: (self.base.value(*a),), t, x, y)
        out = float(val[0]) if scalar else val
        return (out, n_terms) if return_terms else out

    __call__ = value

    def grad(self, s, x, y):
        """Gradient ``(D1, D2, D3)`` as the average of the partials of ``L``."""
        if self.base.grad is None:
            raise ValueError(f"base Lagrangian {self.base.name!r} has no gradient")
        t, x, y, scalar = _points(s, x, y, self.dim)
        (d1, d2, d3), _ = self._series(self.base.grad, t, x, y)
        if scalar:
            return float(d1[0]), d2[0], d3[0]
        return d1, d2, d3

    def hess_yy(self, s, x, y):
        if self.base.hess_yy is None:
            raise ValueError(f"base Lagrangian {self.base.name!r} has no D33")
        t, x, y, scalar = _points(s, x, y, self.dim)
        (h,), _ = self._series(lambda *a: (self.base.hess_yy(*a),), t, x, y)
        return h[0] if scalar else h

    def weight_defect(self, n_terms: int) -> float:
        """``1 - (1-q) sum_{k<n} q**k = q**n``, the mass dropped by truncation."""
        return self.discount.q ** n_terms


def averaged_lagrangian(L: Lagrangian, params: AveragingParams) -> AveragedLagrangian:
    return AveragedLagrangian(L, params)


def averaged_lagrangian_grad(AL: AveragedLagrangian) -> Callable:
    """Evaluator ``(s, x, y) -> (D1, D2, D3)`` of the averaged Lagrangian."""
    if AL.base.grad is None:
        raise ValueError(f"base Lagrangian {AL.base.name!r} has no gradient")
    return AL.grad


def _sample_points(rng, samples, dim, T, radius):
    s = rng.uniform(0, T, samples)
    x = rng.uniform(-radius, radius, (samples, dim))
    y = rng.uniform(-radius, radius, (samples, dim))
    return s, x, y


def structural_checks(AL: AveragedLagrangian, samples: int = 200, seed: int = 0,
                      radius: float = 5.0, rel_tol: float = 1e-9) -> CheckReport:
    """Monte-Carlo spot checks of convexity in ``y`` and the lower/sandwich bounds.

    Convexity is tested with the midpoint inequality on random segments.
    The ``rho`` lower bound and the ``c0``/``c1`` sandwich are tested only
    when the base Lagrangian carries the corresponding metadata.  Each
    failing check reports its worst sample as a witness.
    """
    rng = np.random.default_rng(seed)
    L = AL.base
    T = AL.discount.T
    report = CheckReport()

    s, x, y1 = _sample_points(rng, samples, L.dim, T, radius)
    y2 = rng.uniform(-radius, radius, (samples, L.dim))
    mid = AL.value(s, x, 0.5 * (y1 + y2))
    chord = 0.5 * (AL.value(s, x, y1) + AL.value(s, x, y2))
    scale = np.maximum(1.0, np.abs(chord))
    excess = (mid - chord) / scale
    i = int(np.argmax(excess))
    ok = excess[i] <= rel_tol
    report.add(CheckResult("convex_in_y", bool(ok), float(excess[i]), rel_tol,
                           None if ok else {"s": s[i], "x": x[i], "y1": y1[i], "y2": y2[i]}))

    if L.rho is not None or L.c0 is not None:
        s, x, y = _sample_points(rng, samples, L.dim, T, radius)
        val = AL.value(s, x, y)
        scale = np.maximum(1.0, np.abs(val))
        if L.rho is not None:
            gap = (np.asarray(L.rho(y)) - val) / scale
            i = int(np.argmax(gap))
            ok = gap[i] <= rel_tol
            report.add(CheckResult("lower_bound_rho", bool(ok), float(gap[i]), rel_tol,
                                   None if ok else {"s": s[i], "x": x[i], "y": y[i]}))
        if L.c0 is not None and L.alpha is not None:
            ny = np.linalg.norm(y, axis=1) ** L.alpha
            gap = (L.c0 * ny - val) / scale
            i = int(np.argmax(gap))
            ok = gap[i] <= rel_tol
            report.add(CheckResult("sandwich_lower", bool(ok), float(gap[i]), rel_tol,
                                   None if ok else {"s": s[i], "x": x[i], "y": y[i]}))
            if L.c1 is not None:
                gap = (val - L.c1 * (1 + ny)) / scale
                i = int(np.argmax(gap))
                ok = gap[i] <= rel_tol
                report.add(CheckResult("sandwich_upper", bool(ok), float(gap[i]), rel_tol,
                                       None if ok else {"s": s[i], "x": x[i], "y": y[i]}))
    return report
