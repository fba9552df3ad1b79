"""Seeded invariant checks run by ``periodic-horizon verify``.

Every check builds its own random fixtures from a seed and returns a
:class:`~periodic_horizon.report.CheckResult` with the worst measured value
and, on failure, the offending fixture.
"""

from __future__ import annotations

import numpy as np

from . import lagrangians
from .averaging import AveragingParams, _central_gradient, _relative_error, averaged_lagrangian, operator_norm_check
from .projection import decompose, decompose_oracle, orthogonality_residual, project_periodic
from .report import CheckReport, CheckResult
from .signal import (
    DiscountConfig,
    PeriodSignal,
    Signal,
    TailPolicy,
    make_grid,
    period_lp_norm,
    periodic_extend,
    trend_signal,
    weighted_inner,
    weighted_lp_norm,
)
from .variational import Trajectory, lift_solution, objective_value, reduce_problem

__all__ = [
    "random_period",
    "random_signal",
    "random_trajectory",
    "check_extension_norm",
    "check_averaging_bound",
    "check_projection",
    "check_decomposition",
    "check_trend_fixtures",
    "check_reduction_identity",
    "check_gradient_passthrough",
    "run_suite",
]


def random_period(rng, discount: DiscountConfig, m: int, n: int = 1) -> PeriodSignal:
    """Smooth random period: a few Fourier modes plus a little noise."""
    s = np.arange(m) / m
    vals = rng.normal(size=(1, n)) + 0.05 * rng.normal(size=(m, n))
    for k in range(1, 4):
        a, b = rng.normal(size=(2, n)) / k
        vals = vals + a * np.cos(2 * np.pi * k * s)[:, None] + b * np.sin(2 * np.pi * k * s)[:, None]
    return PeriodSignal(discount, vals)


def random_signal(rng, discount: DiscountConfig, m: int, K: int, n: int = 1, tail=TailPolicy.ZERO,
                  slope: bool = False) -> Signal:
    """Random multi-period signal; a ``PERIODIC`` tail may carry a random drift."""
    grid = make_grid(discount, m, K)
    tail = TailPolicy(tail)
    drift = rng.normal(size=n) if slope and tail is TailPolicy.PERIODIC else None
    return Signal(grid, rng.normal(size=(m * K, n)), tail, drift)


def random_trajectory(rng, discount: DiscountConfig, m: int, n: int = 1, eta=None) -> Trajectory:
    """Smooth random closed path with ``u_0 = u_m = eta``."""
    eta = rng.normal(size=n) if eta is None else np.atleast_1d(np.asarray(eta, dtype=float))
    s = np.arange(m + 1) / m
    u = np.tile(eta, (m + 1, 1))
    for k in range(1, 4):
        u = u + (rng.normal(size=n) / k)[None, :] * np.sin(np.pi * k * s)[:, None]
    u[0] = eta
    u[-1] = eta
    return Trajectory(discount, u, eta)


def check_extension_norm(discount, seed=0, count=50, m=64, alphas=(1.0, 2.0)) -> CheckResult:
    """``||E_T p|| = (1-q)^(-1/alpha) ||p||_{[0,T)}`` for random periods."""
    rng = np.random.default_rng(seed)
    q = discount.q
    tol = 10 * discount.T / m
    worst, witness = 0.0, None
    for i in range(count):
        p = random_period(rng, discount, m, n=1 + i % 2)
        for alpha in alphas:
            lhs = weighted_lp_norm(periodic_extend(p, 2), alpha)
            rhs = (1 - q) ** (-1 / alpha) * period_lp_norm(p, alpha)
            err = abs(lhs - rhs) / rhs
            if err > worst:
                worst, witness = err, {"fixture": i, "alpha": alpha, "lhs": lhs, "rhs": rhs}
    ok = worst < tol
    return CheckResult("extension_norm_identity", ok, worst, tol, None if ok else witness)


def check_averaging_bound(discount, seed=0, count=100, m=32, K=4, alphas=(1.0, 2.0, 3.0)) -> CheckResult:
    """The averaging operator bound on random signals of both tail kinds; value = violations."""
    rng = np.random.default_rng(seed)
    violations, witness, margin = 0, None, np.inf
    for i in range(count):
        tail = TailPolicy.PERIODIC if i % 2 else TailPolicy.ZERO
        x = random_signal(rng, discount, m, K, n=1 + i % 3, tail=tail, slope=i % 4 == 1)
        for alpha in alphas:
            res = operator_norm_check(x, alpha)
            margin = min(margin, res.rhs - res.lhs)
            if not res.ok:
                violations += 1
                witness = witness or {"fixture": i, "alpha": alpha, "lhs": res.lhs, "rhs": res.rhs}
    return CheckResult("averaging_bound", violations == 0, float(violations), 0.0, witness,
                       note=f"smallest margin rhs-lhs = {margin!r}")


def check_projection(discount, seed=0, count=20, m=64, K=3) -> CheckReport:
    """Idempotence (ulps), Pythagoras (relative) and orthogonality of the residual."""
    rng = np.random.default_rng(seed)
    ulps, pyth, orth = 0.0, 0.0, 0.0
    w_ulps = w_pyth = w_orth = None
    for i in range(count):
        x = random_signal(rng, discount, m, K, n=1 + i % 2, tail=TailPolicy.PERIODIC)
        px = project_periodic(x).lifted
        ppx = project_periodic(px).lifted
        u = float(np.max(np.abs(ppx.values - px.values) / np.spacing(np.abs(px.values))))
        if u > ulps:
            ulps, w_ulps = u, {"fixture": i}
        res = x - px
        nx = weighted_inner(x, x)
        e = abs(nx - weighted_inner(px, px) - weighted_inner(res, res)) / nx
        if e > pyth:
            pyth, w_pyth = e, {"fixture": i}
        scale = float(np.max(np.abs(x.values)))
        o = orthogonality_residual(res) / scale
        if o > orth:
            orth, w_orth = o, {"fixture": i}
    tol_p = 10 * discount.T / m
    report = CheckReport()
    report.add(CheckResult("projection_idempotence_ulps", ulps <= 1, ulps, 1.0, None if ulps <= 1 else w_ulps))
    report.add(CheckResult("projection_pythagoras", pyth < tol_p, pyth, tol_p, None if pyth < tol_p else w_pyth))
    report.add(CheckResult("projection_orthogonality", orth < 1e-10, orth, 1e-10, None if orth < 1e-10 else w_orth))
    return report


def check_decomposition(discount, seed=0, count=50) -> CheckResult:
    """Closed-form decomposition against the normal-equations oracle."""
    rng = np.random.default_rng(seed)
    ms, ns = (4, 8, 16), (1, 2, 3)
    worst, witness = 0.0, None
    for i in range(count):
        m, n = ms[i % 3], ns[(i // 3) % 3]
        tail = TailPolicy.PERIODIC if i % 2 else TailPolicy.ZERO
        x = random_signal(rng, discount, m, 3 + i % 4, n, tail=tail, slope=True)
        a, b = decompose(x), decompose_oracle(x)
        scale = max(1.0, float(np.max(np.abs(x.values))))
        err = max(float(np.max(np.abs(a.p_hat.values - b.p_hat.values))),
                  float(np.max(np.abs(a.a_hat - b.a_hat)))) / scale
        if err > worst:
            worst, witness = err, {"fixture": i, "m": m, "n": n, "tail": tail.value}
    ok = worst < 1e-6
    return CheckResult("decomposition_vs_oracle", ok, worst, 1e-6, None if ok else witness)


def check_trend_fixtures(discount, m=16, K=4) -> CheckReport:
    """``x(t) = t`` gives slope 1 and ``x = c`` gives slope 0 under exact tails."""
    grid = make_grid(discount, m, K)
    report = CheckReport()
    lin = trend_signal(grid, [1.0], TailPolicy.PERIODIC)
    err = float(abs(decompose(lin).a_hat[0] - 1.0))
    report.add(CheckResult("trend_of_identity", err < 1e-8, err, 1e-8))
    const = Signal(grid, np.full(grid.size, 2.5), TailPolicy.PERIODIC)
    err = float(abs(decompose(const).a_hat[0]))
    report.add(CheckResult("trend_of_constant", err < 1e-8, err, 1e-8))
    return report


def reduction_fixtures(n: int, T: float):
    """Autonomous, T-periodic and exponentially modulated Lagrangians."""
    return [
        lagrangians.quadratic(n),
        lagrangians.tracking(n, T=T),
        lagrangians.modulated(n),
    ]


def check_reduction_identity(discount, seed=0, count=20, m=64) -> CheckResult:
    """Infinite-horizon objective of the lift against the reduced objective."""
    rng = np.random.default_rng(seed)
    tol = 10 * discount.T / m
    worst, witness = 0.0, None
    for L in reduction_fixtures(1, discount.T):
        for i in range(count):
            u = random_trajectory(rng, discount, m)
            reduced = reduce_problem(L, discount, u.eta).objective(u.values)
            full = objective_value(lift_solution(u, 1), L)
            err = abs(full - reduced) / abs(full)
            if err > worst:
                worst, witness = err, {"lagrangian": L.name, "fixture": i, "full": full, "reduced": reduced}
    ok = worst < tol
    return CheckResult("reduction_identity", ok, worst, tol, None if ok else witness)


def check_gradient_passthrough(discount, seed=0, samples=50, radius=2.0) -> CheckResult:
    """Averaged analytic gradient against central differences of the averaged value."""
    rng = np.random.default_rng(seed)
    params = AveragingParams(discount, tol=1e-13)
    worst, witness = 0.0, None
    for name in sorted(lagrangians.CATALOG):
        L = lagrangians.build(name, 2, discount.T)
        AL = averaged_lagrangian(L, params)
        s = rng.uniform(0, discount.T, samples)
        x = rng.uniform(-radius, radius, (samples, 2))
        y = rng.uniform(-radius, radius, (samples, 2))
        _, d2, d3 = AL.grad(s, x, y)
        z = np.concatenate([x, y], axis=1)
        fd = _central_gradient(lambda zz: AL.value(s, zz[:, :2], zz[:, 2:]), z)
        err, i = _relative_error(np.concatenate([d2, d3], axis=1), fd)
        if err > worst:
            worst, witness = err, {"lagrangian": name, "s": s[i], "x": x[i], "y": y[i]}
    ok = worst < 1e-5
    return CheckResult("gradient_passthrough", ok, worst, 1e-5, None if ok else witness)


def run_suite(discount: DiscountConfig, seed: int = 0) -> CheckReport:
    """All invariant checks with fixtures drawn from ``seed``."""
    report = CheckReport()
    report.add(check_extension_norm(discount, seed))
    report.add(check_averaging_bound(discount, seed))
    for r in check_projection(discount, seed).results:
        report.add(r)
    report.add(check_decomposition(discount, seed))
    for r in check_trend_fixtures(discount).results:
        report.add(r)
    report.add(check_reduction_identity(discount, seed))
    report.add(check_gradient_passthrough(discount, seed))
    return report
