"""Acceptance suite: the eight release criteria at their stated tolerances.

Each test prints one ``[criterion N] PASS|FAIL`` line straight to the
terminal, so ``pytest -v`` output doubles as the acceptance report.
"""

import json
import time

import numpy as np
import pytest

from periodic_horizon import (
    AveragingParams,
    DiscountConfig,
    PeriodSignal,
    Signal,
    TailPolicy,
    average_signal,
    averaged_lagrangian,
    decompose,
    decompose_oracle,
    euler_lagrange_residual,
    lift_solution,
    make_grid,
    objective_value,
    operator_norm_check,
    orthogonality_residual,
    periodic_extend,
    project_periodic,
    reduce_problem,
    solve_finite_horizon,
    weighted_inner,
    weighted_lp_norm,
)
from periodic_horizon import lagrangians as lg
from periodic_horizon.averaging import _central_gradient
from periodic_horizon.checks import random_period, random_trajectory
from periodic_horizon.cli import check_determinism, load_config, main, read_period_csv
from periodic_horizon.signal import trend_signal

D = DiscountConfig(0.5, 1.0)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}  {detail}")

    return emit


def _trapezoid_period_norm(p: PeriodSignal, alpha: float, refine: int = 16) -> float:
    """Independent reference: fine trapezoid of e^{-rs}|p(s)|^alpha over the closed period."""
    m = p.m
    closed = np.vstack([p.values, p.values[:1]])
    s_coarse = np.arange(m + 1) * p.dt
    s = np.linspace(0, p.discount.T, m * refine + 1)
    interp = np.stack([np.interp(s, s_coarse, closed[:, i]) for i in range(p.dim)], axis=1)
    f = np.exp(-p.discount.r * s) * np.linalg.norm(interp, axis=1) ** alpha
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(s))) ** (1 / alpha)


def test_criterion_1_extension_norm_identity(report):
    t0 = time.perf_counter()
    m = 64
    tol = 10 * D.T / m
    rng = np.random.default_rng(101)
    worst = 0.0
    for i in range(50):
        p = random_period(rng, D, m, n=1 + i % 2)
        for alpha in (1.0, 2.0):
            lhs = weighted_lp_norm(periodic_extend(p, 3), alpha)
            rhs = (1 - D.q) ** (-1 / alpha) * _trapezoid_period_norm(p, alpha)
            worst = max(worst, abs(lhs - rhs) / rhs)
    elapsed = time.perf_counter() - t0
    ok = worst < tol and elapsed < 5
    report(1, ok, f"extension norm identity: max rel err {worst:.3e} < {tol:.3e}, {elapsed:.2f}s < 5s")
    assert ok


def test_criterion_2_averaging_bound(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    violations, checked, margin = 0, 0, np.inf
    for i in range(100):
        m, K, n = (8, 16, 32)[i % 3], 1 + i % 5, 1 + i % 3
        periodic = i % 2 == 1
        x = Signal(
            make_grid(D, m, K),
            rng.normal(size=(m * K, n)) * 10.0 ** rng.uniform(-2, 2),
            TailPolicy.PERIODIC if periodic else TailPolicy.ZERO,
            rng.normal(size=n) if periodic else None,
        )
        for alpha in (1.0, 2.0, 3.0):
            res = operator_norm_check(x, alpha)
            checked += 1
            violations += not res.ok
            margin = min(margin, (res.rhs - res.lhs) / res.rhs)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 10
    report(2, ok, f"averaging bound: {violations} violations in {checked} checks "
                  f"(min relative margin {margin:.3e}), {elapsed:.2f}s < 10s")
    assert ok


def test_criterion_3_projection(report):
    m, K = 64, 4
    rng = np.random.default_rng(303)
    max_ulps, pyth, orth = 0.0, 0.0, 0.0
    for i in range(20):
        x = Signal(make_grid(D, m, K), rng.normal(size=(m * K, 1 + i % 2)), TailPolicy.PERIODIC)
        px = project_periodic(x).lifted
        ppx = project_periodic(px).lifted
        max_ulps = max(max_ulps, float(np.max(np.abs(ppx.values - px.values) / np.spacing(np.abs(px.values)))))
        res = x - px
        nx = weighted_inner(x, x)
        pyth = max(pyth, abs(nx - weighted_inner(px, px) - weighted_inner(res, res)) / nx)
        orth = max(orth, orthogonality_residual(res) / np.abs(x.values).max())
    tol_p = 10 * D.T / m
    ok = max_ulps <= 1 and pyth < tol_p and orth < 1e-10
    report(3, ok, f"projection: idempotence {max_ulps:.0f} ulp <= 1, Pythagoras {pyth:.3e} < {tol_p:.3e}, "
                  f"orthogonality {orth:.3e} < 1e-10")
    assert ok


def test_criterion_4_decomposition(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    worst = 0.0
    for i in range(50):
        m, n = (4, 8, 16)[i % 3], (1, 2, 3)[(i // 3) % 3]
        K = 2 + i % 5
        periodic = i % 2 == 1
        x = Signal(
            make_grid(D, m, K),
            rng.normal(size=(m * K, n)),
            TailPolicy.PERIODIC if periodic else TailPolicy.ZERO,
            rng.normal(size=n) if periodic else None,
        )
        a, b = decompose(x), decompose_oracle(x)
        scale = max(1.0, np.abs(x.values).max())
        worst = max(worst, np.abs(a.p_hat.values - b.p_hat.values).max() / scale,
                    np.abs(a.a_hat - b.a_hat).max() / scale)
    grid = make_grid(D, 16, 4)
    slope_err = abs(decompose(trend_signal(grid, [1.0], TailPolicy.PERIODIC)).a_hat[0] - 1.0)
    const_err = abs(decompose(Signal(grid, np.full(64, 7.0), TailPolicy.PERIODIC)).a_hat[0])
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and slope_err < 1e-8 and const_err < 1e-8 and elapsed < 30
    report(4, ok, f"decomposition: closed form vs oracle {worst:.3e} < 1e-6; x=t slope err {slope_err:.1e}, "
                  f"x=c slope {const_err:.1e} (< 1e-8), {elapsed:.2f}s < 30s")
    assert ok


def test_criterion_5_reduction_identity(report):
    m = 64
    tol = 10 * D.T / m
    rng = np.random.default_rng(505)
    fixtures = [lg.quadratic(1), lg.tracking(1, T=D.T), lg.modulated(1)]
    worst = {}
    for L in fixtures:
        worst[L.name] = 0.0
        for _ in range(20):
            u = random_trajectory(rng, D, m)
            reduced = reduce_problem(L, D, u.eta).objective(u.values)
            full = objective_value(lift_solution(u, 2), L)
            worst[L.name] = max(worst[L.name], abs(full - reduced) / abs(full))
    ok = max(worst.values()) < tol
    detail = ", ".join(f"{k} {v:.3e}" for k, v in worst.items())
    report(5, ok, f"reduction identity (20 paths each): {detail} < {tol:.3e}")
    assert ok


def test_criterion_6_gradient_pass_through(report):
    rng = np.random.default_rng(606)
    params = AveragingParams(D, tol=1e-13)
    worst = {}
    for name in sorted(lg.CATALOG):
        AL = averaged_lagrangian(lg.build(name, 2, D.T), params)
        s = rng.uniform(0, D.T, 50)
        x, y = rng.uniform(-2, 2, (50, 2)), rng.uniform(-2, 2, (50, 2))
        _, d2, d3 = AL.grad(s, x, y)
        fd = _central_gradient(lambda z: AL.value(s, z[:, :2], z[:, 2:]), np.c_[x, y])
        err = np.linalg.norm(np.c_[d2, d3] - fd, axis=1) / np.maximum(1.0, np.linalg.norm(fd, axis=1))
        worst[name] = float(err.max())
    ok = max(worst.values()) < 1e-5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(6, ok, f"derivative pass-through (50 points each): {detail} < 1e-5")
    assert ok


def _tridiagonal_reference(m, eta):
    from scipy.linalg import solve_banded

    dt = D.T / m
    w = np.exp(-D.r * (np.arange(m) + 0.5) * dt)
    a, b = dt / 2 + 2 / dt, dt / 2 - 2 / dt
    ab = np.zeros((3, m - 1))
    ab[0, 1:] = b * w[1:-1]
    ab[1] = a * (w[:-1] + w[1:])
    ab[2, :-1] = b * w[1:-1]
    rhs = np.zeros(m - 1)
    rhs[0] -= b * w[0] * eta
    rhs[-1] -= b * w[-1] * eta
    return np.r_[eta, solve_banded((1, 1), ab, rhs), eta]


def test_criterion_7_solver_and_euler_lagrange(report):
    t0 = time.perf_counter()
    P = reduce_problem(lg.dirichlet(1), D, [1.0])
    tr = solve_finite_horizon(P, 64)
    dirichlet_obj = abs(tr.objective)
    constant = float(np.abs(tr.values - 1.0).max())

    P = reduce_problem(lg.tracking(1, T=D.T), D, [0.0])
    ms = np.array([16, 32, 64])
    res = []
    for m in ms:
        sol = solve_finite_horizon(P, int(m))
        res.append(float(np.abs(euler_lagrange_residual(sol, P.AL).values).max()))
    order = float(np.polyfit(np.log(D.T / ms), np.log(res), 1)[0])

    P = reduce_problem(lg.quadratic(1), D, [1.0], AveragingParams(D, terms=200))
    oracle_err = max(
        float(np.abs(solve_finite_horizon(P, m).values[:, 0] - _tridiagonal_reference(m, 1.0)).max())
        for m in (16, 64)
    )
    elapsed = time.perf_counter() - t0
    ok = dirichlet_obj < 1e-10 and constant < 1e-10 and order >= 1 and oracle_err < 1e-6 and elapsed < 60
    report(7, ok, f"solver: Dirichlet objective {dirichlet_obj:.1e} < 1e-10; EL residuals "
                  f"{', '.join(f'{r:.2e}' for r in res)} (fitted order {order:.2f} >= 1); "
                  f"tridiagonal oracle {oracle_err:.1e} < 1e-6; {elapsed:.1f}s < 60s")
    assert ok


def test_criterion_8_cli_contract(report, tmp_path, capsys):
    out = tmp_path / "verify.json"
    code = main(["verify", "--out", str(out)])
    verify_ok = code == 0 and json.loads(out.read_text())["passed"]
    determinism = check_determinism(load_config()).passed

    t = np.arange(32) / 8
    rng = np.random.default_rng(808)
    src = tmp_path / "x.csv"
    with open(src, "w", encoding="utf-8") as fh:
        fh.write("t,x1,x2\n")
        for ti, row in zip(t, rng.normal(size=(32, 2)) * 1e3):
            fh.write("%.17g,%.17g,%.17g\n" % (ti, *row))
    season = tmp_path / "p.csv"
    rep = tmp_path / "dec.json"
    main(["decompose", "--input", str(src), "--m", "8", "--seasonality-out", str(season), "--out", str(rep)])
    p_hat = np.array(json.loads(rep.read_text())["result"]["p_hat"])
    back = read_period_csv(str(season), D, 8)
    round_trip = back.values.tobytes() == p_hat.tobytes()
    ok = verify_ok and determinism and round_trip
    report(8, ok, f"CLI: verify exit {code}, determinism {'ok' if determinism else 'broken'}, "
                  f"CSV round trip {'bit-exact' if round_trip else 'lossy'}")
    assert ok
