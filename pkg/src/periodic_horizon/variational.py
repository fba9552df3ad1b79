"""Reduction of discounted periodic problems to one period, and their solution.

A ``T``-periodic path ``x`` satisfies

    int_0^inf e^{-rt} L(t, x, x') dt = 1/(1-q) int_0^T e^{-rs} A1(L)(s, x, x') ds,

so minimising over periodic paths with ``x(0) = eta`` reduces to a
finite-horizon problem on ``[0, T]`` with ``u(0) = u(T) = eta``.  The reduced
problem is transcribed with piecewise-linear ``u`` and cell-midpoint
evaluation, then solved by gradient descent or BFGS.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize

from .averaging import AveragedLagrangian, AveragingParams, Lagrangian, _central_gradient, averaged_lagrangian
from .report import CheckReport, CheckResult
from .signal import DiscountConfig, PeriodSignal, Signal, TailPolicy, periodic_extend

logger = logging.getLogger(__name__)

__all__ = [
    "FiniteHorizonProblem",
    "Trajectory",
    "SolveOptions",
    "reduce_problem",
    "solve_finite_horizon",
    "lift_solution",
    "objective_value",
    "euler_lagrange_residual",
    "raw_euler_lagrange_residual",
    "check_regularity_assumptions",
]


def _fd_partials(f, s, x, y):
    """Central-difference ``(D2, D3)`` of a vectorised ``f(s, x, y)``.

    Step ``h = 1e-6 * max(1, |z_i|)`` per coordinate.
    """
    n = x.shape[1]
    z = np.concatenate([x, y], axis=1)
    g = _central_gradient(lambda zz: f(s, zz[:, :n], zz[:, n:]), z, rel_step=1e-6)
    return g[:, :n], g[:, n:]


@dataclass(frozen=True)
class FiniteHorizonProblem:
    """Minimise ``c * int_0^T w(s) A1(L)(s, u, u') ds`` subject to ``u(0) = u(T) = eta``.

    With ``weighted`` (the default) ``w(s) = exp(-r s)`` and ``c = 1/(1-q)``,
    which makes the value equal to the discounted infinite-horizon cost of
    the periodic lift.  Otherwise ``w = c = 1``.
    """

    AL: AveragedLagrangian
    eta: np.ndarray
    discount: DiscountConfig
    weighted: bool = True

    @property
    def dim(self) -> int:
        return self.AL.dim

    @property
    def scale(self) -> float:
        return 1.0 / (1.0 - self.discount.q) if self.weighted else 1.0

    def weight(self, s):
        return np.exp(-self.discount.r * s) if self.weighted else np.ones_like(s)

    def lam(self, s, x, y):
        """Effective Lagrangian ``w(s) A1(L)(s, x, y)``."""
        return self.weight(s) * self.AL.value(s, x, y)

    def lam_partials(self, s, x, y):
        """``(D2, D3)`` of the effective Lagrangian; finite differences if ``L`` has no gradient."""
        w = self.weight(s)[:, None]
        if self.AL.base.grad is not None:
            _, d2, d3 = self.AL.grad(s, x, y)
        else:
            d2, d3 = _fd_partials(self.AL.value, s, x, y)
        return w * d2, w * d3

    def _cells(self, u):
        m = u.shape[0] - 1
        dt = self.discount.T / m
        s = (np.arange(m) + 0.5) * dt
        return s, 0.5 * (u[1:] + u[:-1]), (u[1:] - u[:-1]) / dt, dt

    def objective(self, u: np.ndarray) -> float:
        """Transcribed objective for nodal values ``u`` of shape ``(m+1, n)``."""
        s, xm, ym, dt = self._cells(np.asarray(u, dtype=float))
        return self.scale * dt * float(np.sum(self.lam(s, xm, ym)))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Gradient of :meth:`objective` with respect to every node (boundary rows included)."""
        s, xm, ym, dt = self._cells(np.asarray(u, dtype=float))
        d2, d3 = self.lam_partials(s, xm, ym)
        g = np.zeros_like(np.asarray(u, dtype=float))
        cell = 0.5 * dt * d2
        g[:-1] += cell - d3
        g[1:] += cell + d3
        return self.scale * g


def reduce_problem(L: Lagrangian, discount: DiscountConfig, eta, params: Optional[AveragingParams] = None,
                   weighted: bool = True) -> FiniteHorizonProblem:
    """Finite-horizon problem on one period equivalent to the periodic infinite-horizon one.

    Unless ``params.terms`` is set, the averaging series is pinned to the
    ``k`` with ``q**k <= min(tol, 1e-16)``.  A fixed term count keeps the
    discrete objective one smooth function, so that value and gradient
    agree to rounding during line searches.
    """
    params = params or AveragingParams(discount)
    if params.discount != discount:
        raise ValueError("averaging parameters use a different discount setting")
    if params.terms is None:
        k = math.ceil(math.log(min(params.tol, 1e-16)) / math.log(discount.q))
        params = replace(params, terms=int(min(max(k, 1), params.max_terms)))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if eta.shape != (L.dim,):
        raise ValueError(f"eta must have length {L.dim}")
    return FiniteHorizonProblem(averaged_lagrangian(L, params), eta, discount, weighted)


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 5000
    gtol: float = 1e-10
    method: str = "bfgs"
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    multistart: int = 1
    seed: int = 0
    bump_scale: float = 0.1
    polish: int = 20

    def __post_init__(self):
        if self.polish < 0:
            raise ValueError("polish must be >= 0")
        if self.gtol <= 0 or self.max_iters < 1 or self.multistart < 1:
            raise ValueError("gtol, max_iters and multistart must be positive")
        if not 0 < self.armijo < 1 or not 0 < self.backtrack < 1:
            raise ValueError("line-search parameters must lie in (0, 1)")
        if self.method not in ("gd", "bfgs"):
            raise ValueError(f"unknown method {self.method!r}; use 'gd' or 'bfgs'")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Nodal values ``u_0..u_m`` on ``s_j = j*T/m`` with ``u_0 = u_m = eta``."""

    discount: DiscountConfig
    values: np.ndarray
    eta: np.ndarray
    objective: float = math.nan
    converged: bool = True
    iterations: int = 0
    grad_norm: float = 0.0
    history: tuple = field(default_factory=tuple)
    message: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] < 3 or not np.all(np.isfinite(v)):
            raise ValueError("a trajectory needs at least 3 finite nodes")
        if not (np.array_equal(v[0], self.eta) and np.array_equal(v[-1], self.eta)):
            raise ValueError("trajectory endpoints must equal eta exactly")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dt(self) -> float:
        return self.discount.T / self.m

    def nodes(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.dt

    def period(self) -> PeriodSignal:
        return PeriodSignal(self.discount, self.values[:-1])


def _assemble(z: np.ndarray, eta: np.ndarray, m: int) -> np.ndarray:
    u = np.empty((m + 1, eta.size))
    u[0] = eta
    u[-1] = eta
    u[1:-1] = z.reshape(m - 1, eta.size)
    return u


def _gradient_descent(f, grad, z0, opts: SolveOptions):
    z = z0.copy()
    fz = f(z)
    history = [fz]
    step = 1.0
    g = grad(z)
    it = 0
    for it in range(1, opts.max_iters + 1):
        gn = float(np.max(np.abs(g))) if g.size else 0.0
        if gn <= opts.gtol:
            return z, fz, it - 1, history, True, "gradient tolerance reached"
        gg = float(g @ g)
        step = min(step * 2.0, 1e12)
        for _ in range(opts.max_backtracks):
            trial = z - step * g
            ft = f(trial)
            if ft <= fz - opts.armijo * step * gg:
                break
            step *= opts.backtrack
        else:
            return z, fz, it, history, False, "line search failed"
        z, fz = trial, ft
        g = grad(z)
        history.append(fz)
    gn = float(np.max(np.abs(g))) if g.size else 0.0
    return z, fz, it, history, gn <= opts.gtol, "max_iters reached"


def _bfgs(f, grad, z0, opts: SolveOptions, restarts: int = 5):
    """scipy BFGS, restarted with a fresh Hessian when it stalls on precision loss."""
    history = [f(z0)]

    def record(zk):
        history.append(f(zk))

    z, nit, msg, gn = z0, 0, "", math.inf
    for _ in range(restarts + 1):
        res = optimize.minimize(
            f, z, jac=grad, method="BFGS", callback=record,
            options={"gtol": opts.gtol, "maxiter": max(1, opts.max_iters - nit), "norm": np.inf},
        )
        nit += int(res.nit)
        z, msg = res.x, str(res.message)
        gn = float(np.max(np.abs(grad(z)))) if z.size else 0.0
        if gn <= opts.gtol or nit >= opts.max_iters or res.nit == 0:
            break
    return z, f(z), nit, history, gn <= opts.gtol, msg


def _banded_hessian(grad, z, n, rel_step=1e-6):
    """Finite-difference Hessian of the transcribed objective in LAPACK banded form.

    Node ``i`` only couples to nodes ``i-1, i, i+1``, so perturbing every
    third node at once recovers all entries from ``6n`` gradient calls.
    """
    N = z.size
    nodes = np.arange(N) // n
    comp = np.arange(N) % n
    bw = 2 * n - 1
    ab = np.zeros((2 * bw + 1, N))
    for p in range(3):
        for c in range(n):
            cols = np.flatnonzero((nodes % 3 == p) & (comp == c))
            if cols.size == 0:
                continue
            h = np.zeros(N)
            h[cols] = rel_step * np.maximum(1.0, np.abs(z[cols]))
            dg = (grad(z + h) - grad(z - h))
            # each row sees exactly one perturbed column among its neighbours
            owner = np.full(N, -1)
            for off in (-1, 0, 1):
                nb = nodes + off
                hit = (nb >= 0) & (nb * n + c < N) & (nb % 3 == p)
                owner[hit] = nb[hit] * n + c
            rows = np.flatnonzero(owner >= 0)
            j = owner[rows]
            ab[bw + rows - j, j] = dg[rows] / (2 * h[j])
    # symmetrise: entry (i, j) sits at ab[bw + i - j, j]
    full_i, full_j = np.nonzero(ab)
    i = full_i - bw + full_j
    sym = ab.copy()
    sym[full_i, full_j] = 0.5 * (ab[full_i, full_j] + ab[bw + full_j - i, i])
    return sym, bw


def _newton_polish(f, grad, z, n, opts: SolveOptions):
    """Newton iterations on the gradient with a banded finite-difference Hessian.

    Line searches stall once objective decreases drop below the rounding of
    ``f``; Newton steps only need the gradient, so they can reach ``gtol``.
    A step is kept only if it lowers the gradient norm and does not raise
    ``f`` beyond rounding.
    """
    from scipy.linalg import solve_banded

    fz = f(z)
    g = grad(z)
    gn = float(np.max(np.abs(g)))
    accepted = []
    for _ in range(opts.polish):
        if gn <= opts.gtol:
            break
        ab, bw = _banded_hessian(grad, z, n)
        try:
            step = solve_banded((bw, bw), ab, -g)
        except (np.linalg.LinAlgError, ValueError):
            break
        if not np.all(np.isfinite(step)):
            break
        trial = z + step
        ft = f(trial)
        gt = grad(trial)
        gtn = float(np.max(np.abs(gt)))
        if gtn >= gn or ft > fz + 4 * np.finfo(float).eps * max(1.0, abs(fz)):
            break
        z, fz, g, gn = trial, ft, gt, gtn
        accepted.append(fz)
    return z, fz, gn, accepted


def _starts(problem: FiniteHorizonProblem, m: int, opts: SolveOptions):
    """Initial interior values: ``u = eta`` first, then seeded Gaussian bumps around it."""
    n = problem.dim
    base = np.broadcast_to(problem.eta, (m - 1, n)).copy()
    yield base
    rng = np.random.default_rng(opts.seed)
    s = np.arange(1, m) / m
    for _ in range(opts.multistart - 1):
        z = base.copy()
        for _ in range(3):
            centre = rng.uniform(0, 1)
            width = rng.uniform(0.05, 0.25)
            amp = rng.normal(scale=opts.bump_scale, size=n)
            z += amp[None, :] * np.exp(-0.5 * ((s - centre) / width) ** 2)[:, None]
        yield z


def solve_finite_horizon(problem: FiniteHorizonProblem, m: int, opts: Optional[SolveOptions] = None,
                         init: Optional[np.ndarray] = None) -> Trajectory:
    """Direct transcription solve with ``m`` cells.

    Only interior nodes are unknowns, so ``u_0 = u_m = eta`` holds exactly at
    every iterate.  Over several starts the lowest objective wins.  Ties
    within ``1e-12`` go to the smaller Euler-Lagrange residual.  A
    non-converged best iterate is returned with ``converged=False``.

    Raises
    ------
    FloatingPointError
        If the objective evaluates to NaN; the message names the offending iterate.
    """
    opts = opts or SolveOptions()
    if int(m) != m or m < 2:
        raise ValueError("m must be an integer >= 2")
    m = int(m)
    eta = problem.eta

    def f(z):
        u = _assemble(z, eta, m)
        try:
            val = problem.objective(u)
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} at u = {u.tolist()}") from exc
        if not math.isfinite(val):
            raise FloatingPointError(f"objective is {val} at u = {u.tolist()}")
        return val

    def grad(z):
        return problem.gradient(_assemble(z, eta, m))[1:-1].reshape(-1)

    starts = [init] if init is not None else list(_starts(problem, m, opts))
    runner = _bfgs if opts.method == "bfgs" else _gradient_descent
    candidates = []
    for z0 in starts:
        z0 = np.asarray(z0, dtype=float).reshape(-1)
        z, fz, nit, hist, ok, msg = runner(f, grad, z0, opts)
        gn = float(np.max(np.abs(grad(z)))) if z.size else 0.0
        if not ok and opts.polish and z.size:
            z, fz, gn, extra = _newton_polish(f, grad, z, eta.size, opts)
            hist = list(hist) + extra
            nit += len(extra)
            if gn <= opts.gtol:
                ok, msg = True, f"{msg}; Newton polish reached gtol"
        traj = Trajectory(problem.discount, _assemble(z, eta, m), eta, fz, ok, nit, gn, tuple(hist), msg)
        candidates.append(traj)
    best = min(candidates, key=lambda tr: tr.objective)
    ties = [tr for tr in candidates if tr.objective - best.objective <= 1e-12]
    if len(ties) > 1:
        best = min(ties, key=lambda tr: float(np.max(np.abs(
            euler_lagrange_residual(tr, problem.AL, problem.weighted).values))))
    if not best.converged:
        logger.warning("solver did not converge: %s (|grad|=%.3e)", best.message, best.grad_norm)
    return best


def lift_solution(u: Trajectory, K: int) -> Signal:
    """Periodic lift of a trajectory (node ``m`` dropped, ``[0, T)`` convention)."""
    return periodic_extend(u.period(), K)


def objective_value(x: Signal, L: Lagrangian, tol: float = 1e-13, max_periods: int = 10**6) -> float:
    """Discounted cost ``int_0^inf e^{-rt} L(t, x, x') dt`` summed directly along the time axis.

    ``x`` is piecewise linear between nodes and each cell is evaluated at its
    midpoint.  A ``ZERO`` tail stops at the last stored node.  A
    ``PERIODIC`` tail continues ``x`` period by period until a block of
    periods adds less than ``tol`` relative to the running total.
    """
    g = x.grid
    d = g.discount
    dt = g.dt
    v = x.values
    if x.tail is TailPolicy.PERIODIC:
        v = np.vstack([v, v[-g.m:][:1] + d.T * x.slope[None, :]])
    t0 = g.times()
    tm = t0[: v.shape[0] - 1] + 0.5 * dt
    xm = 0.5 * (v[1:] + v[:-1])
    ym = (v[1:] - v[:-1]) / dt
    terms = dt * np.exp(-d.r * tm) * L.value(tm, xm, ym)
    total = float(np.sum(terms))
    if x.tail is TailPolicy.ZERO:
        return total

    A = x.periods()[-1]
    B = d.T * x.slope
    block = 16
    i0 = 1
    abs_total = float(np.sum(np.abs(terms)))
    s_mid = (np.arange(g.m) + 0.5) * dt
    while i0 <= max_periods:
        i = np.arange(i0, i0 + block, dtype=float)
        # period K-1+i holds A + i*B; its cells also need the first node of the next period
        vals = A[None] + i[:, None, None] * B[None, None, :]
        nxt = (A[0][None] + (i + 1)[:, None] * B[None, :])[:, None, :]
        full = np.concatenate([vals, nxt], axis=1)
        cm = 0.5 * (full[:, 1:] + full[:, :-1])
        cy = (full[:, 1:] - full[:, :-1]) / dt
        tt = ((g.K - 1 + i)[:, None] * d.T + s_mid[None, :]).reshape(-1)
        part = dt * np.exp(-d.r * tt) * L.value(tt, cm.reshape(-1, x.dim), cy.reshape(-1, x.dim))
        total += float(np.sum(part))
        abs_part = float(np.sum(np.abs(part)))
        abs_total += abs_part
        if abs_part <= tol * abs_total:
            return total
        i0 += block
    raise ArithmeticError("objective tail did not converge within max_periods")


def euler_lagrange_residual(u: Trajectory, AL: AveragedLagrangian, weighted: bool = True) -> PeriodSignal:
    """Discrete Euler-Lagrange defect of ``Lambda(s, x, y) = w(s) A1(L)(s, x, y)`` along ``u``.

    ``residual_j = D2 Lambda(s_j, u_j, u'_j) - [D3 Lambda(s_{j+1/2}) - D3 Lambda(s_{j-1/2})]/dt``
    at interior nodes, with the central difference ``u'_j`` and midpoint
    states on the cells.  Entry 0 is the boundary node and is reported as 0.
    """
    problem = FiniteHorizonProblem(AL, u.eta, u.discount, weighted)
    v = u.values
    dt = u.dt
    m = u.m
    s_nodes = np.arange(1, m) * dt
    yc = (v[2:] - v[:-2]) / (2 * dt)
    d2_node, _ = problem.lam_partials(s_nodes, v[1:-1], yc)
    s, xm, ym, _ = problem._cells(v)
    _, d3_mid = problem.lam_partials(s, xm, ym)
    res = np.zeros((m, u.values.shape[1]))
    res[1:] = d2_node - (d3_mid[1:] - d3_mid[:-1]) / dt
    return PeriodSignal(u.discount, res)


def raw_euler_lagrange_residual(x: Signal, L: Lagrangian) -> np.ndarray:
    """Same defect for the discounted raw Lagrangian ``e^{-rt} L`` along a lifted path.

    Reported for information only; nodes at multiples of ``T`` and the two
    end nodes are set to 0.
    """
    g = x.grid
    d = g.discount
    dt = g.dt
    v = x.values
    t = g.times()

    def partials(tt, xx, yy):
        if L.grad is not None:
            _, d2, d3 = L.gradient(tt, xx, yy)
        else:
            d2, d3 = _fd_partials(L.value, tt, xx, yy)
        w = np.exp(-d.r * tt)[:, None]
        return w * d2, w * d3

    d2_node, _ = partials(t[1:-1], v[1:-1], (v[2:] - v[:-2]) / (2 * dt))
    tm = t[:-1] + 0.5 * dt
    _, d3_mid = partials(tm, 0.5 * (v[1:] + v[:-1]), (v[1:] - v[:-1]) / dt)
    res = np.zeros_like(v)
    res[1:-1] = d2_node - (d3_mid[1:] - d3_mid[:-1]) / dt
    res[np.arange(g.size) % g.m == 0] = 0.0
    return res


def _hess_yy_fd(L: Lagrangian, t, x, y, h: float = 1e-4) -> np.ndarray:
    n = L.dim
    H = np.empty((len(t), n, n))
    if L.grad is not None:
        for i in range(n):
            yp, ym = y.copy(), y.copy()
            yp[:, i] += h
            ym[:, i] -= h
            H[:, :, i] = (L.grad(t, x, yp)[2] - L.grad(t, x, ym)[2]) / (2 * h)
        return 0.5 * (H + np.transpose(H, (0, 2, 1)))
    for i in range(n):
        for j in range(n):
            e_i = np.zeros(n)
            e_j = np.zeros(n)
            e_i[i] = h
            e_j[j] = h
            H[:, i, j] = (L.value(t, x, y + e_i + e_j) - L.value(t, x, y + e_i - e_j)
                          - L.value(t, x, y - e_i + e_j) + L.value(t, x, y - e_i - e_j)) / (4 * h * h)
    return H


def check_regularity_assumptions(L: Lagrangian, samples: int = 200, seed: int = 0, radius: float = 5.0,
                                 t_max: float = 20.0, rel_tol: float = 1e-9,
                                 pos_tol: float = 1e-8) -> CheckReport:
    """Monte-Carlo spot checks of the growth, derivative-bound and strict-convexity assumptions.

    Checks (each only when its metadata is present):

    * ``sandwich_lower`` / ``sandwich_upper``: ``c0|y|^alpha <= L <= c1(1+|y|^alpha)``
    * ``derivative_growth``: ``|D2 L| + |D3 L| <= M(R)(1+|y|^2)`` for ``|x|^2+|y|^2 <= R^2``
    * ``d33_positive``: Rayleigh quotient of ``D33 L`` on random directions exceeds ``pos_tol``
      (always run; finite differences stand in for a missing ``hess_yy``)
    """
    rng = np.random.default_rng(seed)
    n = L.dim
    t = rng.uniform(0, t_max, samples)
    x = rng.uniform(-radius, radius, (samples, n))
    y = rng.uniform(-radius, radius, (samples, n))
    report = CheckReport()
    val = L.value(t, x, y)
    scale = np.maximum(1.0, np.abs(val))

    def witness(i, **extra):
        return {"t": t[i], "x": x[i], "y": y[i], **extra}

    if L.c0 is not None and L.alpha is not None:
        ny = np.linalg.norm(y, axis=1) ** L.alpha
        gap = (L.c0 * ny - val) / scale
        i = int(np.argmax(gap))
        report.add(CheckResult("sandwich_lower", bool(gap[i] <= rel_tol), float(gap[i]), rel_tol,
                               None if gap[i] <= rel_tol else witness(i)))
        if L.c1 is not None:
            gap = (val - L.c1 * (1 + ny)) / scale
            i = int(np.argmax(gap))
            report.add(CheckResult("sandwich_upper", bool(gap[i] <= rel_tol), float(gap[i]), rel_tol,
                                   None if gap[i] <= rel_tol else witness(i)))

    if L.growth is not None and L.grad is not None:
        R = np.sqrt(np.sum(x * x, axis=1) + np.sum(y * y, axis=1))
        _, d2, d3 = L.gradient(t, x, y)
        lhs = np.linalg.norm(d2, axis=1) + np.linalg.norm(d3, axis=1)
        bound = np.array([L.growth(r) for r in R]) * (1 + np.sum(y * y, axis=1))
        gap = (lhs - bound) / np.maximum(1.0, bound)
        i = int(np.argmax(gap))
        report.add(CheckResult("derivative_growth", bool(gap[i] <= rel_tol), float(gap[i]), rel_tol,
                               None if gap[i] <= rel_tol else witness(i, R=R[i])))

    H = L.hess_yy(t, x, y) if L.hess_yy is not None else _hess_yy_fd(L, t, x, y)
    xi = rng.normal(size=(samples, n))
    rayleigh = np.einsum("pi,pij,pj->p", xi, H, xi) / np.sum(xi * xi, axis=1)
    i = int(np.argmin(rayleigh))
    ok = rayleigh[i] > pos_tol
    report.add(CheckResult("d33_positive", bool(ok), float(rayleigh[i]), pos_tol,
                           None if ok else witness(i, xi=xi[i])))
    return report
