"""The averaging operator folds a signal on [0, inf) onto one period.

Run with ``python3 demos/02_averaging.py``.
"""

import numpy as np

from periodic_horizon import (
    AveragingParams,
    DiscountConfig,
    Signal,
    TailPolicy,
    average_signal,
    average_tilde_signal,
    averaged_lagrangian,
    make_grid,
    operator_norm_check,
)
from periodic_horizon import lagrangians as lg
from periodic_horizon.signal import trend_signal

d = DiscountConfig(r=0.3, T=2.0)
rng = np.random.default_rng(0)

# %% A random signal over 5 periods, continued periodically with a drift.
x = Signal(make_grid(d, 20, 5), rng.normal(size=(100, 1)), TailPolicy.PERIODIC, slope=[0.2])
Ax = average_signal(x)
print("averaged period (first 5 samples):", Ax.values[:5, 0])

# The operator is bounded from the weighted space into L^alpha on one period.
for alpha in (1, 2, 3):
    res = operator_norm_check(x, alpha)
    print(f"alpha={alpha}: ||A x|| = {res.lhs:.6f} <= {res.rhs:.6f}  ok={res.ok}")

# %% For the pure trend t the k-weighted average exceeds the plain one by T/(1-q) at every phase.
t = trend_signal(make_grid(d, 8, 2), [1.0], TailPolicy.PERIODIC)
gap = average_tilde_signal(t).values - average_signal(t).values
print("tilde - plain:", gap[:, 0].round(12), " T/(1-q) =", d.T / (1 - d.q))

# %% Averaging a running cost in time.  The exp(-t) weight of the modulated
# cost is folded into one period; autonomous costs are left unchanged.
AL = averaged_lagrangian(lg.modulated(1, shift=1.0), AveragingParams(d))
s = np.linspace(0, d.T, 5)
print("averaged modulated cost at x=0, y=0:", AL.value(s, np.zeros((5, 1)), np.zeros((5, 1))))
