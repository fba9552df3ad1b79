"""Discount-weighted norms and the periodic extension.

Run with ``python3 demos/01_discounted_norms.py``.
"""

import numpy as np

from periodic_horizon import DiscountConfig, PeriodSignal, make_grid, periodic_extend, period_lp_norm, weighted_lp_norm
from periodic_horizon.signal import Signal, TailPolicy, period_weights

# %% A discount setting is a rate r and a period T; everything else uses q = exp(-rT).
d = DiscountConfig(r=0.5, T=1.0)
print("q =", d.q)

# The period quadrature integrates exp(-rs) exactly against hat functions,
# so its weights sum to (1 - q)/r with no discretisation error.
w = period_weights(d, 16)
print("sum of weights:", w.sum(), " (1-q)/r:", (1 - d.q) / d.r)

# %% Tile one period over the half line.  The norm of the tiled signal is the
# period norm scaled by (1-q)^(-1/alpha).
s = np.arange(32) / 32
p = PeriodSignal(d, np.c_[np.sin(2 * np.pi * s), np.cos(4 * np.pi * s)])
x = periodic_extend(p, K=3)
for alpha in (1, 2, 3):
    lhs = weighted_lp_norm(x, alpha)
    rhs = (1 - d.q) ** (-1 / alpha) * period_lp_norm(p, alpha)
    print(f"alpha={alpha}: extension {lhs:.12f}  scaled period norm {rhs:.12f}")

# %% Finite data: a ZERO tail integrates only the stored horizon, a PERIODIC
# tail keeps going.  The gap is the mass q**K that lies beyond the data.
one = Signal(make_grid(d, 16, 4), np.ones(64))
print("||1||_1 with ZERO tail    :", weighted_lp_norm(one, 1), "=", (1 - d.q**4) / d.r)
print("||1||_1 with PERIODIC tail:", weighted_lp_norm(one, 1, tail=TailPolicy.PERIODIC), "=", 1 / d.r)
