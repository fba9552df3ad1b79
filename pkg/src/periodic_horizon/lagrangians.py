"""Built-in Lagrangians with analytic derivatives.

Every factory returns a vectorised :class:`~periodic_horizon.averaging.Lagrangian`.
``CATALOG`` maps the names accepted by the command line to factories.
"""

from __future__ import annotations

import math

import numpy as np

from .averaging import Lagrangian

__all__ = ["dirichlet", "quadratic", "tracking", "modulated", "absolute", "quartic", "CATALOG", "build"]


def _sq(v):
    return np.sum(v * v, axis=1)


def _eye_stack(P, n, c=1.0):
    return np.broadcast_to(c * np.eye(n), (P, n, n)).copy()


def dirichlet(n: int = 1) -> Lagrangian:
    """``|y|^2``: autonomous Dirichlet energy."""

    def value(t, x, y):
        return _sq(y)

    def grad(t, x, y):
        return np.zeros(len(t)), np.zeros_like(x), 2 * y

    def hess(t, x, y):
        return _eye_stack(len(t), n, 2.0)

    return Lagrangian(
        n, value, grad, hess, c0=1.0, c1=1.0, alpha=2.0,
        rho=lambda y: 0.5 * _sq(np.asarray(y)),
        growth=lambda R: 2.0 * max(R, 1.0),
        name="dirichlet",
    )


def quadratic(n: int = 1, weight: float = 1.0) -> Lagrangian:
    """``|y|^2 + weight*|x|^2`` (autonomous, strictly convex)."""
    w = float(weight)

    def value(t, x, y):
        return _sq(y) + w * _sq(x)

    def grad(t, x, y):
        return np.zeros(len(t)), 2 * w * x, 2 * y

    def hess(t, x, y):
        return _eye_stack(len(t), n, 2.0)

    return Lagrangian(n, value, grad, hess, c0=1.0, alpha=2.0,
                      rho=lambda y: _sq(np.asarray(y)),
                      growth=lambda R: 2.0 * (1 + w) * max(R, 1.0), name="quadratic")


def tracking(n: int = 1, T: float = 1.0, amplitude: float = 1.0, weight: float = 1.0) -> Lagrangian:
    """``|y|^2 + weight*|x - phi(t)|^2`` with ``phi(t) = amplitude*sin(2 pi t/T)`` in each component."""
    w = float(weight)
    A = float(amplitude)
    omega = 2 * math.pi / float(T)

    def phi(t):
        return (A * np.sin(omega * t))[:, None]

    def value(t, x, y):
        return _sq(y) + w * _sq(x - phi(t))

    def grad(t, x, y):
        e = x - phi(t)
        dphi = (A * omega * np.cos(omega * t))[:, None]
        return -2 * w * np.sum(e * dphi, axis=1), 2 * w * e, 2 * y

    def hess(t, x, y):
        return _eye_stack(len(t), n, 2.0)

    return Lagrangian(n, value, grad, hess, c0=1.0, alpha=2.0,
                      rho=lambda y: _sq(np.asarray(y)), name="tracking")


def modulated(n: int = 1, shift: float = 1.0, weight: float = 1.0) -> Lagrangian:
    """``|y|^2 + |x|^2 + weight*exp(-t)*|x - shift|^2``: t-dependent and not periodic."""
    w = float(weight)
    c = float(shift)

    def value(t, x, y):
        return _sq(y) + _sq(x) + w * np.exp(-t) * _sq(x - c)

    def grad(t, x, y):
        e = np.exp(-t)
        return -w * e * _sq(x - c), 2 * x + 2 * w * e[:, None] * (x - c), 2 * y

    def hess(t, x, y):
        return _eye_stack(len(t), n, 2.0)

    return Lagrangian(n, value, grad, hess, c0=1.0, alpha=2.0,
                      rho=lambda y: _sq(np.asarray(y)), name="modulated")


def absolute(n: int = 1) -> Lagrangian:
    """``|y|``: convex but neither smooth nor strictly convex."""

    def value(t, x, y):
        return np.sqrt(_sq(y))

    def grad(t, x, y):
        norm = np.sqrt(_sq(y))[:, None]
        unit = np.divide(y, norm, out=np.zeros_like(y), where=norm > 0)
        return np.zeros(len(t)), np.zeros_like(x), unit

    return Lagrangian(n, value, grad, None, c0=1.0, c1=1.0, alpha=1.0, name="absolute")


def quartic(n: int = 1) -> Lagrangian:
    """``|y|^4``."""

    def value(t, x, y):
        return _sq(y) ** 2

    def grad(t, x, y):
        return np.zeros(len(t)), np.zeros_like(x), 4 * _sq(y)[:, None] * y

    def hess(t, x, y):
        return 4 * _sq(y)[:, None, None] * np.eye(n)[None] + 8 * y[:, :, None] * y[:, None, :]

    return Lagrangian(n, value, grad, hess, name="quartic")


CATALOG = {
    "dirichlet": dirichlet,
    "quadratic": quadratic,
    "tracking": tracking,
    "modulated": modulated,
}


def build(name: str, n: int, T: float, **params) -> Lagrangian:
    """Instantiate a catalog Lagrangian by name; ``T`` is forwarded where it matters."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown Lagrangian {name!r}; choose from {sorted(CATALOG)}") from None
    if factory is tracking:
        params.setdefault("T", T)
    return factory(n, **params)
