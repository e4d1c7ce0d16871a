"""Shared finite-difference oracle helpers for the test suite."""

import numpy as np


def rel_err(a, b, floor=1e-12):
    """Norm-based relative error |a - b| / (|b| + floor)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.linalg.norm(a - b) / (np.linalg.norm(b) + floor)


def fd_gradient(f, x, h=1e-5):
    """Central-difference gradient of scalar f at x (any array shape)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def fd_jacobian(f, x, h=1e-5):
    """Central-difference Jacobian of array-valued f at x.

    Output shape is f(x).shape + x.shape.
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    jac = np.zeros(f0.shape + x.shape)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        jac[(Ellipsis,) + idx] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return jac


def fd_directional(f, x, d, h=1e-6):
    """Central-difference directional derivative of scalar f along d."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    return (f(x + h * d) - f(x - h * d)) / (2.0 * h)
