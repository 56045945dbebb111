"""Helpers for writing functions once and evaluating them symbolically or numerically."""
from __future__ import annotations

import functools

import casadi as ca
import numpy as np

_SYMBOLIC = (ca.SX, ca.MX)


def is_symbolic(*args) -> bool:
    for a in args:
        if isinstance(a, _SYMBOLIC):
            return True
        if isinstance(a, (list, tuple)) and is_symbolic(*a):
            return True
    return False


def to_numpy(value):
    if isinstance(value, tuple):
        return tuple(to_numpy(v) for v in value)
    if isinstance(value, ca.DM):
        arr = np.array(value.full(), dtype=float)
        if arr.shape[1] == 1:
            return arr[:, 0]
        if arr.shape == (1, 1):
            return float(arr[0, 0])
        return arr
    return value


def _as_dm(a):
    if isinstance(a, np.ndarray):
        return ca.DM(a)
    if isinstance(a, (list, tuple)) and a and all(np.isscalar(v) for v in a):
        return ca.DM(np.asarray(a, dtype=float))
    return a


def dual(fn):
    """Run ``fn`` on casadi types; return numpy arrays unless an argument is symbolic.

    Scalars coming back as 1x1 matrices are returned as floats.
    """

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        if is_symbolic(*args, *kwargs.values()):
            return fn(*args, **kwargs)
        args = [_as_dm(a) for a in args]
        kwargs = {k: _as_dm(v) for k, v in kwargs.items()}
        out = fn(*args, **kwargs)
        return _squeeze(to_numpy(out))

    return wrapper


def _squeeze(value):
    if isinstance(value, tuple):
        return tuple(_squeeze(v) for v in value)
    if isinstance(value, np.ndarray) and value.shape in ((1,), (1, 1)):
        return float(value.reshape(-1)[0])
    return value


def vec(x):
    """Column vector view of a casadi or array-like value."""
    if isinstance(x, (ca.SX, ca.MX, ca.DM)):
        return ca.reshape(x, -1, 1) if x.shape[1] != 1 else x
    return ca.DM(np.asarray(x, dtype=float).reshape(-1))


def smooth_norm(x, delta: float = 1e-6):
    """sqrt(|x|^2 + delta^2) - delta: differentiable everywhere, exact at 0."""
    return ca.sqrt(ca.sumsqr(x) + delta**2) - delta


def smooth_norm_epigraph(x, s, delta: float = 1e-6):
    """Constraint g <= 0 (with s >= 0) equivalent to smooth_norm(x, delta) <= s.

    Polynomial in (x, s), so an interior-point method does not see the 1/delta
    curvature of the norm near x = 0.
    """
    return ca.sumsqr(x) + delta**2 - (s + delta) ** 2
