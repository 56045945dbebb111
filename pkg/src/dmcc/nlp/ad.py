"""Exact first derivatives of Python callables via casadi AD.

Callables are traced once with a symbolic vector; the resulting expression graph
is differentiated with casadi, which colours the sparsity pattern so that one
sweep serves many seed directions.
"""
from __future__ import annotations

import casadi as ca
import numpy as np
import scipy.sparse as sp


def _trace(fn, n):
    x = ca.SX.sym("x", n)
    out = fn(x)
    if isinstance(out, (list, tuple)):
        out = ca.vertcat(*out)
    return x, ca.SX(out)


def ad_gradient(f, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    xs, fx = _trace(f, x.size)
    if fx.numel() != 1:
        raise ValueError("ad_gradient needs a scalar function")
    g = ca.Function("grad", [xs], [ca.gradient(fx, xs)])
    return np.asarray(g(x)).ravel()


def ad_jacobian(F, x, pattern=None) -> sp.csc_matrix:
    """Sparse Jacobian of ``F`` at ``x``.

    ``pattern`` (anything scipy can turn into a sparse matrix) must contain
    every structural nonzero of the Jacobian; a ``ValueError`` is raised when a
    structural nonzero falls outside it.
    """
    x = np.asarray(x, dtype=float).ravel()
    xs, Fx = _trace(F, x.size)
    J = ca.jacobian(Fx, xs)
    struct = casadi_to_scipy_pattern(J.sparsity())
    if pattern is not None:
        declared = sp.csc_matrix(pattern).astype(bool)
        if declared.shape != struct.shape:
            raise ValueError(f"pattern shape {declared.shape} != jacobian shape {struct.shape}")
        outside = struct.astype(int) - struct.multiply(declared).astype(int)
        if outside.nnz:
            raise ValueError(f"{outside.nnz} jacobian nonzeros lie outside the declared pattern")
    fn = ca.Function("ad_jac", [xs], [J])
    return dm_to_scipy(fn(x))


def casadi_to_scipy_pattern(s: ca.Sparsity) -> sp.csc_matrix:
    colind = np.array(s.colind(), dtype=np.int64)
    row = np.array(s.row(), dtype=np.int64)
    data = np.ones(len(row), dtype=bool)
    return sp.csc_matrix((data, row, colind), shape=(s.size1(), s.size2()))


def dm_to_scipy(m: ca.DM) -> sp.csc_matrix:
    s = m.sparsity()
    colind = np.array(s.colind(), dtype=np.int64)
    row = np.array(s.row(), dtype=np.int64)
    data = np.array(m.nonzeros(), dtype=float)
    return sp.csc_matrix((data, row, colind), shape=(s.size1(), s.size2()))
