"""Augmented-Lagrangian solver with a projected damped-Newton inner loop.

Outer loop: first-order multiplier updates, penalty x10 whenever the constraint
violation shrinks by less than a factor 0.25. Inner loop: bound-constrained
minimisation of the augmented Lagrangian. Newton directions use the exact
Lagrangian Hessian plus the Gauss-Newton penalty term rho*J^T J on the free
variables, Levenberg-regularised until the direction descends; if that keeps
failing, a BFGS model takes over for the rest of the inner solve.
"""
from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from dmcc.nlp.ad import dm_to_scipy
from dmcc.nlp.problem import CompiledNlp, NlpProblem, Status

# SuperLU misbehaves on the badly conditioned systems that large penalties produce;
# dense Cholesky is robust and cheap at the sizes the planners generate
DENSE_LIMIT = 2000
ARMIJO = 1e-4


class _AugLag:
    def __init__(self, fns: CompiledNlp, y, z, rho):
        self.fns, self.y, self.z, self.rho = fns, y, z, rho
        self.evals = 0

    def value(self, x):
        self.evals += 1
        fns, rho = self.fns, self.rho
        f = float(fns.f(x))
        c = np.asarray(fns.c(x)).ravel()
        h = np.asarray(fns.h(x)).ravel()
        val = f + self.y @ c + 0.5 * rho * c @ c
        if h.size:
            s = np.maximum(0.0, self.z + rho * h)
            val += (s @ s - self.z @ self.z) / (2 * rho)
        return val

    def gradient(self, x):
        fns, rho = self.fns, self.rho
        g = np.asarray(fns.grad(x)).ravel()
        c = np.asarray(fns.c(x)).ravel()
        h = np.asarray(fns.h(x)).ravel()
        yh = self.y + rho * c
        zh = np.maximum(0.0, self.z + rho * h) if h.size else h
        Jc = dm_to_scipy(fns.Jc(x)) if c.size else None
        Jh = dm_to_scipy(fns.Jh(x)) if h.size else None
        if c.size:
            g = g + Jc.T @ yh
        if h.size:
            g = g + Jh.T @ zh
        return g, (c, h, yh, zh, Jc, Jh)

    def hessian(self, x, cache):
        c, h, yh, zh, Jc, Jh = cache
        H = dm_to_scipy(self.fns.hess(x, yh, zh))
        H = sp.triu(H) + sp.triu(H, 1).T if _is_upper(H) else H
        if c.size:
            H = H + self.rho * (Jc.T @ Jc)
        if h.size:
            act = zh > 0
            if act.any():
                Ja = Jh[np.flatnonzero(act)]
                H = H + self.rho * (Ja.T @ Ja)
        return sp.csc_matrix(H)


def _is_upper(H):
    return sp.tril(H, -1).nnz == 0 and sp.triu(H, 1).nnz > 0


def _project(x, lb, ub):
    return np.minimum(np.maximum(x, lb), ub)


def _pg_norm(x, g, lb, ub):
    return float(np.max(np.abs(x - _project(x - g, lb, ub)), initial=0.0))


def _newton_direction(H, g, free, dense_limit=DENSE_LIMIT):
    idx = np.flatnonzero(free)
    d = np.zeros_like(g)
    if idx.size == 0:
        return d, True
    Hff = H[idx][:, idx]
    gf = g[idx]
    diag = np.abs(Hff.diagonal())
    delta = 0.0
    base = max(1e-8, 1e-8 * float(diag.max(initial=1.0)))
    for _ in range(12):
        A = Hff + delta * sp.identity(idx.size, format="csc")
        try:
            if idx.size <= dense_limit:
                Ad = A.toarray()
                Lc = np.linalg.cholesky(Ad)
                df = -np.linalg.solve(Lc.T, np.linalg.solve(Lc, gf))
            else:
                df = -spla.splu(sp.csc_matrix(A), permc_spec="COLAMD").solve(gf)
            if np.all(np.isfinite(df)) and gf @ df < -1e-14 * np.linalg.norm(gf) * np.linalg.norm(df):
                d[idx] = df
                return d, True
        except (np.linalg.LinAlgError, RuntimeError):
            pass
        delta = base if delta == 0.0 else delta * 10.0
    return d, False


def _bfgs_direction(B, g, free):
    idx = np.flatnonzero(free)
    d = np.zeros_like(g)
    if idx.size:
        d[idx] = -np.linalg.solve(B[np.ix_(idx, idx)], g[idx])
    return d


def _inner(al: _AugLag, x, lb, ub, tol, max_iter):
    """Projected Newton on the bound-constrained augmented Lagrangian."""
    n = x.size
    fx = al.value(x)
    g, cache = al.gradient(x)
    B = None
    iters = 0
    for iters in range(1, max_iter + 1):
        pg = _pg_norm(x, g, lb, ub)
        if pg <= tol:
            return x, iters - 1, True
        eps = min(1e-8 + pg, 1e-3)
        at_lb = (x <= lb + eps) & (g > 0)
        at_ub = (x >= ub - eps) & (g < 0)
        free = ~(at_lb | at_ub)
        if B is None:
            H = al.hessian(x, cache)
            d, ok = _newton_direction(H, g, free)
            if not ok:
                B = np.eye(n) * max(1.0, float(np.abs(H.diagonal()).max(initial=1.0)))
        if B is not None:
            d = _bfgs_direction(B, g, free)
        # active variables move along steepest descent, clipped by the projection
        d[~free] = -g[~free]
        step = 1.0
        accepted = False
        while step >= 1e-12:
            xn = _project(x + step * d, lb, ub)
            fn = al.value(xn)
            if np.isfinite(fn) and fn <= fx + ARMIJO * (g @ (xn - x)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return x, iters, False
        gn, cache = al.gradient(xn)
        if B is not None:
            s, yv = xn - x, gn - g
            sy = s @ yv
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
                Bs = B @ s
                B = B - np.outer(Bs, Bs) / (s @ Bs) + np.outer(yv, yv) / sy
        x, fx, g = xn, fn, gn
    return x, iters, _pg_norm(x, g, lb, ub) <= tol


def solve_auglag(prob: NlpProblem, opts) -> tuple:
    t0 = time.perf_counter()
    fns = prob.functions()
    lb, ub = prob.lbx, prob.ubx
    x = _project(prob.x0.copy(), lb, ub)
    y = np.zeros(prob.n_eq)
    z = np.zeros(prob.n_ineq)
    rho = float(opts.penalty_init)
    viol = fns.violation(x)
    history = []
    status = Status.MAX_ITER
    total_inner = 0
    inner_tol = max(opts.opt_tol, 1e-1)
    for outer in range(1, opts.max_outer + 1):
        al = _AugLag(fns, y, z, rho)
        x, its, _ = _inner(al, x, lb, ub, inner_tol, opts.max_inner)
        total_inner += its
        c = np.asarray(fns.c(x)).ravel()
        h = np.asarray(fns.h(x)).ravel()
        y = y + rho * c
        if h.size:
            z = np.maximum(0.0, z + rho * h)
        new_viol = fns.violation(x)
        history.append(new_viol)
        kkt = fns.kkt_residual(x, y, z)
        if opts.verbose:
            print(f"[auglag] outer {outer:3d} inner {its:4d} viol {new_viol:.3e} kkt {kkt:.3e} rho {rho:.1e}")
        if new_viol <= opts.feas_tol and kkt <= opts.opt_tol:
            status = Status.OPTIMAL
            break
        if new_viol > 0.25 * viol and new_viol > opts.feas_tol:
            rho = min(rho * opts.penalty_growth, opts.penalty_max)
        viol = min(viol, new_viol)
        inner_tol = max(opts.opt_tol * 0.1, inner_tol * 0.1)
        if len(history) >= 5 and rho >= 1e8:
            window = history[-5:]
            if min(window) > opts.feas_tol and min(window) >= 0.99 * window[0]:
                status = Status.INFEASIBLE
                break
        if not np.all(np.isfinite(x)):
            status = Status.NUMERIC_FAILURE
            break
    info = dict(
        iterations=total_inner,
        outer_iterations=outer,
        objective=float(fns.f(x)),
        max_violation=fns.violation(x),
        kkt_residual=fns.kkt_residual(x, y, z),
        wall_time=time.perf_counter() - t0,
    )
    return x, {"eq": y, "ineq": z}, status, info
