"""Verlet discrete Lagrangian, discrete forces, forced discrete Euler-Lagrange
residuals, discrete Legendre boundary conditions and a variational integrator.

All derivatives of the discrete Lagrangian come from casadi AD. The module-level
functions take :class:`ModelParams` and work on the seven-coordinate arm model;
:class:`DiscreteMechanics` accepts any :class:`Mechanics` (the racing model uses
the six-coordinate quadrotor).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import casadi as ca
import numpy as np

from dmcc.errors import NoConvergence, SingularAttitude, ValidationError
from dmcc.geom import COS_THETA_MIN
from dmcc.model import Mechanics, ModelParams, arm_mechanics

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-10


@dataclass(frozen=True)
class KnotGrid:
    N: int
    t_N: float

    def __post_init__(self):
        if self.N < 2:
            raise ValidationError({"grid.N": "need at least 2 intervals"})
        if not self.t_N > 0:
            raise ValidationError({"grid.t_N": "must be positive"})

    @property
    def dt(self) -> float:
        return self.t_N / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt


@dataclass
class DiscretePath:
    q_knots: np.ndarray  # (N+1, nq)
    u_knots: np.ndarray  # (N+1, nu)

    def __post_init__(self):
        self.q_knots = np.asarray(self.q_knots, dtype=float)
        self.u_knots = np.asarray(self.u_knots, dtype=float)
        if self.q_knots.shape[0] != self.u_knots.shape[0]:
            raise ValidationError({"path": "q and u knot counts differ"})

    @property
    def N(self) -> int:
        return self.q_knots.shape[0] - 1


def average_velocity(q_k, q_k1, dt):
    return (q_k1 - q_k) / dt


class DiscreteMechanics:
    """Compiled discrete-mechanics functions for one Lagrangian system."""

    def __init__(self, mech: Mechanics):
        self.mech = mech
        n, m = mech.nq, mech.nu
        self.nq, self.nu = n, m
        qa, qb, qc = (ca.SX.sym(s, n) for s in ("qa", "qb", "qc"))
        ua, ub, uc = (ca.SX.sym(s, m) for s in ("ua", "ub", "uc"))
        qd = ca.SX.sym("qd", n)
        dt = ca.SX.sym("dt")

        L = mech.lagrangian(qa, qd)
        self.L = ca.Function("L", [qa, qd], [L])
        self.momentum = ca.Function("p", [qa, qd], [ca.gradient(L, qd)])
        M, _ = ca.hessian(L, qd)
        self.mass = ca.Function("M", [qa], [ca.substitute(M, qd, ca.DM.zeros(n))])
        self.force = ca.Function("f", [qa, ua], [mech.force(qa, ua)])

        vel = (qb - qa) / dt
        Ld = 0.5 * dt * mech.lagrangian(qa, vel) + 0.5 * dt * mech.lagrangian(qb, vel)
        self.Ld = ca.Function("Ld", [qa, qb, dt], [Ld])
        self.D1Ld = ca.Function("D1Ld", [qa, qb, dt], [ca.gradient(Ld, qa)])
        self.D2Ld = ca.Function("D2Ld", [qa, qb, dt], [ca.gradient(Ld, qb)])

        fa, fb = mech.force(qa, ua), mech.force(qb, ub)
        fd = dt / 4 * (fa + fb)
        self.fd = ca.Function("fd", [qa, qb, ua, ub, dt], [fd])

        # interval k-1 = (a, b), interval k = (b, c)
        fc = mech.force(qc, uc)
        res = (
            self.D2Ld(qa, qb, dt)
            + self.D1Ld(qb, qc, dt)
            + dt / 4 * (fa + fb)
            + dt / 4 * (fb + fc)
        )
        self.del_res = ca.Function("del", [qa, qb, qc, ua, ub, uc, dt], [res])
        self.del_jac_next = ca.Function(
            "del_jac", [qa, qb, qc, ua, ub, uc, dt], [res, ca.jacobian(res, qc)]
        )

        qd0 = ca.SX.sym("qd0", n)
        start = self.momentum(qa, qd0) + self.D1Ld(qa, qb, dt) + dt / 4 * (fa + fb)
        end = -self.momentum(qb, qd0) + self.D2Ld(qa, qb, dt) + dt / 4 * (fa + fb)
        self.start_res = ca.Function("start", [qa, qb, qd0, ua, ub, dt], [start])
        self.start_jac = ca.Function("start_jac", [qa, qb, qd0, ua, ub, dt], [start, ca.jacobian(start, qb)])
        self.end_res = ca.Function("end", [qa, qb, qd0, ua, ub, dt], [end])

    # numeric conveniences -------------------------------------------------

    def residual(self, q_km1, q_k, q_k1, u_km1, u_k, u_k1, dt) -> np.ndarray:
        _guard(q_km1, q_k, q_k1)
        return np.asarray(self.del_res(q_km1, q_k, q_k1, u_km1, u_k, u_k1, dt)).ravel()

    def boundary(self, q0, q1, qdot0, u0, u1, qNm1, qN, qdotN, uNm1, uN, dt):
        _guard(q0, q1, qNm1, qN)
        r0 = np.asarray(self.start_res(q0, q1, qdot0, u0, u1, dt)).ravel()
        rN = np.asarray(self.end_res(qNm1, qN, qdotN, uNm1, uN, dt)).ravel()
        return r0, rN

    def discrete_momentum(self, q_k, q_k1, u_k, u_k1, dt):
        """(p_k, p_k1): left and right discrete Legendre transforms of one interval."""
        f = np.asarray(self.fd(q_k, q_k1, u_k, u_k1, dt)).ravel()
        p_left = -np.asarray(self.D1Ld(q_k, q_k1, dt)).ravel() - f
        p_right = np.asarray(self.D2Ld(q_k, q_k1, dt)).ravel() + f
        return p_left, p_right

    def knot_energy(self, path: "DiscretePath", dt: float) -> np.ndarray:
        """Hamiltonian at knots 1..N with momentum from the right Legendre transform."""
        q, u = path.q_knots, path.u_knots
        out = np.empty(len(q) - 1)
        for k in range(1, len(q)):
            _, p = self.discrete_momentum(q[k - 1], q[k], u[k - 1], u[k], dt)
            v = np.linalg.solve(np.asarray(self.mass(q[k])), p)
            out[k - 1] = float(self.mech.kinetic(ca.DM(q[k]), ca.DM(v))) + float(self.mech.potential(ca.DM(q[k])))
        return out

    def step(self, q_km1, q_k, u_km1, u_k, u_k1, dt, q_guess=None) -> np.ndarray:
        q_km1, q_k = np.asarray(q_km1, float), np.asarray(q_k, float)
        x0 = 2 * q_k - q_km1 if q_guess is None else np.asarray(q_guess, float)

        def fun(x):
            r, J = self.del_jac_next(q_km1, q_k, x, u_km1, u_k, u_k1, dt)
            return np.asarray(r).ravel(), np.asarray(J)

        return _damped_newton(fun, x0)

    def seed(self, q0, qdot0, u0, u1, dt) -> np.ndarray:
        """Solve the initial boundary condition for q1, starting at q0 + dt*qdot0."""
        q0, qdot0 = np.asarray(q0, float), np.asarray(qdot0, float)

        def fun(x):
            r, J = self.start_jac(q0, x, qdot0, u0, u1, dt)
            return np.asarray(r).ravel(), np.asarray(J)

        return _damped_newton(fun, q0 + dt * qdot0)

    def simulate(self, q0, qdot0, u_knots, grid: KnotGrid) -> DiscretePath:
        u = np.asarray(u_knots, dtype=float)
        if u.shape != (grid.N + 1, self.nu):
            raise ValidationError({"u_knots": f"expected shape {(grid.N + 1, self.nu)}, got {u.shape}"})
        dt = grid.dt
        q = np.zeros((grid.N + 1, self.nq))
        q[0] = q0
        try:
            q[1] = self.seed(q0, qdot0, u[0], u[1], dt)
        except NoConvergence as exc:
            raise NoConvergence(exc.iterations, exc.residual, index=1) from None
        for k in range(1, grid.N):
            try:
                q[k + 1] = self.step(q[k - 1], q[k], u[k - 1], u[k], u[k + 1], dt)
            except NoConvergence as exc:
                raise NoConvergence(exc.iterations, exc.residual, index=k + 1) from None
        return DiscretePath(q, u)


def _guard(*qs):
    for q in qs:
        q = np.asarray(q, dtype=float)
        if abs(np.cos(q[4])) <= COS_THETA_MIN:
            raise SingularAttitude(f"pitch {q[4]:.6f} rad is at gimbal lock")


def _damped_newton(fun, x0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    x = np.array(x0, dtype=float)
    r, J = fun(x)
    nr = np.linalg.norm(r)
    for it in range(max_iter):
        if nr < tol:
            return x
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        step = 1.0
        while True:
            xn = x + step * dx
            rn, Jn = fun(xn)
            nrn = np.linalg.norm(rn)
            if np.isfinite(nrn) and nrn < nr:
                break
            step *= 0.5
            if step < 1e-4:
                break
        x, r, J, nr = xn, rn, Jn, nrn
    if nr < tol:
        return x
    raise NoConvergence(max_iter, float(nr))


@functools.lru_cache(maxsize=None)
def discrete_mechanics(mech: Mechanics) -> DiscreteMechanics:
    return DiscreteMechanics(mech)


def _dm(params: ModelParams) -> DiscreteMechanics:
    return discrete_mechanics(arm_mechanics(params))


def _check_dt(dt):
    if not dt > 0:
        raise ValidationError({"dt": "must be positive"})


def verlet_Ld(q_k, q_k1, dt, params: ModelParams) -> float:
    _check_dt(dt)
    _guard(q_k, q_k1)
    return float(_dm(params).Ld(q_k, q_k1, dt))


def discrete_forces(u_k, u_k1, q_k, q_k1, dt, params: ModelParams):
    """(f_minus, f_plus); both equal dt/4 (f_k + f_k1)."""
    f = np.asarray(_dm(params).fd(q_k, q_k1, u_k, u_k1, dt)).ravel()
    return f, f.copy()


def del_residual(q_km1, q_k, q_k1, u_km1, u_k, u_k1, dt, params: ModelParams) -> np.ndarray:
    _check_dt(dt)
    return _dm(params).residual(q_km1, q_k, q_k1, u_km1, u_k, u_k1, dt)


def boundary_residuals(q0, q1, qdot0, u0, u1, qNm1, qN, qdotN, uNm1, uN, dt, params: ModelParams):
    _check_dt(dt)
    return _dm(params).boundary(q0, q1, qdot0, u0, u1, qNm1, qN, qdotN, uNm1, uN, dt)


def variational_step(q_km1, q_k, u_km1, u_k, u_k1, dt, params: ModelParams) -> np.ndarray:
    _check_dt(dt)
    return _dm(params).step(q_km1, q_k, u_km1, u_k, u_k1, dt)


def simulate(q0, qdot0, u_knots, grid: KnotGrid, params: ModelParams) -> DiscretePath:
    return _dm(params).simulate(q0, qdot0, u_knots, grid)


def discrete_energy(path: DiscretePath, dt: float, mech: Mechanics) -> np.ndarray:
    """Energy per interval from the average velocity at the interval midpoint."""
    q = path.q_knots
    out = np.empty(len(q) - 1)
    for k in range(len(q) - 1):
        qm = 0.5 * (q[k] + q[k + 1])
        v = (q[k + 1] - q[k]) / dt
        out[k] = float(mech.kinetic(ca.DM(qm), ca.DM(v))) + float(mech.potential(ca.DM(qm)))
    return out
