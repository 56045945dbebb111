"""Continuous Euler-Lagrange dynamics integrated with classical RK4.

Baseline for the variational integrator: same Lagrangian and forces, but
discretised after deriving the ODE M(q) qdd = dL/dq - (d/dq dL/dqdot) qd + f.
"""
from __future__ import annotations

import functools
import time
from dataclasses import dataclass

import casadi as ca
import numpy as np

from dmcc.discrete import KnotGrid, discrete_mechanics
from dmcc.geom import euler_rate_map
from dmcc.model import Mechanics, quadrotor_mechanics, table1


@functools.lru_cache(maxsize=8)
def el_ode(mech: Mechanics) -> ca.Function:
    """(q, qdot, u) -> (qdot, qddot)."""
    n = mech.nq
    q, qd = ca.SX.sym("q", n), ca.SX.sym("qd", n)
    u = ca.SX.sym("u", mech.nu)
    L = mech.lagrangian(q, qd)
    p = ca.gradient(L, qd)
    M = ca.jacobian(p, qd)
    rhs = ca.gradient(L, q) - ca.mtimes(ca.jacobian(p, q), qd) + mech.force(q, u)
    return ca.Function("el_ode", [q, qd, u], [qd, ca.solve(M, rhs)])


def rk4_simulate(mech: Mechanics, q0, qdot0, u_knots, dt: float, steps: int):
    """Integrate ``steps`` RK4 steps, input zero-order held per step.

    Returns (q, qdot) arrays of shape (steps + 1, nq).
    """
    f = el_ode(mech)
    u_knots = np.asarray(u_knots, dtype=float)
    if u_knots.ndim == 1:
        u_knots = np.tile(u_knots, (steps + 1, 1))
    q = np.empty((steps + 1, mech.nq))
    v = np.empty_like(q)
    q[0], v[0] = q0, qdot0

    def rhs(x, uk):
        a, b = f(x[: mech.nq], x[mech.nq:], uk)
        return np.r_[np.asarray(a).ravel(), np.asarray(b).ravel()]

    x = np.r_[q0, qdot0].astype(float)
    for k in range(steps):
        uk = u_knots[k]
        k1 = rhs(x, uk)
        k2 = rhs(x + dt / 2 * k1, uk)
        k3 = rhs(x + dt / 2 * k2, uk)
        k4 = rhs(x + dt * k3, uk)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        q[k + 1], v[k + 1] = x[: mech.nq], x[mech.nq:]
    return q, v


def energy(mech: Mechanics, q, qdot) -> np.ndarray:
    """Total mechanical energy K + V along a sampled trajectory."""
    return np.array([float(mech.kinetic(ca.DM(a), ca.DM(b))) + float(mech.potential(ca.DM(a)))
                     for a, b in zip(q, qdot)])


@dataclass
class SpinCase:
    """Torque-free spin of the arm-free quadrotor about a tilted body z-axis.

    Roll and pitch then oscillate at the spin rate, which is the stiff part of
    the problem for an explicit integrator.
    """

    dt: float = 0.01
    steps: int = 1000
    spin: float = 20.0
    nutation: float = 0.5
    tilt: float = 0.4
    height: float = 1.0

    def initial_state(self):
        xi = np.array([self.tilt, 0.0, 0.0])
        w_body = np.array([self.nutation, 0.0, self.spin])
        xi_dot = np.asarray(euler_rate_map(xi), dtype=float) @ w_body
        return np.r_[0.0, 0.0, self.height, xi], np.r_[0.0, 0.0, 0.0, xi_dot]


def drift_slope(t, E) -> float:
    """Least-squares slope of energy against time."""
    return float(np.polyfit(t, E, 1)[0])


def energy_benchmark(case: SpinCase | None = None, params=None) -> dict:
    """Integrate ``case`` with the variational integrator and with RK4.

    Both runs are unforced. Energy of the variational run is the Hamiltonian at
    knots 1..N (momentum from the right discrete Legendre transform). Energy of
    the RK4 run is K + V at its states.
    """
    case = case or SpinCase()
    mech = quadrotor_mechanics(params or table1())
    dm = discrete_mechanics(mech)
    q0, qd0 = case.initial_state()
    u = np.zeros((case.steps + 1, mech.nu))

    t0 = time.perf_counter()
    path = dm.simulate(q0, qd0, u, KnotGrid(case.steps, case.dt * case.steps))
    e_del = dm.knot_energy(path, case.dt)
    t_del = time.perf_counter() - t0

    t0 = time.perf_counter()
    q, v = rk4_simulate(mech, q0, qd0, u, case.dt, case.steps)
    e_rk4 = energy(mech, q, v)
    t_rk4 = time.perf_counter() - t0

    t_knots = np.arange(case.steps + 1) * case.dt
    return {
        "del_slope": drift_slope(t_knots[1:], e_del),
        "del_range": float(np.ptp(e_del)),
        "rk4_slope": drift_slope(t_knots, e_rk4),
        "rk4_range": float(np.ptp(e_rk4)),
        "energy0": float(e_rk4[0]),
        "del_time": t_del,
        "rk4_time": t_rk4,
        "del_energy": e_del,
        "rk4_energy": e_rk4,
    }
