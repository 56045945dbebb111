"""Closed-loop tracking of a planned trajectory against a simulated plant.

The plant is the nominal quaternion model plus an injected acceleration
disturbance, with ideal body-rate tracking. The arm angle is replayed
open-loop from the plan and only enters through the GP observation vector.
"""
from __future__ import annotations

import functools
import time
from dataclasses import dataclass, field

import casadi as ca
import numpy as np

from dmcc.geom import (euler_rate_map_inv, normalize_quaternion, quaternion_from_euler,
                       rotation_from_quaternion)
from dmcc.tracking.dynamics import G, NX, nominal_ode, observation, rk4
from dmcc.tracking.gp import GprModel
from dmcc.tracking.nmpc import Nmpc, NmpcConfig


@dataclass
class Reference:
    """Time-indexed reference, held constant past its last sample."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float).reshape(len(self.t), NX)
        self.u = np.asarray(self.u, dtype=float).reshape(len(self.t), 4)
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(len(self.t))

    def sample(self, times):
        times = np.clip(np.atleast_1d(times), self.t[0], self.t[-1])
        x = np.column_stack([np.interp(times, self.t, self.x[:, i]) for i in range(NX)])
        x[:, 3:7] /= np.linalg.norm(x[:, 3:7], axis=1, keepdims=True)
        past = np.atleast_1d(times) >= self.t[-1]
        x[past, 7:10] = self.x[-1, 7:10]
        u = np.column_stack([np.interp(times, self.t, self.u[:, i]) for i in range(4)])
        a = np.interp(times, self.t, self.alpha)
        return x, u, a

    def window(self, t0: float, horizon: int, period: float):
        x, u, a = self.sample(t0 + period * np.arange(horizon + 1))
        return x, u[:-1], float(a[0])


def hover_reference(position=(0.0, 0.0, 1.0), alpha: float = np.pi / 2) -> Reference:
    x = np.r_[position, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    return Reference([0.0, 1.0], [x, x], [[0, 0, 0, G]] * 2, [alpha, alpha])


def reference_from_plan(plan) -> Reference:
    """Knot poses of a handover plan converted to the controller's state layout."""
    t = plan.grid.times
    q = plan.path.q_knots
    quat = np.array([quaternion_from_euler(xi) for xi in q[:, 3:6]])
    for k in range(1, len(quat)):
        if quat[k] @ quat[k - 1] < 0:
            quat[k] *= -1
    qdot = np.gradient(q, t, axis=0)
    qdot[0], qdot[-1] = plan.spec.qdot_start, plan.spec.qdot_end
    omega = np.array([euler_rate_map_inv(q[k, 3:6]) @ qdot[k, 3:6] for k in range(len(t))])
    thrust = plan.path.u_knots[:, :4].sum(axis=1) / plan.params.m_total
    x = np.column_stack([q[:, :3], quat, qdot[:, :3]])
    return Reference(t, x, np.column_stack([omega, thrust]), q[:, 6])


@dataclass
class Disturbance:
    """Constant acceleration added to the plant, in body and/or world axes (m/s^2)."""

    body: tuple = (0.0, 0.0, 0.0)
    world: tuple = (0.0, 0.0, 0.0)

    def acceleration(self, x) -> np.ndarray:
        R = rotation_from_quaternion(x[3:7], tol=np.inf)
        return R @ np.asarray(self.body, dtype=float) + np.asarray(self.world, dtype=float)


@functools.lru_cache(maxsize=16)
def _plant_map(dt: float, substeps: int) -> ca.Function:
    x, u = ca.SX.sym("x", NX), ca.SX.sym("u", 4)
    d_body, d_world = ca.SX.sym("db", 3), ca.SX.sym("dw", 3)

    def f(xx, uu):
        R = rotation_from_quaternion(xx[3:7], tol=np.inf)
        return nominal_ode(xx, uu) + ca.vertcat(ca.SX.zeros(7), ca.mtimes(R, d_body) + d_world)

    xn = x
    for _ in range(substeps):
        xn = rk4(f, xn, u, dt / substeps)
    return ca.Function("plant", [x, u, d_body, d_world], [xn])


def plant_step(x, u, dt: float, disturbance: Disturbance, substeps: int = 4) -> np.ndarray:
    """Advance the plant one control period and renormalise the quaternion."""
    xn = _plant_map(float(dt), int(substeps))(x, u, disturbance.body, disturbance.world)
    x = np.asarray(xn, dtype=float).ravel()
    x[3:7] = normalize_quaternion(x[3:7])
    return x


@dataclass
class ClosedLoopLog:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    x_ref: np.ndarray
    alpha: np.ndarray
    degraded: np.ndarray
    wall_time: float = 0.0

    @property
    def position_error(self) -> np.ndarray:
        return np.linalg.norm(self.x[:, :3] - self.x_ref[:, :3], axis=1)

    def mean_error(self) -> float:
        return float(np.mean(self.position_error))

    def steady_state_error(self, tail: float = 0.25) -> float:
        e = self.position_error
        return float(np.max(e[int(len(e) * (1 - tail)):]))

    def residual_data(self, period: float):
        """GP training pairs: observation z_k and body-frame velocity residual."""
        Z, Y = [], []
        for k in range(len(self.t) - 1):
            x, u = self.x[k], self.u[k]
            pred = rk4(nominal_ode, x, u, period)
            a_world = (self.x[k + 1, 7:10] - pred[7:10]) / period
            R = rotation_from_quaternion(x[3:7], tol=np.inf)
            Z.append(np.asarray(observation(x, self.alpha[k])).ravel())
            Y.append(R.T @ a_world)
        return np.array(Z), np.array(Y)


@dataclass
class TrackingResult:
    log: ClosedLoopLog
    collection: ClosedLoopLog = None
    model: GprModel = None
    config: NmpcConfig = field(default_factory=NmpcConfig)


def simulate_loop(reference: Reference, config: NmpcConfig, disturbance: Disturbance,
                  duration: float, model: GprModel | None = None, x0=None) -> ClosedLoopLog:
    t0 = time.perf_counter()
    ctrl = Nmpc(config, model)
    steps = int(round(duration / config.period))
    x = reference.sample(0.0)[0][0] if x0 is None else np.asarray(x0, dtype=float)
    ts, xs, us, refs, alphas, deg = [], [], [], [], [], []
    for k in range(steps + 1):
        t = k * config.period
        xr, ur, a = reference.window(t, config.horizon, config.period)
        res = ctrl.step(x, xr, ur, a)
        ts.append(t); xs.append(x); us.append(res.u); refs.append(xr[0]); alphas.append(a)
        deg.append(res.degraded)
        if k < steps:
            x = plant_step(x, res.u, config.period, disturbance)
    return ClosedLoopLog(np.array(ts), np.array(xs), np.array(us), np.array(refs), np.array(alphas),
                         np.array(deg), time.perf_counter() - t0)


def run_closed_loop(reference, disturbance: Disturbance | None = None, config: NmpcConfig | None = None,
                    use_gpr: bool = False, duration: float = 20.0, gp: GprModel | None = None,
                    seed: int = 0) -> TrackingResult:
    """Track ``reference`` (a Reference or a handover PlanResult).

    With ``use_gpr`` a nominal data-collection pass runs first, the GP is fitted
    on its velocity residuals, and the loop is repeated with the augmented model.
    """
    config = config or NmpcConfig()
    disturbance = disturbance or Disturbance()
    if not isinstance(reference, Reference):
        reference = reference_from_plan(reference)
    nominal = simulate_loop(reference, config, disturbance, duration)
    if not use_gpr:
        return TrackingResult(nominal, config=config)
    model = gp or GprModel()
    Z, Y = nominal.residual_data(config.period)
    model.fit(Z, Y, seed=seed)
    augmented = simulate_loop(reference, config, disturbance, duration, model)
    return TrackingResult(augmented, collection=nominal, model=model, config=config)
