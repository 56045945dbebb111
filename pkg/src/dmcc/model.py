"""Quadrotor with a one-DoF arm: parameters, kinematics, energies and forces.

Generalized coordinates q = [x, y, z, phi, theta, psi, alpha]; the inputs are the
four motor forces plus the servo torque, u = [f1, f2, f3, f4, tau_servo].
The body rate omega_B is always recovered from Euler-angle rates through
T(xi)^-1 so the Lagrangian is a function of (q, qdot) only.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field

import casadi as ca
import numpy as np

from dmcc._cas import dual, vec
from dmcc.errors import ValidationError
from dmcc.geom import euler_rate_map, euler_rate_map_inv, rotation_about_y, rotation_from_euler

NQ = 7
NU = 5
G = 9.8066


def _tup(x):
    return tuple(float(v) for v in np.asarray(x, dtype=float).reshape(-1))


def _inertia(x):
    a = np.asarray(x, dtype=float)
    if a.shape == (3,):
        a = np.diag(a)
    return tuple(tuple(float(v) for v in row) for row in a)


@dataclass(frozen=True)
class ModelParams:
    m_quadrotor: float = 1.659
    m_arm: float = 0.36
    J_quadrotor: tuple = _inertia([0.0348, 0.0459, 0.0977])
    J_arm: tuple = _inertia([0.0, 0.0019, 0.0])
    l_arm: float = 0.182
    l_offset: float = 0.05
    l_frame: float = 0.33
    c_tau: float = 0.01
    g: float = G
    q_min: tuple = (-10.0, -10.0, 0.0, -math.pi / 4, -math.pi / 4, -math.pi, 0.0)
    q_max: tuple = (10.0, 10.0, 1.5, math.pi / 4, math.pi / 4, math.pi, math.pi)
    qdot_min: tuple = (-1.3, -1.3, -1.15, -8.0, -8.0, -2.0, -math.pi / 2)
    qdot_max: tuple = (1.3, 1.3, 1.15, 8.0, 8.0, 2.0, math.pi / 2)
    u_min: tuple = None
    u_max: tuple = None

    def __post_init__(self):
        for name in ("q_min", "q_max", "qdot_min", "qdot_max"):
            object.__setattr__(self, name, _tup(getattr(self, name)))
        object.__setattr__(self, "J_quadrotor", _inertia(self.J_quadrotor))
        object.__setattr__(self, "J_arm", _inertia(self.J_arm))
        fh = self.f_hover
        if self.u_min is None:
            object.__setattr__(self, "u_min", (0.5 * fh,) * 4 + (-1.5,))
        if self.u_max is None:
            object.__setattr__(self, "u_max", (1.5 * fh,) * 4 + (1.5,))
        object.__setattr__(self, "u_min", _tup(self.u_min))
        object.__setattr__(self, "u_max", _tup(self.u_max))

    @property
    def m_total(self) -> float:
        return self.m_quadrotor + self.m_arm

    @property
    def f_hover(self) -> float:
        return 0.25 * self.m_total * self.g

    @property
    def u_hover(self) -> np.ndarray:
        return np.array([self.f_hover] * 4 + [0.0])

    @property
    def offset_body(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.l_offset])

    def validate(self) -> "ModelParams":
        errors = {}
        for name in ("m_quadrotor", "l_arm", "l_offset", "l_frame", "c_tau", "g"):
            if not getattr(self, name) > 0:
                errors[name] = "must be strictly positive"
        if self.m_arm < 0:
            errors["m_arm"] = "must be non-negative"
        for name in ("J_quadrotor", "J_arm"):
            J = np.array(getattr(self, name))
            if not np.allclose(J, J.T):
                errors[name] = "must be symmetric"
            elif np.linalg.eigvalsh(J).min() < -1e-12:
                errors[name] = "must be positive semi-definite"
        for lo, hi, n in (("q_min", "q_max", NQ), ("qdot_min", "qdot_max", NQ), ("u_min", "u_max", NU)):
            a, b = np.array(getattr(self, lo)), np.array(getattr(self, hi))
            if a.shape != (n,) or b.shape != (n,):
                errors[lo] = f"{lo}/{hi} must have {n} entries"
            elif not np.all(a < b):
                errors[lo] = f"{lo} must be elementwise below {hi}"
        if errors:
            raise ValidationError({f"model.{k}": v for k, v in errors.items()})
        return self

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("J_quadrotor", "J_arm"):
            d[k] = [list(r) for r in d[k]]
        for k in ("q_min", "q_max", "qdot_min", "qdot_max", "u_min", "u_max"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError({f"model.{k}": "unknown field" for k in sorted(unknown)})
        return cls(**d)


def table1() -> ModelParams:
    return ModelParams()


def hardware() -> ModelParams:
    """Parameter set of the real-flight experiments (unvalidated here)."""
    return ModelParams(
        J_quadrotor=_inertia([0.0158, 0.0154, 0.0195]),
        J_arm=_inertia([0.0001, 0.0016, 0.00016]),
        l_offset=0.107,
        qdot_min=(-0.3, -0.3, -0.15, -0.2, -0.2, -0.1, -math.pi / 5),
        qdot_max=(0.3, 0.3, 0.15, 0.2, 0.2, 0.1, math.pi / 5),
    )


CONFIGS = {"table1": table1, "hardware": hardware}


def _split(q):
    q = vec(q)
    return q[0:3], q[3:6], q[6]


@dual
def motor_torque(u, params: ModelParams):
    u = vec(u)
    f1, f2, f3, f4 = u[0], u[1], u[2], u[3]
    k = math.sqrt(2) / 4 * params.l_frame
    return ca.vertcat(
        k * (f2 + f3 - f1 - f4),
        k * (f2 + f4 - f1 - f3),
        params.c_tau * (f3 + f4 - f1 - f2),
    )


@dual
def quad_ode(x, u, params: ModelParams):
    """Rigid quadrotor dynamics on x = [p, xi, v, omega_B] (12 states)."""
    x, u = vec(x), vec(u)
    xi, v, w = x[3:6], x[6:9], x[9:12]
    f_thrust = (u[0] + u[1] + u[2] + u[3]) / params.m_quadrotor
    J = ca.DM(np.array(params.J_quadrotor))
    acc = ca.mtimes(rotation_from_euler(xi), ca.vertcat(0, 0, f_thrust)) - ca.vertcat(0, 0, params.g)
    wdot = ca.solve(J, -ca.cross(w, ca.mtimes(J, w)) + motor_torque(u, params))
    return ca.vertcat(v, ca.mtimes(euler_rate_map(xi), w), acc, wdot)


def _point_on_arm(q, params, length):
    p, xi, alpha = _split(q)
    r_body = ca.DM(params.offset_body) + ca.mtimes(rotation_about_y(alpha), ca.vertcat(length, 0, 0))
    return p + ca.mtimes(rotation_from_euler(xi), r_body)


def _velocity_on_arm(q, qdot, params, length):
    _, xi, alpha = _split(q)
    v, xidot, alphadot = _split(qdot)
    R = rotation_from_euler(xi)
    w = ca.mtimes(euler_rate_map_inv(xi), xidot)
    lever = ca.DM(params.offset_body) + length * ca.vertcat(ca.cos(alpha), 0, -ca.sin(alpha))
    swing = -alphadot * length * ca.mtimes(R, ca.vertcat(ca.sin(alpha), 0, ca.cos(alpha)))
    return v + swing + ca.mtimes(R, ca.cross(w, lever))


@dual
def arm_center_position(q, params: ModelParams):
    return _point_on_arm(q, params, params.l_arm / 2)


@dual
def end_effector_position(q, params: ModelParams):
    return _point_on_arm(q, params, params.l_arm)


@dual
def arm_center_velocity(q, qdot, params: ModelParams):
    return _velocity_on_arm(vec(q), vec(qdot), params, params.l_arm / 2)


@dual
def end_effector_velocity(q, qdot, params: ModelParams):
    return _velocity_on_arm(vec(q), vec(qdot), params, params.l_arm)


@dual
def arm_angular_velocity_bodyaxis(q, qdot, params: ModelParams):
    _, xi, alpha = _split(q)
    _, xidot, alphadot = _split(qdot)
    R = rotation_from_euler(xi)
    Rm = rotation_about_y(alpha)
    w = ca.mtimes(euler_rate_map_inv(xi), xidot)
    xidot_arm = ca.mtimes(R, ca.mtimes(Rm, ca.vertcat(0, alphadot, 0)) + w)
    return ca.mtimes(Rm.T, ca.mtimes(R.T, xidot_arm))


@dual
def kinetic_energy(q, qdot, params: ModelParams):
    q, qdot = vec(q), vec(qdot)
    _, xi, _ = _split(q)
    v = qdot[0:3]
    w = ca.mtimes(euler_rate_map_inv(xi), qdot[3:6])
    Jq = ca.DM(np.array(params.J_quadrotor))
    Ja = ca.DM(np.array(params.J_arm))
    v_arm = _velocity_on_arm(q, qdot, params, params.l_arm / 2)
    w_arm = arm_angular_velocity_bodyaxis(q, qdot, params)
    return (
        0.5 * params.m_quadrotor * ca.dot(v, v)
        + 0.5 * ca.dot(w, ca.mtimes(Jq, w))
        + 0.5 * params.m_arm * ca.dot(v_arm, v_arm)
        + 0.5 * ca.dot(w_arm, ca.mtimes(Ja, w_arm))
    )


@dual
def potential_energy(q, params: ModelParams):
    q = vec(q)
    p_arm = _point_on_arm(q, params, params.l_arm / 2)
    return params.m_quadrotor * params.g * q[2] + params.m_arm * params.g * p_arm[2]


@dual
def lagrangian(q, qdot, params: ModelParams):
    return kinetic_energy(q, qdot, params) - potential_energy(q, params)


@dual
def generalized_force(q, u, params: ModelParams):
    """Map motor forces and servo torque onto the seven generalized coordinates.

    Body torques enter the Euler rows through T^-T (virtual work with
    delta theta_B = T^-1 delta xi). The servo torque acts between body and arm,
    so its virtual work is tau * delta alpha and it only appears in the alpha row:
    the reaction on the body is cancelled by the action on the arm's share of
    delta theta_B.
    """
    q, u = vec(q), vec(u)
    _, xi, _ = _split(q)
    thrust = u[0] + u[1] + u[2] + u[3]
    f_trans = ca.mtimes(rotation_from_euler(xi), ca.vertcat(0, 0, thrust))
    f_rot = ca.mtimes(euler_rate_map_inv(xi).T, motor_torque(u, params))
    return ca.vertcat(f_trans, f_rot, u[4])


def holding_torque(q, params: ModelParams) -> float:
    """Servo torque that balances gravity on the arm at rest: dV/dalpha."""
    qs = ca.SX.sym("q", NQ)
    dV = ca.Function("dV", [qs], [ca.gradient(potential_energy(qs, params), qs)[6]])
    return float(dV(np.asarray(q, dtype=float)))


def hover_input(q, params: ModelParams) -> np.ndarray:
    """Equal rotor forces carrying the full weight plus the servo holding torque."""
    return np.r_[[params.f_hover] * 4, holding_torque(q, params)]


@functools.lru_cache(maxsize=None)
def _mass_matrix_fn(params: ModelParams):
    q = ca.SX.sym("q", NQ)
    qd = ca.SX.sym("qd", NQ)
    K = kinetic_energy(q, qd, params)
    M, _ = ca.hessian(K, qd)
    return ca.Function("mass_matrix", [q], [ca.substitute(M, qd, ca.DM.zeros(NQ))])


def mass_matrix(q, params: ModelParams) -> np.ndarray:
    """Hessian of the kinetic energy in qdot (K is exactly quadratic in qdot)."""
    return np.array(_mass_matrix_fn(params)(np.asarray(q, dtype=float)).full())


@dataclass(frozen=True)
class Mechanics:
    """Lagrangian system fed to the discrete-mechanics layer.

    ``full`` keeps all seven coordinates; the quadrotor-only variant used for
    racing freezes the arm (alpha = 0, no arm mass, no servo input) and drops
    its coordinate and input.
    """

    params: ModelParams
    with_arm: bool = True
    name: str = field(default="arm", compare=False)

    @property
    def nq(self) -> int:
        return NQ if self.with_arm else 6

    @property
    def nu(self) -> int:
        return NU if self.with_arm else 4

    def _pad(self, q, u=None):
        if self.with_arm:
            return q, u
        q = ca.vertcat(q, 0)
        if u is not None:
            u = ca.vertcat(u, 0)
        return q, u

    def lagrangian(self, q, qdot):
        q, _ = self._pad(q)
        qdot, _ = self._pad(qdot)
        return lagrangian(q, qdot, self.params)

    def potential(self, q):
        q, _ = self._pad(q)
        return potential_energy(q, self.params)

    def kinetic(self, q, qdot):
        q, _ = self._pad(q)
        qdot, _ = self._pad(qdot)
        return kinetic_energy(q, qdot, self.params)

    def force(self, q, u):
        q, u = self._pad(q, u)
        f = generalized_force(q, u, self.params)
        return f if self.with_arm else f[0:6]

    def q_bounds(self):
        lo, hi = np.array(self.params.q_min), np.array(self.params.q_max)
        return (lo, hi) if self.with_arm else (lo[:6], hi[:6])

    def qdot_bounds(self):
        lo, hi = np.array(self.params.qdot_min), np.array(self.params.qdot_max)
        return (lo, hi) if self.with_arm else (lo[:6], hi[:6])

    def u_bounds(self):
        lo, hi = np.array(self.params.u_min), np.array(self.params.u_max)
        return (lo, hi) if self.with_arm else (lo[:4], hi[:4])

    def u_hover(self) -> np.ndarray:
        f = 0.25 * self.params.m_total * self.params.g
        return np.array([f] * 4 + ([0.0] if self.with_arm else []))


def arm_mechanics(params: ModelParams) -> Mechanics:
    return Mechanics(params, True)


def quadrotor_mechanics(params: ModelParams) -> Mechanics:
    return Mechanics(params.replace(m_arm=0.0, J_arm=_inertia([0.0, 0.0, 0.0])), False, name="quadrotor")
