"""Quaternion point-mass model used by the tracking controller and the plant.

State x = [p (3), q (4, scalar first), v (3)], input u = [omega_B (3), f] with
f the mass-normalised collective thrust.
"""
from __future__ import annotations

import casadi as ca
import numpy as np

from dmcc._cas import dual, vec
from dmcc.geom import quaternion_rate_matrix, rotation_from_quaternion
from dmcc.tracking.gp import GprModel, gpr_posterior_mean

NX, NU = 10, 4
G = 9.8066


def _rot(q):
    # intermediate RK stages are not unit length; the plant renormalises per step
    return rotation_from_quaternion(q, tol=np.inf)


@dual
def nominal_ode(x, u, g: float = G):
    x, u = vec(x), vec(u)
    q, v = x[3:7], x[7:10]
    qdot = 0.5 * ca.mtimes(quaternion_rate_matrix(u[0:3]), q)
    vdot = ca.mtimes(_rot(q), ca.vertcat(0, 0, u[3])) - ca.vertcat(0, 0, g)
    return ca.vertcat(v, qdot, vdot)


def observation(x, alpha):
    """GP input z = [altitude, arm angle, body-frame velocity]."""
    x = vec(x)
    v_body = ca.mtimes(_rot(x[3:7]).T, x[7:10])
    return ca.vertcat(x[2], alpha, v_body)


@dual
def external_acceleration(x, alpha, model: GprModel):
    """B_z R_B mu(z): zero in the p and q rows, rotated GP mean in the v rows."""
    x = vec(x)
    if model is None or not model.trained:
        return ca.DM.zeros(NX, 1) if not isinstance(x, ca.SX) else ca.SX.zeros(NX, 1)
    mu = gpr_posterior_mean(model, observation(x, alpha))
    return ca.vertcat(ca.DM.zeros(7, 1), ca.mtimes(_rot(x[3:7]), vec(mu)))


@dual
def augmented_ode(x, u, model: GprModel = None, alpha=np.pi / 2, g: float = G):
    return nominal_ode(x, u, g) + external_acceleration(x, alpha, model)


def rk4(f, x, u, dt):
    k1 = f(x, u)
    k2 = f(x + dt / 2 * k1, u)
    k3 = f(x + dt / 2 * k2, u)
    k4 = f(x + dt * k3, u)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
