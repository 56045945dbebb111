"""Rotation and angular-kinematics primitives.

Euler angles are intrinsic Z-Y-X (yaw, pitch, roll): R = Rz(psi) Ry(theta) Rx(phi),
which is the convention that produces the Euler-rate map below. Quaternions are
scalar-first (qw, qx, qy, qz).

Every function accepts casadi symbols (and then returns expressions) or plain
numbers/arrays (and then returns numpy arrays).
"""
from __future__ import annotations

import casadi as ca
import numpy as np

from dmcc._cas import dual, is_symbolic, vec
from dmcc.errors import NotNormalized, SingularAttitude

COS_THETA_MIN = 1e-6


def _check_pitch(theta):
    if not is_symbolic(theta):
        c = float(ca.cos(theta))
        if abs(c) <= COS_THETA_MIN:
            raise SingularAttitude(f"|cos(theta)| = {abs(c):.2e} <= {COS_THETA_MIN}")


@dual
def rotation_from_euler(xi):
    """Body-to-inertial rotation matrix for Euler angles (phi, theta, psi)."""
    xi = vec(xi)
    phi, theta, psi = xi[0], xi[1], xi[2]
    cph, sph = ca.cos(phi), ca.sin(phi)
    cth, sth = ca.cos(theta), ca.sin(theta)
    cps, sps = ca.cos(psi), ca.sin(psi)
    return ca.vertcat(
        ca.horzcat(cps * cth, cps * sth * sph - sps * cph, cps * sth * cph + sps * sph),
        ca.horzcat(sps * cth, sps * sth * sph + cps * cph, sps * sth * cph - cps * sph),
        ca.horzcat(-sth, cth * sph, cth * cph),
    )


@dual
def euler_rate_map(xi):
    """T(xi) with d(xi)/dt = T(xi) omega_B."""
    xi = vec(xi)
    phi, theta = xi[0], xi[1]
    _check_pitch(theta)
    cph, sph = ca.cos(phi), ca.sin(phi)
    cth, tth = ca.cos(theta), ca.tan(theta)
    return ca.vertcat(
        ca.horzcat(1, sph * tth, cph * tth),
        ca.horzcat(0, cph, -sph),
        ca.horzcat(0, sph / cth, cph / cth),
    )


@dual
def euler_rate_map_inv(xi):
    """Closed-form inverse of T(xi): omega_B = T^-1(xi) d(xi)/dt."""
    xi = vec(xi)
    phi, theta = xi[0], xi[1]
    _check_pitch(theta)
    cph, sph = ca.cos(phi), ca.sin(phi)
    cth, sth = ca.cos(theta), ca.sin(theta)
    return ca.vertcat(
        ca.horzcat(1, 0, -sth),
        ca.horzcat(0, cph, sph * cth),
        ca.horzcat(0, -sph, cph * cth),
    )


@dual
def rotation_about_y(alpha):
    """Arm frame rotation ^B R_m(alpha); alpha measured from the body x-axis."""
    c, s = ca.cos(alpha), ca.sin(alpha)
    return ca.vertcat(ca.horzcat(c, 0, s), ca.horzcat(0, 1, 0), ca.horzcat(-s, 0, c))


@dual
def rotation_from_quaternion(q, tol: float = 1e-6):
    q = vec(q)
    if not is_symbolic(q):
        n = float(ca.norm_2(q))
        if abs(n - 1.0) > tol:
            raise NotNormalized(f"|q| = {n:.9f}")
    w, x, y, z = q[0], q[1], q[2], q[3]
    return ca.vertcat(
        ca.horzcat(1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        ca.horzcat(2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        ca.horzcat(2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    )


@dual
def quaternion_rate_matrix(omega):
    """4x4 skew matrix Q(omega) with dq/dt = 0.5 Q(omega) q."""
    omega = vec(omega)
    wx, wy, wz = omega[0], omega[1], omega[2]
    return ca.vertcat(
        ca.horzcat(0, -wx, -wy, -wz),
        ca.horzcat(wx, 0, wz, -wy),
        ca.horzcat(wy, -wz, 0, wx),
        ca.horzcat(wz, wy, -wx, 0),
    )


def quaternion_from_euler(xi) -> np.ndarray:
    phi, theta, psi = (float(v) for v in np.asarray(xi, dtype=float))
    cr, sr = np.cos(phi / 2), np.sin(phi / 2)
    cp, sp = np.cos(theta / 2), np.sin(theta / 2)
    cy, sy = np.cos(psi / 2), np.sin(psi / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def euler_from_quaternion(q) -> np.ndarray:
    w, x, y, z = normalize_quaternion(q)
    phi = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    theta = np.arcsin(np.clip(2 * (w * y - z * x), -1.0, 1.0))
    psi = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.array([phi, theta, psi])


def normalize_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def skew(v):
    v = vec(v)
    return ca.vertcat(
        ca.horzcat(0, -v[2], v[1]),
        ca.horzcat(v[2], 0, -v[0]),
        ca.horzcat(-v[1], v[0], 0),
    )
