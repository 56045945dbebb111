import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import configurations, random_states, velocities
from dmcc.discrete import (KnotGrid, boundary_residuals, del_residual, discrete_forces, discrete_mechanics,
                           simulate, variational_step, verlet_Ld)
from dmcc.errors import SingularAttitude, ValidationError
from dmcc.model import arm_mechanics, hover_input, lagrangian, table1
from dmcc.reference import rk4_simulate


def central_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x); e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_Ld_derivatives_match_central_differences(params):
    dm = discrete_mechanics(arm_mechanics(params))
    q, qd = random_states(100, seed=2)
    dt = 0.05
    worst = 0.0
    for a, v in zip(q, qd):
        b = a + dt * v
        g1 = np.asarray(dm.D1Ld(a, b, dt)).ravel()
        g2 = np.asarray(dm.D2Ld(a, b, dt)).ravel()
        n1 = central_gradient(lambda x: float(dm.Ld(x, b, dt)), a)
        n2 = central_gradient(lambda x: float(dm.Ld(a, x, dt)), b)
        for g, n in ((g1, n1), (g2, n2)):
            worst = max(worst, np.abs(g - n).max() / max(1.0, np.abs(n).max()))
    assert worst < 1e-6


@given(configurations(), velocities(1.0))
def test_Ld_is_trapezoid_of_L_at_average_velocity(q, qd):
    p = table1()
    dt = 0.02
    q1 = q + dt * qd
    ref = 0.5 * dt * (lagrangian(q, qd, p) + lagrangian(q1, qd, p))
    assert verlet_Ld(q, q1, dt, p) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_discrete_forces_average(params):
    u0, u1 = np.r_[5, 5, 5, 5, 0.1], np.r_[4, 6, 5, 5, -0.3]
    q0 = np.r_[0, 0, 1, 0.1, 0.0, 0.2, 1.2]
    q1 = np.r_[0.1, 0, 1, 0.3, -0.2, 0.5, 1.0]
    f_minus, f_plus = discrete_forces(u0, u1, q0, q1, 0.04, params)
    dm = discrete_mechanics(arm_mechanics(params))
    ref = 0.01 * (np.asarray(dm.force(q0, u0)).ravel() + np.asarray(dm.force(q1, u1)).ravel())
    np.testing.assert_allclose(f_minus, ref, atol=1e-14)
    np.testing.assert_allclose(f_plus, ref, atol=1e-14)


def test_hover_equilibrium_residuals(params):
    q = np.r_[0.4, -0.3, 1.0, 0, 0, 0.8, np.pi / 2]
    u = hover_input(q, params)
    z = np.zeros(7)
    r = del_residual(q, q, q, u, u, u, 0.05, params)
    r0, rN = boundary_residuals(q, q, z, u, u, q, q, z, u, u, 0.05, params)
    assert max(np.abs(r).max(), np.abs(r0).max(), np.abs(rN).max()) < 1e-9


@pytest.fixture(scope="module")
def free_flight():
    p = table1()
    mech = arm_mechanics(p)
    q0 = np.r_[0, 0, 1, 0.1, -0.2, 0.3, 1.2]
    qd0 = np.r_[0.3, -0.2, 0.5, 0.4, 0.3, 0.6, 0.8]
    N = 60
    u = np.tile(hover_input(q0, p), (N + 1, 1))
    u[:, 4] = 0.02
    grid = KnotGrid(N, 0.6)
    return p, mech, q0, qd0, u, grid, simulate(q0, qd0, u, grid, p)


def test_simulated_path_satisfies_del(free_flight):
    p, _, q0, qd0, u, grid, path = free_flight
    q, dt = path.q_knots, grid.dt
    for k in range(1, grid.N):
        assert np.abs(del_residual(q[k - 1], q[k], q[k + 1], u[k - 1], u[k], u[k + 1], dt, p)).max() < 1e-9
    r0, _ = boundary_residuals(q[0], q[1], qd0, u[0], u[1], q[-2], q[-1], np.zeros(7), u[-2], u[-1], dt, p)
    assert np.abs(r0).max() < 1e-9
    np.testing.assert_allclose(variational_step(q[3], q[4], u[3], u[4], u[5], dt, p), q[5], atol=1e-10)


def test_second_order_convergence_to_continuous_solution():
    p = table1()
    mech = arm_mechanics(p)
    q0 = np.r_[0, 0, 1, 0.1, -0.2, 0.3, 1.2]
    qd0 = np.r_[0.3, -0.2, 0.5, 0.4, 0.3, 0.6, 0.8]
    T = 0.4
    u_hold = np.r_[hover_input(q0, p)[:4] * [1.02, 0.99, 1.0, 0.98], 0.02]
    q_ref, _ = rk4_simulate(mech, q0, qd0, u_hold, T / 1600, 1600)
    errs = []
    for N in (20, 40, 80):
        path = simulate(q0, qd0, np.tile(u_hold, (N + 1, 1)), KnotGrid(N, T), p)
        errs.append(np.abs(path.q_knots[-1] - q_ref[-1]).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8) and np.all(rates < 2.3), (errs, rates)


def test_discrete_noether_cyclic_momenta():
    # translations in x, y and rotation about world z are symmetries of Ld:
    # with no forces the discrete momentum maps are exactly conserved
    p = table1()
    dm = discrete_mechanics(arm_mechanics(p))
    N, dt = 80, 0.02
    u = np.zeros((N + 1, 5))
    path = dm.simulate(np.r_[0, 0, 1, 0.2, 0.1, 0.0, 1.0], np.r_[0.5, -0.3, 0, 1.0, -0.5, 3.0, 2.0], u,
                       KnotGrid(N, N * dt))
    q = path.q_knots
    moms = np.array([dm.discrete_momentum(q[k], q[k + 1], u[k], u[k + 1], dt)[0] for k in range(N)])
    for i in (0, 1):
        assert np.ptp(moms[:, i]) < 1e-9
    # generator of z rotations: (dx, dy, dpsi) = (-y, x, 1)
    Jz = q[:N, 0] * moms[:, 1] - q[:N, 1] * moms[:, 0] + moms[:, 5]
    assert np.ptp(Jz) < 1e-9
    assert np.ptp(moms[:, 5]) > 1e-3
    # pitch is not cyclic (gravity on the offset arm), so its momentum varies
    assert np.ptp(moms[:, 4]) > 1e-3


def test_discrete_momentum_matching(free_flight):
    # the DEL equation says the two one-sided momenta agree at interior knots
    p, mech, _, _, u, grid, path = free_flight
    dm = discrete_mechanics(mech)
    q, dt = path.q_knots, grid.dt
    for k in (5, 30, 55):
        _, right = dm.discrete_momentum(q[k - 1], q[k], u[k - 1], u[k], dt)
        left, _ = dm.discrete_momentum(q[k], q[k + 1], u[k], u[k + 1], dt)
        np.testing.assert_allclose(left, right, atol=1e-9)


def test_singular_attitude_guard(params):
    q = np.r_[0, 0, 1, 0, np.pi / 2, 0, 1.0]
    u = params.u_hover
    with pytest.raises(SingularAttitude):
        del_residual(q, q, q, u, u, u, 0.1, params)


def test_grid_validation():
    with pytest.raises(ValidationError):
        KnotGrid(1, 1.0)
    with pytest.raises(ValidationError):
        KnotGrid(10, 0.0)
    np.testing.assert_allclose(KnotGrid(4, 2.0).times, [0, 0.5, 1, 1.5, 2])


def test_knot_energy_constant_for_free_translation():
    p = table1()
    dm = discrete_mechanics(arm_mechanics(p.replace(g=0.0)))
    N, dt = 20, 0.05
    path = dm.simulate(np.r_[0, 0, 1, 0, 0, 0, 1.0], np.r_[0.4, 0.1, -0.2, 0, 0, 0, 0], np.zeros((N + 1, 5)),
                       KnotGrid(N, N * dt))
    E = dm.knot_energy(path, dt)
    m = p.m_quadrotor + p.m_arm
    np.testing.assert_allclose(E, 0.5 * m * (0.16 + 0.01 + 0.04), rtol=1e-9)
