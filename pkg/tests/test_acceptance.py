"""Acceptance criteria 1-10, each at its stated tolerance and runtime budget.

A PASS/FAIL line per criterion is printed in the pytest terminal summary.
"""
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE, random_states
from dmcc import io
from dmcc.discrete import boundary_residuals, del_residual, discrete_mechanics
from dmcc.model import (arm_center_position, arm_center_velocity, arm_mechanics, end_effector_position,
                        end_effector_velocity, holding_torque, hover_input, table1)
from dmcc.planner import plan_handover, replay_deviation
from dmcc.racing import sweep
from dmcc.reference import energy_benchmark
from dmcc.targets import preset
from dmcc.tracking import Disturbance, NmpcConfig, hover_reference, run_closed_loop, simulate_loop

FEAS_TOL = 1e-6  # constraint violation the solver is allowed to leave


class Check:
    def __init__(self):
        self.items = []

    def __call__(self, label, ok):
        self.items.append((label, bool(ok)))
        return ok

    @property
    def failed(self):
        return [label for label, ok in self.items if not ok]


@contextmanager
def criterion(n, budget=None, spent=0.0):
    """Record criterion ``n``; ``spent`` is setup time already charged to it."""
    chk = Check()
    t0 = time.perf_counter()
    try:
        yield chk
    except BaseException as exc:
        ACCEPTANCE[n] = (False, f"error: {exc!r}")
        raise
    elapsed = spent + time.perf_counter() - t0
    if budget is not None:
        chk(f"runtime {elapsed:.1f}s <= {budget:g}s", elapsed <= budget)
    detail = "; ".join(label for label, _ in chk.items)
    ACCEPTANCE[n] = (not chk.failed, detail)
    print(f"criterion {n}: {'PASS' if not chk.failed else 'FAIL'} ({detail})")
    assert not chk.failed, f"criterion {n} failed: {chk.failed}"


def _fd(fun, q, qd, h=1e-6):
    return (np.asarray(fun(q + h * qd)) - np.asarray(fun(q - h * qd))) / (2 * h)


def _grad(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def test_criterion_1_kinematics_and_discrete_lagrangian():
    p = table1()
    with criterion(1, budget=10) as check:
        dm = discrete_mechanics(arm_mechanics(p))
        q, qd = random_states(100, seed=11)
        vel_err, ld_err, dt = 0.0, 0.0, 0.05
        for a, v in zip(q, qd):
            for pos, vel in ((arm_center_position, arm_center_velocity),
                             (end_effector_position, end_effector_velocity)):
                vel_err = max(vel_err, np.abs(vel(a, v, p) - _fd(lambda x: pos(x, p), a, v)).max())
            b = a + dt * v
            for ad, num in ((dm.D1Ld(a, b, dt), _grad(lambda x: float(dm.Ld(x, b, dt)), a)),
                            (dm.D2Ld(a, b, dt), _grad(lambda x: float(dm.Ld(a, x, dt)), b))):
                ld_err = max(ld_err, np.abs(np.asarray(ad).ravel() - num).max() / max(1.0, np.abs(num).max()))
        check(f"velocity error {vel_err:.1e} < 1e-5", vel_err < 1e-5)
        check(f"Ld gradient rel error {ld_err:.1e} < 1e-6", ld_err < 1e-6)


def test_criterion_2_symplectic_energy_behaviour():
    with criterion(2, budget=30) as check:
        r = energy_benchmark()
        check(f"DEL slope {r['del_slope']:.1e} J/s < 1e-6", abs(r["del_slope"]) < 1e-6)
        check(f"DEL energy range {r['del_range']:.1e} J bounded", r["del_range"] < 1e-2 * abs(r["energy0"]))
        check(f"RK4 slope {r['rk4_slope']:.1e} J/s larger", abs(r["rk4_slope"]) > abs(r["del_slope"]))


def test_criterion_3_hover_equilibrium():
    p = table1()
    with criterion(3, budget=1) as check:
        q = np.r_[0.2, -0.1, 1.0, 0.0, 0.0, 0.3, np.pi / 2]
        u = hover_input(q, p)
        f_hover = 0.25 * (p.m_quadrotor + p.m_arm) * p.g
        check("per-motor force is (m_q + m_a) g / 4", np.allclose(u[:4], f_hover, rtol=1e-15))
        check("servo input equals static holding torque", u[4] == holding_torque(q, p))
        z = np.zeros(7)
        r = np.abs(del_residual(q, q, q, u, u, u, 0.06, p)).max()
        r0, rN = boundary_residuals(q, q, z, u, u, q, q, z, u, u, 0.06, p)
        rb = max(np.abs(r0).max(), np.abs(rN).max())
        check(f"DEL residual {r:.1e} < 1e-9", r < 1e-9)
        check(f"boundary residual {rb:.1e} < 1e-9", rb < 1e-9)


_PLANS = {}


def _plan(name):
    if name not in _PLANS:
        if name == "circle6":
            spec = preset("circle")
            spec.kappa_init = 6.0
        else:
            spec = preset(name)
        t0 = time.perf_counter()
        res = plan_handover(spec, table1(), raise_on_failure=False)
        _PLANS[name] = (res, time.perf_counter() - t0)
    return _PLANS[name]


def _handover_checks(check, res):
    inv = res.check_invariants()
    check(f"status {res.report.status.value}", res.report.ok)
    check(f"sum eps error {inv['sum_eps_error']:.1e} <= 1e-6", inv["sum_eps_error"] <= 1e-6)
    check(f"{inv['n_active']} active knots >= 2", inv["n_active"] >= 2)
    check(f"contact distance {inv['max_contact_distance']:.7f} <= 0.02",
          inv["max_contact_distance"] <= 0.02 + FEAS_TOL)
    act = res.contact_knots()
    dv = np.linalg.norm(res.end_effector_velocities() - res.target_velocities()[:-1], axis=1)
    ev = float(np.max(res.epsilon[act] * dv[act]))
    check(f"eps*dv {ev:.7f} <= 0.01", ev <= 0.01 + FEAS_TOL)
    dev = replay_deviation(res)
    check(f"replay deviation {dev:.1e} <= 1e-5", dev <= 1e-5)
    return inv


@pytest.mark.slow
def test_criterion_4_static_handover():
    res, spent = _plan("static")
    with criterion(4, budget=300, spent=spent) as check:
        _handover_checks(check, res)
        check(f"t_N {res.t_N:.4f}s", True)


@pytest.mark.slow
def test_criterion_5_linear_handover():
    res, spent = _plan("linear")
    with criterion(5, budget=300, spent=spent) as check:
        _handover_checks(check, res)
        k = int(np.argmax(res.epsilon))
        vx = res.end_effector_velocities()[k, 0]
        check(f"ee x-velocity {vx:.4f} m/s at max-eps knot in [0.05, 0.15]", 0.05 <= vx <= 0.15)


@pytest.mark.slow
def test_criterion_6_circular_handover():
    res, spent = _plan("circle")
    with criterion(6, budget=300, spent=spent) as check:
        inv = _handover_checks(check, res)
        h = float(np.max(res.epsilon * res.heading_cross()))
        check(f"eps*heading {h:.7f} <= 0.1", h <= 0.1 + FEAS_TOL)
        check("invariant report agrees", abs(inv["max_eps_heading"] - h) < 1e-12)


@pytest.mark.slow
def test_criterion_7_kappa_monotonicity():
    (r2, s2), (r6, s6) = _plan("circle"), _plan("circle6")
    with criterion(7, budget=600, spent=s2 + s6) as check:
        check(f"both optimal ({r2.report.status.value}, {r6.report.status.value})", r2.report.ok and r6.report.ok)
        check(f"t_N(6) {r6.t_N:.4f} >= t_N(2) {r2.t_N:.4f} - 1e-4", r6.t_N >= r2.t_N - 1e-4)
        n2, n6 = len(r2.contact_knots()), len(r6.contact_knots())
        check(f"active knots {n6} >= {n2}", n6 >= n2)


@pytest.mark.slow
def test_criterion_8_racing_parity():
    with criterion(8) as check:
        rows = sweep([1, 2, 3, 4], ["del", "rk4"], table1())
        by = {(r["n_waypoints"], r["mode"]): r for r in rows}
        for n in range(1, 5):
            a, b = by[n, "del"], by[n, "rk4"]
            gap = abs(a["t_N"] - b["t_N"]) / b["t_N"]
            check(f"n={n}: del {a['t_N']:.4f}s ({a['wall_time']:.0f}s wall) vs rk4 {b['t_N']:.4f}s "
                  f"({b['wall_time']:.0f}s wall), gap {100 * gap:.2f}% < 5%",
                  a["optimal"] and b["optimal"] and gap < 0.05)


@pytest.mark.slow
def test_criterion_9_tracking():
    with criterion(9, budget=120) as check:
        cfg = NmpcConfig()
        x0 = np.r_[0.3, -0.2, 0.8, 1, 0, 0, 0, 0, 0, 0]
        hover = simulate_loop(hover_reference(), cfg, Disturbance(), 10.0, x0=x0)
        ss = hover.steady_state_error()
        check(f"hover steady-state error {ss:.1e} m < 1e-2", ss < 1e-2)
        res = run_closed_loop(hover_reference(), Disturbance(body=(0.0, 0.0, -0.5)), cfg, use_gpr=True,
                              duration=20.0)
        nom, gpr = res.collection.mean_error(), res.log.mean_error()
        check(f"mean error GPR {gpr:.4f} m < nominal {nom:.4f} m", gpr < nom)
        check("no degraded steps", not res.log.degraded.any() and not res.collection.degraded.any())


@pytest.mark.slow
def test_criterion_10_determinism(tmp_path):
    first, _ = _plan("static")
    with criterion(10) as check:
        again = plan_handover(preset("static"), table1(), raise_on_failure=False)
        scen = io.scenario_from_preset("static")
        a = io.write_plan(first, tmp_path / "a", scenario=scen)[0].read_bytes()
        b = io.write_plan(again, tmp_path / "b", scenario=scen)[0].read_bytes()
        check(f"trajectory CSV identical ({len(a)} bytes)", a == b)
