"""Tidy CSV series behind the handover and tracking figures (no rendering)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from dmcc import io
from dmcc.geom import rotation_from_euler
from dmcc.model import arm_center_position
from dmcc.planner import EPS_ACTIVE, PlanResult

WINDOW_COLUMNS = (("k_start", "1"), ("k_end", "1"), ("t_start", "s"), ("t_end", "s"), ("eps_mass", "1"))


def contact_windows(result: PlanResult, eps_active: float = EPS_ACTIVE) -> list[list]:
    """Maximal runs of knots with eps >= eps_active.

    The progress mass of sub-threshold knots is attributed to the nearest
    window, so the masses add up to kappa_init exactly (up to rounding).
    """
    eps = result.epsilon
    active = eps >= eps_active
    runs, k = [], 0
    while k < len(eps):
        if active[k]:
            j = k
            while j + 1 < len(eps) and active[j + 1]:
                j += 1
            runs.append([k, j])
            k = j + 1
        else:
            k += 1
    if not runs:
        return []
    mass = np.zeros(len(runs))
    centers = np.array([(a + b) / 2 for a, b in runs])
    for i, e in enumerate(eps):
        mass[int(np.argmin(np.abs(centers - i)))] += e
    t = result.grid.times
    return [[a, b, t[a], t[b + 1], m] for (a, b), m in zip(runs, mass)]


def _write_windows(result, out: Path, stem: str) -> Path:
    path = out / f"{stem}_windows.csv"
    io.write_csv(path, WINDOW_COLUMNS, contact_windows(result))
    return path


FIG5_COLUMNS = (("k", "1"), ("t", "s"), ("x", "m"), ("z", "m"), ("theta", "rad"), ("alpha", "rad"),
                ("arm_x", "m"), ("arm_z", "m"), ("ee_x", "m"), ("ee_z", "m"), ("eps", "1"))


def fig5(result: PlanResult, out: Path) -> list[Path]:
    """Knot poses projected onto the x-z plane with arm and end-effector points."""
    t, q = result.grid.times, result.path.q_knots
    ee = result.end_effector_positions()
    arm = np.array([arm_center_position(qk, result.params) for qk in q])
    N = len(t) - 1
    rows = [[k, t[k], q[k, 0], q[k, 2], q[k, 4], q[k, 6], arm[k, 0], arm[k, 2], ee[k, 0], ee[k, 2],
             result.epsilon[k] if k < N else None] for k in range(N + 1)]
    path = Path(out) / "fig5_poses.csv"
    io.write_csv(path, FIG5_COLUMNS, rows)
    return [path, _write_windows(result, Path(out), "fig5")]


FIG6_COLUMNS = (("k", "1"), ("t", "s"), ("ee_x", "m"), ("ee_y", "m"), ("ee_z", "m"), ("ee_vx", "m/s"),
                ("ee_vy", "m/s"), ("ee_vz", "m/s"), ("target_x", "m"), ("target_y", "m"), ("target_z", "m"),
                ("target_vx", "m/s"), ("target_vy", "m/s"), ("target_vz", "m/s"), ("distance", "m"),
                ("eps", "1"))


def fig6(result: PlanResult, out: Path) -> list[Path]:
    """End-effector and target traces; velocities are forward interval averages."""
    t = result.grid.times
    ee, tg = result.end_effector_positions(), result.target_positions()
    vee, vtg = result.end_effector_velocities(), result.target_velocities()
    N = len(t) - 1
    rows = []
    for k in range(N + 1):
        v = vee[k] if k < N else [None] * 3
        rows.append([k, t[k], *ee[k], *v, *tg[k], *vtg[k], float(np.linalg.norm(ee[k] - tg[k])),
                     result.epsilon[k] if k < N else None])
    path = Path(out) / "fig6_end_effector.csv"
    io.write_csv(path, FIG6_COLUMNS, rows)
    return [path, _write_windows(result, Path(out), "fig6")]


FIG7_COLUMNS = (("k", "1"), ("t", "s"), ("body_yaw", "rad"), ("target_heading", "rad"),
                ("heading_cross", "1"), ("eps", "1"), ("eps_heading_cross", "1"))


def fig7(result: PlanResult, out: Path) -> list[Path]:
    """Body x-axis direction against target motion direction per knot."""
    t, q = result.grid.times, result.path.q_knots
    vt = result.target_velocities()
    cross = result.heading_cross()
    N = len(t) - 1
    rows = []
    for k in range(N + 1):
        xb = rotation_from_euler(q[k, 3:6])[:, 0]
        e = result.epsilon[k] if k < N else None
        c = cross[k] if k < len(cross) else None
        rows.append([k, t[k], float(np.arctan2(xb[1], xb[0])), float(np.arctan2(vt[k, 1], vt[k, 0])),
                     c, e, None if e is None or c is None else e * c])
    path = Path(out) / "fig7_heading.csv"
    io.write_csv(path, FIG7_COLUMNS, rows)
    return [path, _write_windows(result, Path(out), "fig7")]


FIG8_COLUMNS = (("t", "s"), ("x", "m"), ("y", "m"), ("z", "m"), ("x_ref", "m"), ("y_ref", "m"),
                ("z_ref", "m"), ("error", "m"), ("alpha", "rad"))


def fig8(table: np.ndarray, out: Path) -> list[Path]:
    """Tracked against planned position from a closed-loop log."""
    names = [c for c, _ in io.TRACK_COLUMNS]
    idx = [names.index(c) for c, _ in FIG8_COLUMNS]
    path = Path(out) / "fig8_tracking.csv"
    io.write_csv(path, FIG8_COLUMNS, table[:, idx].tolist())
    return [path]
