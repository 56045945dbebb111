"""Waypoint racing with progress complementarity, for two dynamics transcriptions.

``del`` uses the forced discrete Euler-Lagrange equations of the quadrotor-only
Lagrangian (arm frozen). ``rk4`` is the baseline: the 12-state rigid-body ODE
discretised with one explicit RK4 step per interval.

Each waypoint j owns a progress chain (eps^j, kappa^j, nu^j) with
kappa^j_0 = 1. Waypoints are visited in order by requiring the cumulative
progress of chain j+1 never to exceed that of chain j, i.e.
kappa^j_k <= kappa^{j+1}_k for every knot.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import casadi as ca
import numpy as np

from dmcc._cas import smooth_norm, smooth_norm_epigraph
from dmcc.discrete import discrete_mechanics
from dmcc.errors import SolverFailure, ValidationError
from dmcc.model import ModelParams, quad_ode, quadrotor_mechanics
from dmcc.nlp import NlpProblem, SolveReport, SolverOptions, Status, solve

MODES = ("del", "rk4")
NORM_DELTA = 1e-6
RELAX_SCHEDULE = (1e-2, 1e-3, 1e-4, 0.0)


@dataclass
class RaceSpec:
    waypoints: list
    q_start: np.ndarray
    q_end: np.ndarray
    tolerance: float = 0.05
    N: int = None
    N_per_segment: int = 30
    mode: str = "del"
    c_u: float = 3e-3
    t_min: float = 0.5
    t_max: float = 60.0
    t_guess: float = None

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        self.q_start = np.asarray(self.q_start, dtype=float)
        self.q_end = np.asarray(self.q_end, dtype=float)
        if self.N is None:
            self.N = self.N_per_segment * (len(self.waypoints) + 1)

    @property
    def n_waypoints(self) -> int:
        return len(self.waypoints)

    def validate(self) -> "RaceSpec":
        errors = {}
        if self.mode not in MODES:
            errors["race.mode"] = f"must be one of {MODES}"
        for name in ("q_start", "q_end"):
            if getattr(self, name).shape != (6,):
                errors[f"race.{name}"] = "expected 6 entries (x, y, z, phi, theta, psi)"
        tol = np.atleast_1d(np.asarray(self.tolerance, dtype=float))
        if np.any(tol <= 0):
            errors["race.tolerance"] = "must be positive"
        if tol.size not in (1, self.n_waypoints):
            errors["race.tolerance"] = "scalar or one value per waypoint"
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            errors["race.N"] = "must be an integer >= 2"
        elif self.n_waypoints > self.N:
            errors["race.N"] = "need at least one knot per waypoint"
        if not 0 < self.t_min < self.t_max:
            errors["race.t_min"] = "need 0 < t_min < t_max"
        if errors:
            raise ValidationError(errors)
        return self

    def to_dict(self) -> dict:
        return {
            "waypoints": self.waypoints.tolist(),
            "q_start": self.q_start.tolist(),
            "q_end": self.q_end.tolist(),
            "tolerance": np.asarray(self.tolerance, dtype=float).tolist(),
            "N": int(self.N),
            "mode": self.mode,
            "c_u": self.c_u,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "t_guess": self.t_guess,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RaceSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError({f"race.{k}": "unknown field" for k in sorted(unknown)})
        missing = {"waypoints", "q_start", "q_end"} - set(d)
        if missing:
            raise ValidationError({f"race.{k}": "missing" for k in sorted(missing)})
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ValidationError({"race": str(exc)}) from None

    def tolerances(self) -> np.ndarray:
        tol = np.atleast_1d(np.asarray(self.tolerance, dtype=float))
        return np.broadcast_to(tol, (self.n_waypoints,)).copy()

    def path_length(self) -> float:
        pts = np.vstack([self.q_start[:3], self.waypoints, self.q_end[:3]])
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


@dataclass
class RaceResult:
    spec: RaceSpec
    t_N: float
    positions: np.ndarray
    states: np.ndarray
    u: np.ndarray
    epsilon: np.ndarray
    kappa: np.ndarray
    report: SolveReport
    wall_time: float = 0.0

    def pass_knots(self) -> np.ndarray:
        """Knot of maximal progress per waypoint."""
        return np.argmax(self.epsilon, axis=1) if self.epsilon.size else np.array([], dtype=int)


@dataclass
class _RaceLayout:
    N: int
    nx: int
    nu: int
    m: int

    def __post_init__(self):
        N, m = self.N, self.m
        i = 1
        self.x = slice(i, i + (N + 1) * self.nx); i += (N + 1) * self.nx
        self.u = slice(i, i + (N + 1) * self.nu); i += (N + 1) * self.nu
        self.eps = slice(i, i + m * N); i += m * N
        self.kappa = slice(i, i + m * (N + 1)); i += m * (N + 1)
        self.nu_ = slice(i, i + m * N); i += m * N
        self.s = slice(i, i + N + 1); i += N + 1
        self.n = i


def rk4_increment(x, u, dt, params):
    k1 = quad_ode(x, u, params)
    k2 = quad_ode(x + dt / 2 * k1, u, params)
    k3 = quad_ode(x + dt / 2 * k2, u, params)
    k4 = quad_ode(x + dt * k3, u, params)
    return (k1 + 2 * k2 + 2 * k3 + k4) / 6


def build_race_nlp(spec: RaceSpec, params: ModelParams, relax: float = 0.0) -> NlpProblem:
    spec.validate()
    mech = quadrotor_mechanics(params)
    qp = mech.params
    N, m = spec.N, spec.n_waypoints
    nx = 6 if spec.mode == "del" else 12
    lay = _RaceLayout(N, nx, 4, m)
    w = ca.SX.sym("w", lay.n)
    tN = w[0]
    dt = tN / N
    X = [w[lay.x][k * nx:(k + 1) * nx] for k in range(N + 1)]
    U = [w[lay.u][k * 4:(k + 1) * 4] for k in range(N + 1)]
    E = [[w[lay.eps][j * N + k] for k in range(N)] for j in range(m)]
    K = [[w[lay.kappa][j * (N + 1) + k] for k in range(N + 1)] for j in range(m)]
    V = [[w[lay.nu_][j * N + k] for k in range(N)] for j in range(m)]
    u_ref = mech.u_hover()

    S = w[lay.s]
    objective = tN + spec.c_u * dt * ca.sum1(S)
    eq, ineq = [], []
    ineq += [smooth_norm_epigraph(U[k] - u_ref, S[k], NORM_DELTA) for k in range(N + 1)]
    zero = np.zeros(6)
    if spec.mode == "del":
        dm = discrete_mechanics(mech)
        eq.append(dm.start_res(X[0], X[1], zero, U[0], U[1], dt))
        eq.append(dm.end_res(X[N - 1], X[N], zero, U[N - 1], U[N], dt))
        for k in range(1, N):
            eq.append(dm.del_res(X[k - 1], X[k], X[k + 1], U[k - 1], U[k], U[k + 1], dt))
        vlo, vhi = mech.qdot_bounds()
        for k in range(N):
            step = X[k + 1] - X[k]
            ineq += [step - dt * ca.DM(vhi), dt * ca.DM(vlo) - step]
    else:
        for k in range(N):
            eq.append(X[k + 1] - X[k] - dt * rk4_increment(X[k], U[k], dt, qp))

    for j in range(m):
        wp = ca.DM(spec.waypoints[j])
        for k in range(N):
            eq.append(E[j][k] - K[j][k] + K[j][k + 1])
            ineq.append(E[j][k] * (smooth_norm(X[k][0:3] - wp, NORM_DELTA) + NORM_DELTA - V[j][k]) - relax)
    for j in range(m - 1):
        for k in range(1, N):
            ineq.append(K[j][k] - K[j + 1][k])

    lbx, ubx = np.full(lay.n, -np.inf), np.full(lay.n, np.inf)
    lbx[0], ubx[0] = spec.t_min, spec.t_max
    qlo, qhi = mech.q_bounds()
    vlo, vhi = mech.qdot_bounds()
    if spec.mode == "del":
        xlo, xhi = qlo, qhi
        x_start, x_end = spec.q_start, spec.q_end
    else:
        xlo, xhi = np.concatenate([qlo, vlo]), np.concatenate([qhi, vhi])
        x_start = np.concatenate([spec.q_start, zero])
        x_end = np.concatenate([spec.q_end, zero])
    xl, xh = np.tile(xlo, N + 1), np.tile(xhi, N + 1)
    xl[:nx] = xh[:nx] = x_start
    xl[-nx:] = xh[-nx:] = x_end
    lbx[lay.x], ubx[lay.x] = xl, xh
    ulo, uhi = mech.u_bounds()
    lbx[lay.u], ubx[lay.u] = np.tile(ulo, N + 1), np.tile(uhi, N + 1)
    lbx[lay.eps], ubx[lay.eps] = 0.0, 1.0
    kl, kh = np.zeros(m * (N + 1)), np.full(m * (N + 1), np.inf)
    for j in range(m):
        kl[j * (N + 1)] = kh[j * (N + 1)] = 1.0
        kl[j * (N + 1) + N] = kh[j * (N + 1) + N] = 0.0
    lbx[lay.kappa], ubx[lay.kappa] = kl, kh
    lbx[lay.nu_] = 0.0
    ubx[lay.nu_] = np.repeat(spec.tolerances(), N)
    lbx[lay.s] = 0.0

    prob = NlpProblem(
        x=w, objective=objective,
        eq=ca.vertcat(*eq) if eq else ca.SX(0, 1),
        ineq=ca.vertcat(*ineq) if ineq else ca.SX(0, 1),
        lbx=lbx, ubx=ubx, x0=race_initial_guess(spec, params, lay),
        blocks={"t_N": slice(0, 1), "x": lay.x, "u": lay.u, "eps": lay.eps, "kappa": lay.kappa, "nu": lay.nu_},
    )
    return prob


def race_time_guess(spec: RaceSpec, params: ModelParams) -> float:
    if spec.t_guess is not None:
        return float(spec.t_guess)
    vmax = float(np.min(np.abs(params.qdot_max[:2])))
    return float(np.clip(2.0 * spec.path_length() / vmax, spec.t_min, spec.t_max))


def race_initial_guess(spec: RaceSpec, params: ModelParams, lay: _RaceLayout | None = None) -> np.ndarray:
    """Piecewise-linear position guess through the waypoints, hover inputs."""
    N, m = spec.N, spec.n_waypoints
    nx = 6 if spec.mode == "del" else 12
    lay = lay or _RaceLayout(N, nx, 4, m)
    x0 = np.zeros(lay.n)
    x0[0] = race_time_guess(spec, params)
    pts = np.vstack([spec.q_start[:3], spec.waypoints, spec.q_end[:3]])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0.0, cum[-1], N + 1)
    pos = np.column_stack([np.interp(s, cum, pts[:, i]) for i in range(3)])
    X = np.zeros((N + 1, nx))
    X[:, :3] = pos
    X[:, 3:6] = np.linspace(spec.q_start[3:6], spec.q_end[3:6], N + 1)
    if nx == 12:
        X[1:-1, 6:9] = np.gradient(pos, axis=0)[1:-1] / (x0[0] / N)
    x0[lay.x] = X.ravel()
    x0[lay.u] = np.tile(quadrotor_mechanics(params).u_hover(), N + 1)
    pass_knot = [int(np.argmin(np.abs(s - cum[j + 1]))) for j in range(m)]
    eps = np.zeros((m, N))
    kap = np.zeros((m, N + 1))
    for j, kp in enumerate(pass_knot):
        kp = min(kp, N - 1)
        eps[j, kp] = 1.0
        kap[j, : kp + 1] = 1.0
    x0[lay.eps] = eps.ravel()
    x0[lay.kappa] = kap.ravel()
    x0[lay.nu_] = np.repeat(spec.tolerances(), N) / 2
    x0[lay.s] = 1e-3
    return x0


def plan_race(spec: RaceSpec, params: ModelParams, solver_options: SolverOptions | None = None,
              raise_on_failure: bool = True, relax_schedule=RELAX_SCHEDULE) -> RaceResult:
    """Solve a race by relaxing the contact complementarity and tightening it.

    Each entry tau of ``relax_schedule`` solves with eps (d - nu) <= tau, warm
    started from the previous stage; the schedule must end with 0, the exact
    problem, whose report is returned.
    """
    if not relax_schedule or relax_schedule[-1] != 0.0:
        raise ValueError("relax_schedule must end with 0.0")
    t0 = time.perf_counter()
    opts = solver_options or SolverOptions(backend="ipopt")
    x, iters = None, 0
    for tau in relax_schedule:
        prob = build_race_nlp(spec, params, relax=tau)
        stage = opts
        if x is not None:
            prob.x0 = x
            stage = SolverOptions.from_dict({**opts.to_dict(), "ipopt": {"mu_init": max(tau, 1e-6), **opts.ipopt}})
        x, _, report = solve(prob, stage)
        iters += report.iterations
    report.iterations = iters
    report.wall_time = time.perf_counter() - t0
    N, m = spec.N, spec.n_waypoints
    nx = 6 if spec.mode == "del" else 12
    lay = _RaceLayout(N, nx, 4, m)
    states = x[lay.x].reshape(N + 1, nx)
    result = RaceResult(
        spec=spec,
        t_N=float(x[0]),
        positions=states[:, :3].copy(),
        states=states,
        u=x[lay.u].reshape(N + 1, 4),
        epsilon=x[lay.eps].reshape(m, N),
        kappa=x[lay.kappa].reshape(m, N + 1),
        report=report,
        wall_time=report.wall_time,
    )
    if raise_on_failure and report.status != Status.OPTIMAL:
        raise SolverFailure(report)
    return result


def sweep(counts, modes, params: ModelParams, solver_options: SolverOptions | None = None,
          seed: int | None = None) -> list[dict]:
    """Solve the seeded course for each waypoint count and mode (serial, fixed order)."""
    from dmcc.targets import RACE_SEED, preset, race_course

    rows = []
    for n in counts:
        base = preset(f"race-{n}")
        if seed is not None and seed != RACE_SEED:
            base.waypoints = race_course(n, seed)
        for mode in modes:
            spec = RaceSpec.from_dict({**base.to_dict(), "mode": mode})
            res = plan_race(spec, params, solver_options, raise_on_failure=False)
            rows.append({"n_waypoints": n, "mode": mode, "t_N": res.t_N, "wall_time": res.wall_time,
                         "optimal": res.report.ok, "status": res.report.status.value})
    return rows
