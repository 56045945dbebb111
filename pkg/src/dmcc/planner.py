"""Time-optimal handover planning with discrete mechanics and complementarity
constraints.

Decision vector layout (N intervals):
    [t_N, q_0..q_N, u_0..u_N, eps_0..eps_{N-1}, kappa_0..kappa_N, nu_0..nu_{N-1}]

Dynamics are the forced discrete Euler-Lagrange equations on interior knots
plus discrete Legendre boundary conditions; eps/kappa form the progress chain
that forces at least kappa_init knots of (relaxed) contact with the target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import casadi as ca
import numpy as np

from dmcc._cas import smooth_norm, smooth_norm_epigraph
from dmcc.discrete import DiscretePath, KnotGrid, discrete_mechanics
from dmcc.errors import SolverFailure, ValidationError
from dmcc.model import NQ, NU, ModelParams, arm_mechanics, end_effector_position, end_effector_velocity
from dmcc.geom import rotation_from_euler
from dmcc.nlp import NlpProblem, SolveReport, SolverOptions, Status, solve
from dmcc.targets import TargetTrack

EPS_ACTIVE = 1e-3
NORM_DELTA = 1e-6
COST_DELTA = 1e-6


def _vec(x, n, name):
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.size != n:
        raise ValidationError({name: f"expected {n} entries, got {a.size}"})
    return a


@dataclass
class HandoverSpec:
    q_start: np.ndarray
    q_end: np.ndarray
    target: TargetTrack
    qdot_start: np.ndarray = None
    qdot_end: np.ndarray = None
    N: int = 50
    kappa_init: float = 2.0
    nu_max: float = 0.02
    c_limit_velocity: float = 0.01
    c_limit_heading: float = 0.1
    c_u: float = 3e-3
    u_ref: np.ndarray = None
    t_min: float = 0.5
    t_max: float = 60.0
    t_guess: float = None

    def __post_init__(self):
        self.q_start = np.asarray(self.q_start, dtype=float)
        self.q_end = np.asarray(self.q_end, dtype=float)
        self.qdot_start = np.zeros(NQ) if self.qdot_start is None else np.asarray(self.qdot_start, float)
        self.qdot_end = np.zeros(NQ) if self.qdot_end is None else np.asarray(self.qdot_end, float)
        if self.u_ref is not None:
            self.u_ref = np.asarray(self.u_ref, dtype=float)

    def validate(self, params: ModelParams) -> "HandoverSpec":
        errors = {}
        for name in ("q_start", "q_end", "qdot_start", "qdot_end"):
            a = getattr(self, name)
            if a.shape != (NQ,):
                errors[f"boundary.{name}"] = f"expected {NQ} entries"
            elif not np.all(np.isfinite(a)):
                errors[f"boundary.{name}"] = "must be finite"
        if self.u_ref is not None and self.u_ref.shape != (NU,):
            errors["constraints.u_ref"] = f"expected {NU} entries"
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            errors["constraints.N"] = "must be an integer >= 2"
        if not self.kappa_init > 0:
            errors["constraints.kappa_init"] = "must be positive (zero demands no contact)"
        elif isinstance(self.N, (int, np.integer)) and self.kappa_init > self.N:
            errors["constraints.kappa_init"] = f"must not exceed N={self.N} since each eps_k <= 1"
        for name in ("nu_max", "c_limit_velocity", "c_limit_heading", "c_u"):
            if getattr(self, name) < 0:
                errors[f"constraints.{name}"] = "must be non-negative"
        if not 0 < self.t_min < self.t_max:
            errors["constraints.t_min"] = "need 0 < t_min < t_max"
        if not errors:
            lo, hi = np.array(params.q_min), np.array(params.q_max)
            for name in ("q_start", "q_end"):
                a = getattr(self, name)
                if np.any(a < lo) or np.any(a > hi):
                    errors[f"boundary.{name}"] = "outside model q bounds"
        if errors:
            raise ValidationError(errors)
        return self

    def reference_input(self, params: ModelParams) -> np.ndarray:
        return params.u_hover if self.u_ref is None else self.u_ref

    def to_dict(self) -> dict:
        return {
            "boundary": {
                "q_start": self.q_start.tolist(),
                "qdot_start": self.qdot_start.tolist(),
                "q_end": self.q_end.tolist(),
                "qdot_end": self.qdot_end.tolist(),
            },
            "target": self.target.to_dict(),
            "constraints": {
                "N": int(self.N),
                "kappa_init": float(self.kappa_init),
                "nu_max": self.nu_max,
                "c_limit_velocity": self.c_limit_velocity,
                "c_limit_heading": self.c_limit_heading,
                "c_u": self.c_u,
                "u_ref": None if self.u_ref is None else self.u_ref.tolist(),
                "t_min": self.t_min,
                "t_max": self.t_max,
                "t_guess": self.t_guess,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HandoverSpec":
        errors = {}
        b = dict(d.get("boundary", {}))
        c = dict(d.get("constraints", {}))
        if "target" not in d:
            errors["target"] = "missing section"
        for k in ("q_start", "q_end"):
            if k not in b:
                errors[f"boundary.{k}"] = "missing"
        known_b = {"q_start", "qdot_start", "q_end", "qdot_end"}
        for k in set(b) - known_b:
            errors[f"boundary.{k}"] = "unknown field"
        known_c = {"N", "kappa_init", "nu_max", "c_limit_velocity", "c_limit_heading", "c_u",
                   "u_ref", "t_min", "t_max", "t_guess"}
        for k in set(c) - known_c:
            errors[f"constraints.{k}"] = "unknown field"
        if "N" in c and not (isinstance(c["N"], int) and not isinstance(c["N"], bool)):
            errors["constraints.N"] = "must be an integer"
        for k in known_c - {"N", "u_ref", "t_guess"}:
            if k in c and not isinstance(c[k], (int, float)):
                errors[f"constraints.{k}"] = "must be a number"
        if errors:
            raise ValidationError(errors)
        target = TargetTrack.from_dict(d["target"])
        try:
            return cls(target=target, **b, **c)
        except (TypeError, ValueError) as exc:
            raise ValidationError({"scenario": str(exc)}) from None


@dataclass
class Layout:
    N: int
    nq: int
    nu: int
    n_chains: int = 1
    effort_slacks: bool = False

    def __post_init__(self):
        N, nq, nu, m = self.N, self.nq, self.nu, self.n_chains
        i = 0
        self.t = slice(i, i + 1); i += 1
        self.q = slice(i, i + (N + 1) * nq); i += (N + 1) * nq
        self.u = slice(i, i + (N + 1) * nu); i += (N + 1) * nu
        self.eps = slice(i, i + m * N); i += m * N
        self.kappa = slice(i, i + m * (N + 1)); i += m * (N + 1)
        self.nu_ = slice(i, i + m * N); i += m * N
        # auxiliary tail, not part of the reported decision vector
        self.s = slice(i, i + (N + 1) * self.effort_slacks); i += (N + 1) * self.effort_slacks
        self.n = i

    def blocks(self) -> dict:
        b = {"t_N": self.t, "q": self.q, "u": self.u, "eps": self.eps, "kappa": self.kappa, "nu": self.nu_}
        if self.effort_slacks:
            b["effort"] = self.s
        return b

    def split(self, x):
        N, m = self.N, self.n_chains
        return dict(
            t_N=x[self.t][0] if not isinstance(x, ca.SX) else x[self.t.start],
            q=_reshape(x[self.q], N + 1, self.nq),
            u=_reshape(x[self.u], N + 1, self.nu),
            eps=_reshape(x[self.eps], m, N),
            kappa=_reshape(x[self.kappa], m, N + 1),
            nu=_reshape(x[self.nu_], m, N),
        )


def _reshape(v, rows, cols):
    if isinstance(v, ca.SX):
        return [v[r * cols:(r + 1) * cols] for r in range(rows)]
    return np.asarray(v).reshape(rows, cols)


def handover_variable_count(N: int) -> int:
    return Layout(N, NQ, NU).n


@dataclass
class PlanResult:
    grid: KnotGrid
    path: DiscretePath
    epsilon: np.ndarray
    kappa: np.ndarray
    nu: np.ndarray
    report: SolveReport
    spec: HandoverSpec = field(repr=False, default=None)
    params: ModelParams = field(repr=False, default=None)

    @property
    def t_N(self) -> float:
        return self.grid.t_N

    @property
    def objective(self) -> float:
        return self.report.objective

    def contact_knots(self, eps_active: float = EPS_ACTIVE) -> np.ndarray:
        return np.flatnonzero(self.epsilon >= eps_active)

    def end_effector_positions(self) -> np.ndarray:
        return np.array([end_effector_position(q, self.params) for q in self.path.q_knots])

    def end_effector_velocities(self) -> np.ndarray:
        """Forward average velocities (N rows, one per interval)."""
        q, dt = self.path.q_knots, self.grid.dt
        return np.array([end_effector_velocity(q[k], (q[k + 1] - q[k]) / dt, self.params)
                         for k in range(self.grid.N)])

    def target_positions(self) -> np.ndarray:
        return np.array([self.spec.target.position(t) for t in self.grid.times])

    def target_velocities(self) -> np.ndarray:
        return np.array([self.spec.target.velocity_at(t) for t in self.grid.times])

    def heading_cross(self) -> np.ndarray:
        """|v_target^xy x x_B^xy| per knot 0..N-1, target direction normalized."""
        out = np.zeros(self.grid.N)
        vt = self.target_velocities()
        for k in range(self.grid.N):
            out[k] = abs(float(_heading_expr(self.path.q_knots[k], vt[k])))
        return out

    def check_invariants(self, feas_tol: float = 1e-6, eps_active: float = EPS_ACTIVE) -> dict:
        """Numbers behind the result invariants (for reporting and tests)."""
        spec = self.spec
        eps = self.epsilon
        d = np.linalg.norm(self.end_effector_positions()[:-1] - self.target_positions()[:-1], axis=1)
        dv = np.linalg.norm(self.end_effector_velocities() - self.target_velocities()[:-1], axis=1)
        act = self.contact_knots(eps_active)
        return {
            "sum_eps_error": abs(float(eps.sum()) - spec.kappa_init),
            "kappa_chain_error": float(np.max(np.abs(eps - (self.kappa[:-1] - self.kappa[1:])))),
            "kappa_ends": (float(self.kappa[0]), float(self.kappa[-1])),
            "n_active": int(act.size),
            "max_contact_distance": float(d[act].max()) if act.size else float("nan"),
            "max_eps_velocity": float(np.max(eps * dv)),
            "max_eps_heading": float(np.max(eps * self.heading_cross())) if spec.target.is_moving else 0.0,
            "max_nu": float(self.nu.max()),
        }


def _heading_expr(q, v_target):
    R = rotation_from_euler(q[3:6])
    xb = R[0:2, 0]
    vx, vy = v_target[0], v_target[1]
    nrm = ca.sqrt(vx**2 + vy**2 + 1e-12)
    return (vx * xb[1] - vy * xb[0]) / nrm


def build_handover_nlp(spec: HandoverSpec, params: ModelParams, cost_delta: float = COST_DELTA,
                       effort_slacks: bool = True) -> NlpProblem:
    """Assemble the handover NLP.

    With ``effort_slacks`` the effort term is written in epigraph form,
    minimising sum(s_k) subject to (s_k + delta)^2 >= |u_k - u_ref|^2 + delta^2,
    s_k >= 0. That has the same minimisers as the smoothed norm but stays well
    conditioned when u_k sits on u_ref, where the norm's curvature is 1/delta.
    """
    spec.validate(params)
    mech = arm_mechanics(params)
    dm = discrete_mechanics(mech)
    N = spec.N
    lay = Layout(N, NQ, NU, effort_slacks=effort_slacks)
    x = ca.SX.sym("w", lay.n)
    v = lay.split(x)
    tN, q, u = v["t_N"], v["q"], v["u"]
    eps, kap, nu = v["eps"][0], v["kappa"][0], v["nu"][0]
    dt = tN / N
    u_ref = spec.reference_input(params)

    # objective: travel time + control effort
    if effort_slacks:
        s = x[lay.s]
        effort = ca.sum1(s)
    else:
        effort = sum(smooth_norm(u[k] - u_ref, cost_delta) for k in range(N + 1))
    objective = tN + spec.c_u * dt * effort

    eq, ineq = [], []
    eq_blocks, ineq_blocks = {}, {}

    def add(lst, blocks, name, exprs):
        start = sum(e.numel() for e in lst)
        e = ca.vertcat(*exprs)
        lst.append(e)
        blocks[name] = slice(start, start + e.numel())

    add(eq, eq_blocks, "boundary_start",
        [dm.start_res(q[0], q[1], spec.qdot_start, u[0], u[1], dt)])
    add(eq, eq_blocks, "boundary_end",
        [dm.end_res(q[N - 1], q[N], spec.qdot_end, u[N - 1], u[N], dt)])
    add(eq, eq_blocks, "del",
        [dm.del_res(q[k - 1], q[k], q[k + 1], u[k - 1], u[k], u[k + 1], dt) for k in range(1, N)])
    add(eq, eq_blocks, "progress", [eps[k] - kap[k] + kap[k + 1] for k in range(N)])

    contact, vel, head = [], [], []
    vlo, vhi = mech.qdot_bounds()
    avg_vel = []
    for k in range(N):
        t_k = k * dt
        qd = (q[k + 1] - q[k]) / dt
        p_ee = end_effector_position(q[k], params)
        v_ee = end_effector_velocity(q[k], qd, params)
        p_t = spec.target.position(t_k)
        v_t = spec.target.velocity_at(t_k)
        # smooth_norm + delta >= |.|, so the contact bound holds for the true distance too
        dist = smooth_norm(p_ee - p_t, NORM_DELTA) + NORM_DELTA
        contact.append(eps[k] * (dist - nu[k]))
        vel.append(eps[k] ** 2 * ca.sumsqr(v_ee - v_t) / spec.c_limit_velocity**2 - 1.0)
        if spec.target.is_moving:
            c = eps[k] * _heading_expr(q[k], v_t)
            head += [c / spec.c_limit_heading - 1.0, -c / spec.c_limit_heading - 1.0]
        step = q[k + 1] - q[k]
        avg_vel += [step - dt * ca.DM(vhi), dt * ca.DM(vlo) - step]
    # eps (d - nu) <= 0 has the same feasible set as the equality because nu is
    # free in [0, nu_max], and it is much better conditioned for interior point
    add(ineq, ineq_blocks, "contact", contact)
    if effort_slacks:
        add(ineq, ineq_blocks, "effort", [smooth_norm_epigraph(u[k] - u_ref, s[k], cost_delta)
                                          for k in range(N + 1)])
    add(ineq, ineq_blocks, "avg_velocity", avg_vel)
    add(ineq, ineq_blocks, "velocity_match", vel)
    if head:
        add(ineq, ineq_blocks, "heading", head)

    lbx, ubx = _bounds(lay, spec, params)
    x0 = initial_guess(spec, params)
    if effort_slacks:
        lbx[lay.s] = 0.0
        x0 = np.concatenate([x0, np.full(N + 1, 1e-3)])
    prob = NlpProblem(
        x=x, objective=objective, eq=ca.vertcat(*eq), ineq=ca.vertcat(*ineq),
        lbx=lbx, ubx=ubx, x0=x0,
        blocks=lay.blocks(), eq_blocks=eq_blocks, ineq_blocks=ineq_blocks,
    )
    return prob


def _bounds(lay: Layout, spec: HandoverSpec, params: ModelParams):
    N = lay.N
    lbx = np.full(lay.n, -np.inf)
    ubx = np.full(lay.n, np.inf)
    lbx[lay.t], ubx[lay.t] = spec.t_min, spec.t_max
    qlo = np.tile(params.q_min, N + 1)
    qhi = np.tile(params.q_max, N + 1)
    qlo[:NQ] = qhi[:NQ] = spec.q_start
    qlo[-NQ:] = qhi[-NQ:] = spec.q_end
    lbx[lay.q], ubx[lay.q] = qlo, qhi
    lbx[lay.u], ubx[lay.u] = np.tile(params.u_min, N + 1), np.tile(params.u_max, N + 1)
    lbx[lay.eps], ubx[lay.eps] = 0.0, 1.0
    klo, khi = np.zeros(N + 1), np.full(N + 1, np.inf)
    klo[0] = khi[0] = spec.kappa_init
    klo[-1] = khi[-1] = 0.0
    lbx[lay.kappa], ubx[lay.kappa] = klo, khi
    lbx[lay.nu_], ubx[lay.nu_] = 0.0, spec.nu_max
    return lbx, ubx


def default_time_guess(spec: HandoverSpec, params: ModelParams) -> float:
    if spec.t_guess is not None:
        return float(spec.t_guess)
    # twice the time needed to fly start -> target -> end at the lateral speed limit
    p0 = end_effector_position(spec.q_start, params)
    p1 = end_effector_position(spec.q_end, params)
    via = spec.target.position(0.0)
    length = np.linalg.norm(via - p0) + np.linalg.norm(p1 - via)
    vmax = float(np.min(np.abs(params.qdot_max[:2])))
    return float(np.clip(2.0 * length / vmax, spec.t_min, spec.t_max))


def initial_guess(spec: HandoverSpec, params: ModelParams, kind: str = "via_target") -> np.ndarray:
    """Starting point for the solver.

    ``straight``: linear interpolation of the boundary poses, uniform eps.
    ``via_target``: the pose path is bent so that the end effector sits on the
    target over a short window of knots (placed by distance ratio), and the
    progress budget is spread over that window only.
    """
    N = spec.N
    lay = Layout(N, NQ, NU)
    x0 = np.zeros(lay.n)
    T = default_time_guess(spec, params)
    x0[lay.t] = T
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    q = (1 - s) * spec.q_start + s * spec.q_end
    eps = np.full(N, spec.kappa_init / N)
    if kind == "via_target":
        p0 = end_effector_position(spec.q_start, params)
        p1 = end_effector_position(spec.q_end, params)
        via = spec.target.position(0.0)
        l0, l1 = np.linalg.norm(via - p0), np.linalg.norm(p1 - via)
        width = max(2 * math.ceil(spec.kappa_init), 4)
        kc = int(round(l0 / (l0 + l1) * N))
        a = int(np.clip(kc - width // 2, 1, N - 1 - width))
        b = a + width
        times = np.linspace(0.0, T, N + 1)
        mid = 0.5 * (spec.q_start + spec.q_end)
        lever = end_effector_position(mid, params) - mid[:3]
        for k in range(a, b):
            q[k] = mid
            q[k, :3] = spec.target.position(times[k]) - lever
        for k in range(1, a):
            w = k / a
            q[k] = (1 - w) * spec.q_start + w * q[a]
        for k in range(b, N):
            w = (k - b + 1) / (N - b + 1)
            q[k] = (1 - w) * q[b - 1] + w * spec.q_end
        eps = np.zeros(N)
        eps[a:b] = spec.kappa_init / width
    elif kind != "straight":
        raise ValueError(f"unknown initial guess kind {kind!r}")
    x0[lay.q] = q.ravel()
    x0[lay.u] = np.tile(spec.reference_input(params), N + 1)
    x0[lay.eps] = eps
    x0[lay.kappa] = spec.kappa_init - np.concatenate([[0.0], np.cumsum(eps)])
    x0[lay.nu_] = spec.nu_max / 2
    return x0


def default_solver_options() -> SolverOptions:
    return SolverOptions(backend="ipopt")


def plan_handover(spec: HandoverSpec, params: ModelParams, solver_options: SolverOptions | None = None,
                  raise_on_failure: bool = True) -> PlanResult:
    opts = solver_options or default_solver_options()
    prob = build_handover_nlp(spec, params)
    x, _, report = solve(prob, opts)
    result = unpack_result(x, report, spec, params)
    if raise_on_failure and report.status != Status.OPTIMAL:
        raise SolverFailure(report)
    return result


def unpack_result(x, report, spec, params) -> PlanResult:
    lay = Layout(spec.N, NQ, NU)
    v = lay.split(np.asarray(x))
    grid = KnotGrid(spec.N, float(v["t_N"]))
    return PlanResult(
        grid=grid,
        path=DiscretePath(v["q"], v["u"]),
        epsilon=v["eps"][0],
        kappa=v["kappa"][0],
        nu=v["nu"][0],
        report=report,
        spec=spec,
        params=params,
    )


def replay_deviation(result: PlanResult) -> float:
    """Max per-coordinate gap between the plan knots and a variational-integrator replay."""
    dm = discrete_mechanics(arm_mechanics(result.params))
    sim = dm.simulate(result.path.q_knots[0], result.spec.qdot_start, result.path.u_knots, result.grid)
    return float(np.max(np.abs(sim.q_knots - result.path.q_knots)))
