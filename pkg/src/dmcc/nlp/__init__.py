"""Automatic differentiation and nonlinear programming substrate."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import casadi as ca
import numpy as np

from dmcc.nlp.ad import ad_gradient, ad_jacobian
from dmcc.nlp.auglag import solve_auglag
from dmcc.nlp.problem import CompiledNlp, NlpProblem, Status

__all__ = [
    "NlpProblem",
    "SolveReport",
    "SolverOptions",
    "Status",
    "ad_gradient",
    "ad_jacobian",
    "solve",
]


@dataclass
class SolverOptions:
    backend: str = "auglag"  # "auglag" | "ipopt"
    feas_tol: float = 1e-6
    opt_tol: float = 1e-5
    max_outer: int = 60
    max_inner: int = 300
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e10
    max_iter: int = 3000
    ipopt: dict = field(default_factory=dict)
    verbose: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverOptions":
        from dmcc.errors import ValidationError

        known = set(cls.__dataclass_fields__)
        bad = set(d) - known
        if bad:
            raise ValidationError({f"solver.{k}": "unknown option" for k in sorted(bad)})
        if d.get("backend", "auglag") not in ("auglag", "ipopt"):
            raise ValidationError({"solver.backend": "must be 'auglag' or 'ipopt'"})
        return cls(**d)


@dataclass
class SolveReport:
    status: Status
    iterations: int
    objective: float
    max_violation: float
    kkt_residual: float
    wall_time: float
    backend: str = "auglag"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["status"] = self.status.value
        return d


def solve(problem: NlpProblem, options: SolverOptions | None = None):
    """Solve ``problem``; returns (x*, multipliers, SolveReport).

    ``multipliers`` holds "eq" and "ineq" arrays (sign convention: the
    Lagrangian is f + y.eq + z.ineq with z >= 0). The reported status is only
    Optimal when the violation and KKT residual recomputed here meet
    ``feas_tol`` and ``opt_tol``.
    """
    opts = options or SolverOptions()
    if opts.backend == "ipopt":
        return _solve_ipopt(problem, opts)
    if opts.backend != "auglag":
        raise ValueError(f"unknown backend {opts.backend!r}")
    x, mult, status, info = solve_auglag(problem, opts)
    report = SolveReport(
        status=status,
        iterations=info["iterations"],
        objective=info["objective"],
        max_violation=info["max_violation"],
        kkt_residual=info["kkt_residual"],
        wall_time=info["wall_time"],
        backend="auglag",
        message=f"{info['outer_iterations']} outer iterations",
    )
    return x, mult, report


_IPOPT_DEFAULTS = {
    "tol": 1e-8,
    "constr_viol_tol": 1e-9,
    "acceptable_iter": 0,
    "print_level": 0,
    "sb": "yes",
    "mu_strategy": "adaptive",
    "honor_original_bounds": "yes",
}


def _solve_ipopt(prob: NlpProblem, opts: SolverOptions):
    t0 = time.perf_counter()
    ne = prob.n_eq
    g = ca.vertcat(prob.eq, prob.ineq)
    ipopt_opts = dict(_IPOPT_DEFAULTS)
    ipopt_opts["max_iter"] = int(opts.max_iter)
    ipopt_opts["print_level"] = 5 if opts.verbose else 0
    ipopt_opts.update(opts.ipopt)
    solver = ca.nlpsol(
        "dmcc", "ipopt", {"x": prob.x, "f": prob.objective, "g": g},
        {"ipopt": ipopt_opts, "print_time": False},
    )
    lbg = np.concatenate([np.zeros(ne), np.full(prob.n_ineq, -np.inf)])
    ubg = np.zeros(ne + prob.n_ineq)
    x0 = np.clip(prob.x0, prob.lbx, prob.ubx)
    sol = solver(x0=x0, lbx=prob.lbx, ubx=prob.ubx, lbg=lbg, ubg=ubg)
    stats = solver.stats()
    x = np.asarray(sol["x"]).ravel()
    lam = np.asarray(sol["lam_g"]).ravel()
    y, z = lam[:ne], np.maximum(lam[ne:], 0.0)
    fns = CompiledNlp(prob)
    viol = fns.violation(x)
    kkt = fns.kkt_residual(x, y, z)
    rs = stats.get("return_status", "")
    if rs in ("Solve_Succeeded", "Solved_To_Acceptable_Level") and viol <= opts.feas_tol and kkt <= opts.opt_tol:
        status = Status.OPTIMAL
    elif rs in ("Maximum_Iterations_Exceeded", "Maximum_CpuTime_Exceeded"):
        status = Status.MAX_ITER
    elif rs in ("Infeasible_Problem_Detected", "Restoration_Failed"):
        status = Status.INFEASIBLE
    elif rs in ("Solve_Succeeded", "Solved_To_Acceptable_Level"):
        status = Status.NUMERIC_FAILURE
    else:
        status = Status.NUMERIC_FAILURE
    report = SolveReport(
        status=status,
        iterations=int(stats.get("iter_count", 0)),
        objective=float(fns.f(x)),
        max_violation=viol,
        kkt_residual=kkt,
        wall_time=time.perf_counter() - t0,
        backend="ipopt",
        message=rs,
    )
    return x, {"eq": y, "ineq": z}, report
