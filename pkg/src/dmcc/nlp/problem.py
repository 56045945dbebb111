from __future__ import annotations

import enum
from dataclasses import dataclass, field

import casadi as ca
import numpy as np
import scipy.sparse as sp

from dmcc.errors import ValidationError
from dmcc.nlp.ad import casadi_to_scipy_pattern


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"
    NUMERIC_FAILURE = "NumericFailure"


@dataclass
class NlpProblem:
    """min f(x) s.t. eq(x) = 0, ineq(x) <= 0, lbx <= x <= ubx.

    ``x`` is a casadi SX column symbol and the objective/constraints are SX
    expressions in it; ``blocks`` optionally names slices of the decision vector.
    """

    x: ca.SX
    objective: ca.SX
    eq: ca.SX
    ineq: ca.SX
    lbx: np.ndarray
    ubx: np.ndarray
    x0: np.ndarray
    blocks: dict = field(default_factory=dict)
    eq_blocks: dict = field(default_factory=dict)
    ineq_blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.x.numel()
        self.eq = ca.SX(self.eq) if self.eq is not None and self.eq.numel() else ca.SX(0, 1)
        self.ineq = ca.SX(self.ineq) if self.ineq is not None and self.ineq.numel() else ca.SX(0, 1)
        self.lbx = np.asarray(self.lbx, dtype=float).reshape(-1)
        self.ubx = np.asarray(self.ubx, dtype=float).reshape(-1)
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        errors = {}
        for name in ("lbx", "ubx", "x0"):
            if getattr(self, name).size != n:
                errors[name] = f"expected {n} entries"
        if not errors and np.any(self.lbx > self.ubx):
            errors["lbx"] = f"{int(np.sum(self.lbx > self.ubx))} lower bounds exceed upper bounds"
        if errors:
            raise ValidationError({f"nlp.{k}": v for k, v in errors.items()})

    @classmethod
    def from_callables(cls, n, objective, eq=None, ineq=None, lbx=None, ubx=None, x0=None):
        x = ca.SX.sym("x", n)

        def call(fn):
            if fn is None:
                return ca.SX(0, 1)
            out = fn(x)
            return ca.vertcat(*out) if isinstance(out, (list, tuple)) else ca.SX(out)

        return cls(
            x=x,
            objective=ca.SX(objective(x)),
            eq=call(eq),
            ineq=call(ineq),
            lbx=np.full(n, -np.inf) if lbx is None else lbx,
            ubx=np.full(n, np.inf) if ubx is None else ubx,
            x0=np.zeros(n) if x0 is None else x0,
        )

    @property
    def n_vars(self) -> int:
        return self.x.numel()

    @property
    def n_eq(self) -> int:
        return self.eq.numel()

    @property
    def n_ineq(self) -> int:
        return self.ineq.numel()

    @property
    def eq_pattern(self) -> sp.csc_matrix:
        return casadi_to_scipy_pattern(ca.jacobian(self.eq, self.x).sparsity())

    @property
    def ineq_pattern(self) -> sp.csc_matrix:
        return casadi_to_scipy_pattern(ca.jacobian(self.ineq, self.x).sparsity())

    def functions(self) -> "CompiledNlp":
        return CompiledNlp(self)

    def unpack(self, x: np.ndarray) -> dict:
        return {name: np.asarray(x)[sl] for name, sl in self.blocks.items()}


class CompiledNlp:
    """Numeric callbacks of an :class:`NlpProblem`."""

    def __init__(self, prob: NlpProblem):
        x = prob.x
        self.prob = prob
        self.f = ca.Function("f", [x], [prob.objective])
        self.grad = ca.Function("g", [x], [ca.gradient(prob.objective, x)])
        self.c = ca.Function("c", [x], [prob.eq])
        self.h = ca.Function("h", [x], [prob.ineq])
        self.Jc = ca.Function("Jc", [x], [ca.jacobian(prob.eq, x)])
        self.Jh = ca.Function("Jh", [x], [ca.jacobian(prob.ineq, x)])
        y = ca.SX.sym("y", prob.n_eq)
        z = ca.SX.sym("z", prob.n_ineq)
        lag = prob.objective + ca.dot(y, prob.eq) + ca.dot(z, prob.ineq)
        H, _ = ca.hessian(lag, x)
        self.hess = ca.Function("H", [x, y, z], [H])

    def violation(self, x) -> float:
        p = self.prob
        c = np.asarray(self.c(x)).ravel()
        h = np.asarray(self.h(x)).ravel()
        v = 0.0
        if c.size:
            v = max(v, float(np.max(np.abs(c))))
        if h.size:
            v = max(v, float(np.max(h, initial=0.0)))
        v = max(v, float(np.max(p.lbx - x, initial=0.0)), float(np.max(x - p.ubx, initial=0.0)))
        return v

    def kkt_residual(self, x, y, z) -> float:
        """Projected-gradient norm of the Lagrangian, with multiplier scaling.

        Scaled by s_d = max(1, mean |multiplier| / 100) so that large
        complementarity multipliers do not mask stationarity.
        """
        from dmcc.nlp.ad import dm_to_scipy

        p = self.prob
        g = np.asarray(self.grad(x)).ravel()
        if p.n_eq:
            g = g + dm_to_scipy(self.Jc(x)).T @ y
        if p.n_ineq:
            g = g + dm_to_scipy(self.Jh(x)).T @ z
        proj = np.clip(x - g, p.lbx, p.ubx)
        r = float(np.max(np.abs(x - proj), initial=0.0))
        mults = np.concatenate([np.abs(y), np.abs(z)])
        s_d = max(1.0, float(np.mean(mults)) / 100.0) if mults.size else 1.0
        comp = float(np.max(np.abs(z * np.minimum(np.asarray(self.h(x)).ravel(), 0.0)), initial=0.0))
        return max(r / s_d, comp / s_d)
