"""Receding-horizon tracking controller (multiple shooting, RK4, IPOPT)."""
from __future__ import annotations

from dataclasses import dataclass, field

import casadi as ca
import numpy as np

from dmcc.tracking.dynamics import G, NU, NX, augmented_ode, rk4
from dmcc.tracking.gp import GprModel


@dataclass
class NmpcConfig:
    horizon: int = 20
    period: float = 0.02
    Q: tuple = (10.0, 10.0, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    R: tuple = (1.0, 1.0, 1.0, 0.1)
    P: tuple = None  # defaults to Q
    omega_max: tuple = (8.0, 8.0, 2.0)
    thrust_min: float = 0.5 * G
    thrust_max: float = 1.5 * G
    v_max: tuple = (1.3, 1.3, 1.15)
    max_iter: int = 100

    def __post_init__(self):
        self.Q = tuple(float(v) for v in self.Q)
        self.R = tuple(float(v) for v in self.R)
        self.P = self.Q if self.P is None else tuple(float(v) for v in self.P)
        if len(self.Q) != NX or len(self.P) != NX or len(self.R) != NU:
            raise ValueError("Q and P need 10 entries, R needs 4")
        if min(self.Q) <= 0 or min(self.R) <= 0:
            raise ValueError("Q and R must be positive definite")
        if min(self.P) < 0:
            raise ValueError("P must be positive semi-definite")
        if self.horizon < 1 or self.period <= 0:
            raise ValueError("horizon >= 1 and period > 0 required")
        if self.thrust_min > self.thrust_max:
            raise ValueError("thrust_min > thrust_max")

    def u_bounds(self):
        w = np.asarray(self.omega_max, dtype=float)
        return np.r_[-w, self.thrust_min], np.r_[w, self.thrust_max]

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NmpcConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown tracking fields: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def align_quaternions(x_ref: np.ndarray, q_now: np.ndarray) -> np.ndarray:
    """Flip reference quaternions whose dot with ``q_now`` is negative."""
    x_ref = np.array(x_ref, dtype=float, copy=True)
    flip = x_ref[:, 3:7] @ q_now < 0
    x_ref[flip, 3:7] *= -1
    return x_ref


@dataclass
class NmpcStep:
    u: np.ndarray
    degraded: bool
    cost: float
    status: str
    x_pred: np.ndarray = field(repr=False, default=None)


class Nmpc:
    """Compiled controller; reuse across steps (solver build is the slow part)."""

    def __init__(self, config: NmpcConfig, model: GprModel | None = None):
        self.config = config
        self.model = model
        N, dt = config.horizon, config.period
        X = ca.SX.sym("X", NX, N + 1)
        U = ca.SX.sym("U", NU, N)
        x0 = ca.SX.sym("x0", NX)
        Xr = ca.SX.sym("Xr", NX, N + 1)
        Ur = ca.SX.sym("Ur", NU, N)
        alpha = ca.SX.sym("alpha")
        Q, R, P = (ca.diag(ca.DM(w)) for w in (config.Q, config.R, config.P))

        xs, us = ca.SX.sym("xs", NX), ca.SX.sym("us", NU)
        f = ca.Function("f", [xs, us, alpha], [augmented_ode(xs, us, model, alpha)])
        step = ca.Function("step", [xs, us, alpha], [rk4(lambda a, b: f(a, b, alpha), xs, us, dt)])

        J = 0
        g = [X[:, 0] - x0]
        for k in range(N):
            dx, du = X[:, k] - Xr[:, k], U[:, k] - Ur[:, k]
            J += ca.bilin(Q, dx, dx) + ca.bilin(R, du, du)
            g.append(X[:, k + 1] - step(X[:, k], U[:, k], alpha))
        dx = X[:, N] - Xr[:, N]
        J += ca.bilin(P, dx, dx)
        w = ca.vertcat(ca.vec(X), ca.vec(U))
        p = ca.vertcat(x0, ca.vec(Xr), ca.vec(Ur), alpha)
        self._cost = ca.Function("cost", [w, p], [J])
        nlp = {"x": w, "f": J, "g": ca.vertcat(*g), "p": p}
        opts = {
            "ipopt": {"print_level": 0, "sb": "yes", "max_iter": config.max_iter, "tol": 1e-8,
                      "warm_start_init_point": "yes", "mu_init": 1e-3},
            "print_time": False,
        }
        self._solver = ca.nlpsol("nmpc", "ipopt", nlp, opts)
        ulo, uhi = config.u_bounds()
        vmax = np.asarray(config.v_max, dtype=float)
        xlo = np.r_[np.full(7, -np.inf), -vmax]
        xhi = np.r_[np.full(7, np.inf), vmax]
        self._lbw = np.r_[np.tile(xlo, N + 1), np.tile(ulo, N)]
        self._ubw = np.r_[np.tile(xhi, N + 1), np.tile(uhi, N)]
        self._ng = NX * (N + 1)
        self._warm = None
        self.u_prev = np.r_[0.0, 0.0, 0.0, G]

    def reset(self):
        self._warm = None
        self.u_prev = np.r_[0.0, 0.0, 0.0, G]

    @staticmethod
    def _params(x_now, x_ref, u_ref, alpha):
        # casadi vec() is column-major, so knot k of X is row k of x_ref
        return np.r_[x_now, np.ravel(x_ref), np.ravel(u_ref), alpha]

    def cost(self, w, x_now, x_ref, u_ref, alpha=np.pi / 2) -> float:
        return float(self._cost(w, self._params(x_now, x_ref, u_ref, alpha)))

    def replay_candidate(self, x_ref, u_ref) -> np.ndarray:
        """Decision vector that simply follows the reference."""
        return np.r_[x_ref.reshape(-1), u_ref.reshape(-1)]

    def step(self, x_now, x_ref, u_ref, alpha=np.pi / 2) -> NmpcStep:
        """x_ref: (horizon+1, 10), u_ref: (horizon, 4)."""
        N = self.config.horizon
        x_now = np.asarray(x_now, dtype=float)
        x_ref = align_quaternions(np.asarray(x_ref, dtype=float).reshape(N + 1, NX), x_now[3:7])
        u_ref = np.asarray(u_ref, dtype=float).reshape(N, NU)
        p = self._params(x_now, x_ref, u_ref, alpha)
        if self._warm is None:
            w0 = np.r_[np.tile(x_now, N + 1), u_ref.reshape(-1)]
            lam0 = np.zeros(self._ng)
        else:
            w0, lam0 = self._warm
        sol = self._solver(x0=w0, p=p, lbx=self._lbw, ubx=self._ubw, lbg=0, ubg=0, lam_g0=lam0)
        status = self._solver.stats()["return_status"]
        ok = self._solver.stats()["success"]
        w = np.asarray(sol["x"]).ravel()
        if not ok:
            self._warm = None
            return NmpcStep(self.u_prev.copy(), True, float("nan"), status)
        Xs = w[: NX * (N + 1)].reshape(N + 1, NX)
        Us = w[NX * (N + 1):].reshape(N, NU)
        # shift for the next warm start
        Xw = np.vstack([Xs[1:], Xs[-1:]])
        Uw = np.vstack([Us[1:], Us[-1:]])
        lam = np.asarray(sol["lam_g"]).ravel()
        self._warm = (np.r_[Xw.reshape(-1), Uw.reshape(-1)], lam)
        self.u_prev = Us[0].copy()
        return NmpcStep(Us[0].copy(), False, float(sol["f"]), status, Xs)


def nmpc_step(x_now, x_ref, u_ref, config: NmpcConfig, model: GprModel | None = None,
              alpha: float = np.pi / 2) -> NmpcStep:
    """One-shot convenience wrapper; builds a fresh controller each call."""
    return Nmpc(config, model).step(x_now, x_ref, u_ref, alpha)
