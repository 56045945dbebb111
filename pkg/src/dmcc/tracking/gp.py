"""Per-axis Gaussian-process regression of body-frame acceleration residuals.

Observation vector z = [altitude, arm angle, v_B,x, v_B,y, v_B,z]. Axis i uses
(z, alpha, v_B,i) only. Squared-exponential ARD kernel with fixed
hyperparameters; no marginal-likelihood fitting.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import casadi as ca
import numpy as np
from scipy.linalg import cho_factor, cho_solve

from dmcc._cas import is_symbolic
from dmcc.errors import NotTrained

AXIS_INPUTS = ((0, 1, 2), (0, 1, 3), (0, 1, 4))


@dataclass
class GprModel:
    signal_var: float = 0.25
    length_scales: tuple = (0.5, 1.0, 0.5, 0.5, 0.5)
    noise_var: float = 1e-4
    max_points: int = 40
    Z: np.ndarray = field(default=None, repr=False)
    Y: np.ndarray = field(default=None, repr=False)
    _alpha: list = field(default=None, repr=False)
    _chol: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.signal_var <= 0 or self.noise_var <= 0:
            raise ValueError("signal and noise variance must be positive")
        if len(self.length_scales) != 5 or min(self.length_scales) <= 0:
            raise ValueError("need 5 positive length scales")

    @property
    def trained(self) -> bool:
        return self._alpha is not None

    def _axis_scales(self, axis: int) -> np.ndarray:
        return np.asarray(self.length_scales, dtype=float)[list(AXIS_INPUTS[axis])]

    def kernel(self, A: np.ndarray, B: np.ndarray, axis: int) -> np.ndarray:
        ell = self._axis_scales(axis)
        a = A[:, AXIS_INPUTS[axis]] / ell
        b = B[:, AXIS_INPUTS[axis]] / ell
        d2 = np.sum(a**2, 1)[:, None] + np.sum(b**2, 1)[None, :] - 2 * a @ b.T
        return self.signal_var * np.exp(-0.5 * np.maximum(d2, 0.0))

    def fit(self, Z, Y, seed: int = 0) -> "GprModel":
        """Train on inputs Z (n x 5) and body-frame residuals Y (n x 3).

        Large sets are thinned to ``max_points`` by a seeded random subset so
        the symbolic mean stays small enough for the controller.
        """
        Z = np.asarray(Z, dtype=float).reshape(-1, 5)
        Y = np.asarray(Y, dtype=float).reshape(-1, 3)
        if len(Z) != len(Y):
            raise ValueError("Z and Y must have the same number of rows")
        if len(Z) > self.max_points:
            idx = np.sort(np.random.default_rng(seed).choice(len(Z), self.max_points, replace=False))
            Z, Y = Z[idx], Y[idx]
        self.Z, self.Y = Z, Y
        self._alpha, self._chol = [], []
        for i in range(3):
            if len(Z) == 0:
                self._alpha.append(np.zeros(0))
                self._chol.append(None)
                continue
            K = self.kernel(Z, Z, i) + self.noise_var * np.eye(len(Z))
            c = cho_factor(K, lower=True)
            self._chol.append(c)
            self._alpha.append(cho_solve(c, Y[:, i]))
        return self

    def predict(self, z) -> np.ndarray:
        if not self.trained:
            raise NotTrained("GPR model has not been fitted")
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if len(self.Z) == 0:
            return np.zeros((len(z), 3)).squeeze()
        out = np.column_stack([self.kernel(z, self.Z, i) @ self._alpha[i] for i in range(3)])
        return out.squeeze(0) if out.shape[0] == 1 else out

    def symbolic_mean(self, z):
        """Posterior mean as a casadi expression of a symbolic 5-vector."""
        if not self.trained:
            raise NotTrained("GPR model has not been fitted")
        if len(self.Z) == 0:
            return ca.DM.zeros(3, 1)
        rows = []
        for i in range(3):
            ell = self._axis_scales(i)
            idx = AXIS_INPUTS[i]
            zi = ca.vertcat(*[z[j] for j in idx])
            Zi = ca.DM(self.Z[:, idx].T)
            diff = (ca.repmat(zi, 1, Zi.shape[1]) - Zi) / ca.repmat(ca.DM(ell), 1, Zi.shape[1])
            k = self.signal_var * ca.exp(-0.5 * ca.sum1(diff**2))
            rows.append(ca.mtimes(k, ca.DM(self._alpha[i])))
        return ca.vertcat(*rows)


def gpr_posterior_mean(model: GprModel, z):
    """Body-frame residual acceleration predicted at observation ``z``."""
    if is_symbolic(z):
        return model.symbolic_mean(z)
    if isinstance(z, ca.DM):
        z = z.full().ravel()
    return model.predict(z)
