"""Horseshoe shrinkage on the free covariance coefficients.

Half-Cauchy scales use the inverse-gamma auxiliary representation
(Makalic & Schmidt, 2016): tau^2 | nu ~ IG(1/2, 1/nu), nu ~ IG(1/2, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass
class HorseshoeState:
    """Local scales are stored as squares, one per free coefficient.

    ``tau2[j]`` and ``nu[j]`` are arrays of length j (equation j has j
    regressors under 0-based indexing); ``lam2`` and ``xi`` are shared
    across all equations.
    """

    tau2: list
    nu: list
    lam2: float = 1.0
    xi: float = 1.0

    @classmethod
    def initial(cls, M: int) -> "HorseshoeState":
        return cls(tau2=[np.ones(j) for j in range(M)], nu=[np.ones(j) for j in range(M)])

    def prior_variances(self, j: int) -> np.ndarray:
        return self.lam2 * self.tau2[j]

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        tau2 = np.concatenate([np.asarray(t, dtype=float) for t in self.tau2]) if self.tau2 else np.empty(0)
        nu = np.concatenate([np.asarray(v, dtype=float) for v in self.nu]) if self.nu else np.empty(0)
        return tau2, nu


def _inv_gamma(shape, rate, rng):
    return rate / rng.gamma(shape, size=np.shape(rate)) if np.ndim(rate) else rate / rng.gamma(shape)


def horseshoe_conditional_params(a, lam2, nu):
    """(shape, rate) of the inverse-gamma conditional for a local scale tau^2.

    ``lam2`` is the squared global scale.
    """
    return 1.0, 1.0 / nu + np.asarray(a) ** 2 / (2.0 * lam2)


def update_scales(a_rows, state: HorseshoeState, rng: np.random.Generator) -> HorseshoeState:
    """One auxiliary-variable Gibbs pass for all local and the global scale."""
    tau2, nu = [], []
    for a, t2, v in zip(a_rows, state.tau2, state.nu):
        a = np.asarray(a, dtype=float)
        if a.size == 0:
            tau2.append(np.empty(0))
            nu.append(np.empty(0))
            continue
        shape, rate = horseshoe_conditional_params(a, state.lam2, v)
        t2 = _inv_gamma(shape, rate, rng)
        nu.append(_inv_gamma(1.0, 1.0 + 1.0 / t2, rng))
        tau2.append(t2)
    a_all = np.concatenate([np.asarray(a, dtype=float) for a in a_rows]) if a_rows else np.empty(0)
    t_all = np.concatenate(tau2) if tau2 else np.empty(0)
    p = a_all.size
    if p == 0:
        return HorseshoeState(tau2, nu, state.lam2, state.xi)
    lam2 = _inv_gamma((p + 1) / 2.0, 1.0 / state.xi + np.sum(a_all**2 / t_all) / 2.0, rng)
    xi = _inv_gamma(1.0, 1.0 + 1.0 / lam2, rng)
    return HorseshoeState(tau2, nu, float(lam2), float(xi))


def covariance_row_posterior(r, Z, w, prior_var) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of a_j | rest: N(V Z'W^-1 r, V), V = (Z'W^-1 Z + D^-1)^-1."""
    Z = np.asarray(Z, dtype=float)
    Zw = Z / np.asarray(w, dtype=float)[:, None]
    prec = Zw.T @ Z + np.diag(1.0 / np.asarray(prior_var, dtype=float))
    V = linalg.inv(prec)
    V = 0.5 * (V + V.T)
    return V @ (Zw.T @ np.asarray(r, dtype=float)), V


def sample_covariance_row(r, Z, w, prior_var, rng: np.random.Generator) -> np.ndarray:
    """Draw the coefficients of one equation on the earlier equations' residuals."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] == 0:
        return np.empty(0)
    w = np.asarray(w, dtype=float)
    Zw = Z / w[:, None]
    prec = Zw.T @ Z + np.diag(1.0 / np.asarray(prior_var, dtype=float))
    L = np.linalg.cholesky(prec)
    mean = linalg.cho_solve((L, True), Zw.T @ np.asarray(r, dtype=float))
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(Z.shape[1]), lower=False)
