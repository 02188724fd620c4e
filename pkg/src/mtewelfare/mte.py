"""Parametric MTE estimation by OLS on the propensity-interacted design.

The conditional mean is modelled as

    E[Y | nu(Z)=p, X=x] = x'beta0 + x'(beta1 - beta0) p + sum_{k=2}^K alpha_k p^k,

so that regressing Y on ``((1-p) x, p x, p^2, ..., p^K)`` recovers
``theta = (beta0, beta1, alpha_2, ..., alpha_K)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from ._linalg import normal_equation_residual, solve_normal_equations
from ._validation import add_intercept, as_1d, as_2d
from .dgp import Dataset
from .exceptions import ConfigurationError, DomainError
from .propensity import LinearPropensity


def build_design(nu_hat, x, K=2):
    """Rows ``((1 - nu) x', nu x', nu^2, ..., nu^K)``.

    Parameters
    ----------
    nu_hat : array-like, shape (n,)
    x : array-like, shape (n, p)
        Covariates including the intercept column.
    K : int, >= 2
    """
    if K < 2:
        raise ConfigurationError(f"K must be >= 2, got {K}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    nu = np.asarray(nu_hat, dtype=np.float64).reshape(-1)
    if nu.shape[0] != x.shape[0]:
        raise DomainError("nu_hat and x have different lengths")
    powers = nu[:, None] ** np.arange(2, K + 1)
    return np.column_stack([(1.0 - nu)[:, None] * x, nu[:, None] * x, powers])


@dataclass
class ThetaEstimate:
    beta0_hat: np.ndarray
    beta1_hat: np.ndarray
    alpha_hat: np.ndarray
    K: int
    gram_min_eigenvalue: float = float("nan")
    theta_norm: float = float("nan")
    normal_residual: float = float("nan")

    def __post_init__(self):
        self.beta0_hat = np.asarray(self.beta0_hat, dtype=np.float64)
        self.beta1_hat = np.asarray(self.beta1_hat, dtype=np.float64)
        self.alpha_hat = np.asarray(self.alpha_hat, dtype=np.float64).reshape(-1)
        if self.beta0_hat.shape != self.beta1_hat.shape:
            raise ConfigurationError("beta0_hat and beta1_hat differ in length")
        if self.alpha_hat.shape[0] != self.K - 1:
            raise ConfigurationError(f"alpha_hat must have K-1={self.K - 1} entries")
        if np.isnan(self.theta_norm):
            self.theta_norm = float(np.linalg.norm(self.vector))

    @property
    def vector(self):
        return np.concatenate([self.beta0_hat, self.beta1_hat, self.alpha_hat])

    @property
    def effect(self):
        """``beta1_hat - beta0_hat``."""
        return self.beta1_hat - self.beta0_hat

    @classmethod
    def from_vector(cls, theta, p, K, **kw):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[0] != 2 * p + K - 1:
            raise ConfigurationError(f"theta has length {theta.shape[0]}, expected {2 * p + K - 1}")
        return cls(theta[:p], theta[p:2 * p], theta[2 * p:], K, **kw)

    def to_dict(self):
        return {
            "beta0_hat": self.beta0_hat.tolist(),
            "beta1_hat": self.beta1_hat.tolist(),
            "alpha_hat": self.alpha_hat.tolist(),
            "K": self.K,
            "gram_min_eigenvalue": self.gram_min_eigenvalue,
            "theta_norm": self.theta_norm,
            "normal_residual": self.normal_residual,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def population_theta(spec):
    """Regression coefficients implied by a :class:`DgpSpec` (exact).

    Under the simulated law ``E[Y | p, x] = (1-p) x'beta0 + p x'beta1
    + (rho1 - rho0)(p^2 - p)/2``, so the linear ``-p`` part is absorbed by
    the intercept of ``beta1``.
    """
    half = (spec.rho1 - spec.rho0) / 2.0
    beta1 = spec.beta1.copy()
    beta1[0] -= half
    return ThetaEstimate(spec.beta0.copy(), beta1, np.array([half]), K=2)


def fit_theta(design, y, K=2) -> ThetaEstimate:
    """OLS ``E_n[X X']^{-1} E_n[X y]`` split into ``(beta0, beta1, alpha)``."""
    design = as_2d(design, "design")
    y = as_1d(y, "y", length=design.shape[0])
    width = design.shape[1]
    p, rem = divmod(width - (K - 1), 2)
    if rem or p < 1:
        raise ConfigurationError(f"design width {width} inconsistent with K={K}")
    if design.shape[0] <= width:
        raise DomainError(f"need more than {width} observations, got {design.shape[0]}")
    coef, lam_min = solve_normal_equations(design, y)
    return ThetaEstimate.from_vector(
        coef, p, K,
        gram_min_eigenvalue=lam_min,
        normal_residual=normal_equation_residual(design, y, coef),
    )


def mte_hat(theta: ThetaEstimate, u, x):
    """``x'(beta1 - beta0) + sum_k k alpha_k u^(k-1)``."""
    u = np.asarray(u, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    k = np.arange(2, theta.K + 1)
    poly = (k * theta.alpha_hat * u[..., None] ** (k - 1)).sum(axis=-1)
    return x @ theta.effect + poly


def integrated_kernel(theta: ThetaEstimate, x):
    """``x'(beta1 - beta0) + sum_k alpha_k`` (the MTE integrated over u)."""
    x = np.asarray(x, dtype=np.float64)
    val = x @ theta.effect + theta.alpha_hat.sum()
    return float(val) if np.ndim(val) == 0 else val


@dataclass
class DiagnosticsReport:
    theta_norm: float
    x_fourth_moment: float
    y_fourth_moment: float
    gram_min_eigenvalue: float
    C: float
    c: float

    @property
    def compact_ok(self):
        return self.theta_norm <= self.C

    @property
    def moments_ok(self):
        return max(self.x_fourth_moment, self.y_fourth_moment) < self.C

    @property
    def eigen_ok(self):
        return self.gram_min_eigenvalue >= self.c

    def to_dict(self):
        return {
            "theta_norm": self.theta_norm, "C": self.C, "compact_ok": self.compact_ok,
            "x_fourth_moment": self.x_fourth_moment, "y_fourth_moment": self.y_fourth_moment,
            "moments_ok": self.moments_ok,
            "gram_min_eigenvalue": self.gram_min_eigenvalue, "c": self.c,
            "eigen_ok": self.eigen_ok,
        }


def diagnostics(dataset: Dataset, design, theta: ThetaEstimate = None, C=1e6, c=1e-3):
    """Regularity checks for the plug-in MTE estimator; never raises.

    Compares ``||theta_hat||`` and the fourth moments of ``||X||`` and ``|Y|``
    with ``C``, and the smallest eigenvalue of ``E_n[X X']`` of the design
    with ``c``.  An empty sample reports zero moments and eigenvalue.
    """
    design = np.asarray(design, dtype=np.float64)
    n = dataset.n
    if n == 0:
        x4 = y4 = lam = 0.0
    else:
        x4 = float(np.mean(np.sum(dataset.x ** 2, axis=1) ** 2))
        y4 = float(np.mean(dataset.y ** 4))
        lam = float(np.linalg.eigvalsh(design.T @ design / n)[0]) if design.size else 0.0
    norm = theta.theta_norm if theta is not None else float("nan")
    return DiagnosticsReport(norm, x4, y4, lam, float(C), float(c))


class ParametricMTE(BaseEstimator):
    """Two-step MTE estimator: propensity, then OLS on the interacted design.

    Parameters
    ----------
    K : int, default=2
        Highest power of the propensity in the outcome equation.
    propensity : estimator, optional
        Any object with ``fit(Z, d)``/``predict(Z)``; cloned before fitting.
        Defaults to :class:`LinearPropensity`.

    Attributes
    ----------
    propensity_ : fitted propensity estimator
    theta_ : ThetaEstimate
    design_ : ndarray
    """

    def __init__(self, K=2, propensity=None):
        self.K = K
        self.propensity = propensity

    def fit(self, Z, y, d):
        Z = as_2d(Z, "Z", allow_empty=False)
        y = as_1d(y, "y", length=Z.shape[0])
        d = as_1d(d, "d", length=Z.shape[0])
        prop = clone(self.propensity) if self.propensity is not None else LinearPropensity()
        self.propensity_ = prop.fit(Z, d)
        x = add_intercept(Z[:, 1:])
        self.design_ = build_design(self.propensity_.predict(Z), x, self.K)
        self.theta_ = fit_theta(self.design_, y, self.K)
        return self

    def fit_dataset(self, dataset: Dataset):
        return self.fit(dataset.features, dataset.y, dataset.d)

    def predict(self, Z):
        """Integrated kernel ``int_0^1 MTE_hat(u, x) du`` at each row of ``Z``."""
        check_is_fitted(self, "theta_")
        Z = as_2d(Z, "Z")
        return integrated_kernel(self.theta_, add_intercept(Z[:, 1:]))

    def mte(self, u, x):
        check_is_fitted(self, "theta_")
        return mte_hat(self.theta_, u, x)
