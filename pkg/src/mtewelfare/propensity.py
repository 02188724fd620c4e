"""Propensity score models: linear-in-basis least squares and the oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._linalg import solve_normal_equations
from ._validation import as_1d, as_2d
from .dgp import EPS_P, Dataset, DgpSpec
from .exceptions import ConfigurationError, DomainError


def linear_basis(n_vars):
    """Exponent tuples for ``(1, v_1, ..., v_k)``."""
    basis = [(0,) * n_vars]
    for j in range(n_vars):
        e = [0] * n_vars
        e[j] = 1
        basis.append(tuple(e))
    return basis


def evaluate_basis(Z, basis):
    """Columns ``prod_j Z[:, j] ** e_j`` for each exponent tuple ``e``."""
    Z = np.asarray(Z, dtype=np.float64)
    cols = []
    for e in basis:
        if len(e) != Z.shape[1]:
            raise DomainError(f"basis term {e} does not match {Z.shape[1]} variables")
        cols.append(np.prod(Z ** np.asarray(e, dtype=np.float64), axis=1))
    return np.column_stack(cols) if cols else np.empty((Z.shape[0], 0))


class LinearPropensity(BaseEstimator):
    """Least-squares propensity ``p(z)' gamma`` with clamped predictions.

    Parameters
    ----------
    basis : list of tuple of int, optional
        Monomial exponents over the columns of ``Z``.  Defaults to an
        intercept plus every column (the linear basis).
    eps : float
        Predictions are clipped to ``[eps, 1 - eps]``.

    Attributes
    ----------
    coef_ : ndarray
    basis_ : list of tuple
    gram_min_eigenvalue_ : float
    """

    kind = "fitted"

    def __init__(self, basis=None, eps=EPS_P):
        self.basis = basis
        self.eps = eps

    def fit(self, Z, d):
        Z = as_2d(Z, "Z")
        d = as_1d(d, "d", length=Z.shape[0])
        self.basis_ = [tuple(e) for e in self.basis] if self.basis is not None else linear_basis(Z.shape[1])
        P = evaluate_basis(Z, self.basis_)
        if Z.shape[0] <= P.shape[1]:
            raise DomainError(f"need more than {P.shape[1]} observations, got {Z.shape[0]}")
        self.coef_, self.gram_min_eigenvalue_ = solve_normal_equations(P, d)
        self.n_features_in_ = Z.shape[1]
        return self

    def decision_function(self, Z):
        """Unclamped linear index ``p(z)' gamma``."""
        check_is_fitted(self, "coef_")
        return evaluate_basis(as_2d(Z, "Z"), self.basis_) @ self.coef_

    def predict(self, Z):
        return np.clip(self.decision_function(Z), self.eps, 1.0 - self.eps)

    def dump(self) -> dict:
        check_is_fitted(self, "coef_")
        return {
            "kind": self.kind,
            "basis": [list(e) for e in self.basis_],
            "coef": [float(c) for c in self.coef_],
            "eps": self.eps,
            "gram_min_eigenvalue": self.gram_min_eigenvalue_,
        }


class OraclePropensity(BaseEstimator):
    """The true ``nu(z)`` of a :class:`DgpSpec`; ``fit`` ignores the data."""

    kind = "oracle"

    def __init__(self, spec=None, eps=EPS_P):
        self.spec = spec
        self.eps = eps

    def fit(self, Z=None, d=None):
        if self.spec is None:
            raise ConfigurationError("OraclePropensity requires a spec")
        self.coef_ = self.spec.gamma.copy()
        self.basis_ = linear_basis(self.spec.dim_x)
        return self

    def decision_function(self, Z):
        check_is_fitted(self, "coef_")
        return evaluate_basis(as_2d(Z, "Z"), self.basis_) @ self.coef_

    def predict(self, Z):
        return np.clip(self.decision_function(Z), self.eps, 1.0 - self.eps)

    def dump(self) -> dict:
        return {"kind": self.kind, "basis": [list(e) for e in self.basis_],
                "coef": [float(c) for c in self.coef_], "eps": self.eps}


def fit_linear(dataset: Dataset, basis=None, eps=EPS_P) -> LinearPropensity:
    return LinearPropensity(basis=basis, eps=eps).fit(dataset.features, dataset.d)


@dataclass
class PropensityError:
    max_abs: float
    max_sq: float


def propensity_error(model, dataset: Dataset, spec: DgpSpec = None) -> PropensityError:
    """``max_i |nu_hat(Z_i) - nu(Z_i)|`` and its square."""
    if spec is None:
        raise ConfigurationError("propensity_error needs the true spec")
    if dataset.n == 0:
        return PropensityError(0.0, 0.0)
    err = np.abs(model.predict(dataset.features) - spec.propensity(dataset.z0, dataset.x))
    m = float(err.max())
    return PropensityError(m, m * m)
