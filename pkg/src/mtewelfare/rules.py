"""Statistical decision rules built on the MTE welfare representation.

All rules maximise a score-weighted set objective with
:func:`mtewelfare.policy.argmax_over_class`; they differ only in how the
scores are formed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from ._linalg import SINGULAR_RTOL
from .dgp import Dataset, DgpSpec
from .exceptions import ConfigurationError, SingularDesign
from .mte import ThetaEstimate, integrated_kernel
from .policy import DecisionSet, PolicyClass, argmax_over_class


@dataclass
class CellDistribution:
    """Discrete distribution of ``Z`` as seen by a policy class.

    ``points`` are the class features of each cell, ``x`` the covariates
    (with intercept) that the welfare kernel is evaluated at.
    """

    points: np.ndarray
    x: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if abs(float(np.sum(self.probs)) - 1.0) > 1e-12:
            raise ConfigurationError(f"cell probabilities sum to {np.sum(self.probs)!r}")

    @classmethod
    def from_dataset(cls, dataset: Dataset, policy_class: PolicyClass):
        keys = np.column_stack([policy_class.features(dataset.z0, dataset.x), dataset.x])
        uniq, counts = np.unique(keys, axis=0, return_counts=True)
        q = keys.shape[1] - dataset.x.shape[1]
        return cls(uniq[:, :q], uniq[:, q:], counts / dataset.n)

    @classmethod
    def from_spec(cls, spec: DgpSpec, policy_class: PolicyClass):
        cells = spec.cells()
        return cls(policy_class.features(cells.z0, cells.x), cells.x, cells.prob)


def ewm_known(dataset: Dataset, spec: DgpSpec, cls: PolicyClass) -> DecisionSet:
    """EWM with the true integrated MTE as the kernel."""
    scores = spec.integrated_effect(dataset.x) / dataset.n
    return argmax_over_class(cls, cls.features(dataset.z0, dataset.x), scores)


def ewm_hybrid(dataset: Dataset, theta: ThetaEstimate, cls: PolicyClass) -> DecisionSet:
    """EWM with the kernel integrated from an estimated MTE."""
    scores = integrated_kernel(theta, dataset.x) / dataset.n
    return argmax_over_class(cls, cls.features(dataset.z0, dataset.x), np.atleast_1d(scores))


def plugin_rule(cells: CellDistribution, theta: ThetaEstimate, cls: PolicyClass) -> DecisionSet:
    """Maximise the plug-in population welfare (``E[Y0]`` dropped)."""
    scores = cells.probs * integrated_kernel(theta, cells.x)
    return argmax_over_class(cls, cells.points, np.atleast_1d(scores))


@dataclass
class PosteriorSpec:
    """Independent Gaussian prior on ``theta`` with known noise variance.

    Parameters
    ----------
    prior_mean : array-like or None
        Defaults to zeros.
    prior_scale : float
        Prior standard deviation of every coordinate.  Zero gives a point
        mass at ``prior_mean`` that the data cannot move.
    noise_var : float
        Variance of ``Y`` around the regression function.
    n_draws : int
    """

    prior_mean: Optional[np.ndarray] = None
    prior_scale: float = 10.0
    noise_var: float = 1.0
    n_draws: int = 1000

    def __post_init__(self):
        if not self.prior_scale >= 0:
            raise ConfigurationError("prior_scale must be >= 0")
        if not self.noise_var > 0:
            raise ConfigurationError("noise_var must be > 0")
        if int(self.n_draws) < 1:
            raise ConfigurationError("n_draws must be >= 1")


def gaussian_posterior(design, y, posterior: PosteriorSpec):
    """Conjugate posterior mean and covariance of ``theta``."""
    design = np.asarray(design, dtype=np.float64)
    k = design.shape[1]
    mu0 = np.zeros(k) if posterior.prior_mean is None else np.asarray(posterior.prior_mean, dtype=np.float64)
    if mu0.shape != (k,):
        raise ConfigurationError(f"prior_mean must have length {k}")
    if posterior.prior_scale == 0:
        return mu0.copy(), np.zeros((k, k))
    prec = np.eye(k) / posterior.prior_scale ** 2 + design.T @ design / posterior.noise_var
    evals, evecs = linalg.eigh(prec)
    if not evals[0] >= SINGULAR_RTOL * np.trace(prec):
        raise SingularDesign(float(evals[0]), float(np.trace(prec)), SINGULAR_RTOL)
    cov = (evecs / evals) @ evecs.T
    rhs = mu0 / posterior.prior_scale ** 2 + design.T @ y / posterior.noise_var
    mean = cov @ rhs
    return mean, (cov + cov.T) / 2


def posterior_draws(mean, cov, n_draws, rng):
    """Antithetic draws: the draws average exactly to ``mean`` in exact arithmetic."""
    if not np.any(cov):
        return np.tile(mean, (n_draws, 1))
    L = linalg.cholesky(cov, lower=True)
    half = n_draws // 2
    e = rng.standard_normal((half, mean.shape[0])) @ L.T
    parts = [mean + e, mean - e]
    if n_draws % 2:
        parts.append(mean[None, :])
    return np.vstack(parts)


def bayes_rule(dataset: Dataset, design, posterior: PosteriorSpec, cls: PolicyClass,
               K=2, seed=0, cells: CellDistribution = None) -> DecisionSet:
    """Maximise posterior-averaged welfare with ``Z`` fixed at its empirical law.

    The objective is linear in ``theta``, so this coincides with
    :func:`plugin_rule` at the posterior mean.
    """
    mean, cov = gaussian_posterior(design, dataset.y, posterior)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = posterior_draws(mean, cov, int(posterior.n_draws), rng)
    p = dataset.x.shape[1]
    if cells is None:
        cells = CellDistribution.from_dataset(dataset, cls)
    effect = draws[:, p:2 * p] - draws[:, :p]
    kern = cells.x @ effect.T + draws[:, 2 * p:].sum(axis=1)
    scores = cells.probs * kern.mean(axis=1)
    return argmax_over_class(cls, cells.points, scores)


def posterior_mean_theta(design, y, posterior: PosteriorSpec, p, K=2) -> ThetaEstimate:
    mean, _ = gaussian_posterior(design, y, posterior)
    return ThetaEstimate.from_vector(mean, p, K)
