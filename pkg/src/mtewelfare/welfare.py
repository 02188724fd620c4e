"""Population and empirical social welfare of a decision set.

Population welfare is evaluated two ways on a finite support: directly from
its definition ``E[1{Z in G} Y1 + 1{Z not in G} Y0]`` and through the MTE
representation ``E[Y0] + E[1{Z in G} int_0^1 MTE(u, X) du]``.  The two must
agree for every ``G``; the harness uses the representation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dgp import Dataset, DgpSpec, population_moments
from .exceptions import DomainError, EmptyArm
from .policy import DecisionSet, PolicyClass, argmax_over_class


@dataclass
class WelfareReport:
    w_of_g: float
    e_y0: float
    w_best: float
    regret: float
    method: str

    def row(self):
        return [self.method, self.w_of_g, self.w_best, self.regret]


def brute_force_welfare(spec: DgpSpec, G: DecisionSet) -> float:
    mom = population_moments(spec)
    cells = mom.cells
    inside = G.mask_cells(cells.z0, cells.x)
    per_cell = np.where(inside, mom.mean_y1, mom.mean_y0)
    return float(np.sum(cells.prob * per_cell))


def representation_welfare(spec: DgpSpec, G: DecisionSet) -> float:
    mom = population_moments(spec)
    cells = mom.cells
    inside = G.mask_cells(cells.z0, cells.x)
    kernel = spec.integrated_effect(cells.x)
    return mom.e_y0 + float(np.sum(cells.prob[inside] * kernel[inside]))


def empirical_welfare(dataset: Dataset, kernel: Callable, G: DecisionSet) -> float:
    """``n^-1 sum_i 1{z_i in G} kernel(x_i)`` (the ``E[Y0]`` term is omitted)."""
    if dataset.n == 0:
        raise DomainError("empirical welfare of an empty dataset")
    inside = G.mask_cells(dataset.z0, dataset.x)
    if not inside.any():
        return 0.0
    values = np.asarray(kernel(dataset.x[inside]), dtype=np.float64)
    return float(values.sum() / dataset.n)


def naive_kernel(dataset: Dataset, cell, return_se=False):
    """Treated-minus-untreated mean of ``Y`` among rows with covariates ``cell``.

    ``cell`` is the non-intercept covariate value(s).  With ``return_se`` the
    two-sample standard error is returned as well.
    """
    cell = np.atleast_1d(np.asarray(cell, dtype=np.float64))
    rows = np.all(dataset.x[:, 1:] == cell, axis=1)
    y1 = dataset.y[rows & (dataset.d == 1)]
    y0 = dataset.y[rows & (dataset.d == 0)]
    if y1.size == 0 or y0.size == 0:
        raise EmptyArm(f"cell {cell.tolist()} has {y1.size} treated and {y0.size} untreated rows")
    diff = float(y1.mean() - y0.mean())
    if not return_se:
        return diff
    v1 = y1.var(ddof=1) / y1.size if y1.size > 1 else np.inf
    v0 = y0.var(ddof=1) / y0.size if y0.size > 1 else np.inf
    return diff, float(np.sqrt(v1 + v0))


def population_scores(spec: DgpSpec, cls: PolicyClass):
    """Cell feature points and scores ``P(cell) * int MTE(u, x_cell) du``."""
    cells = spec.cells()
    return cls.features(cells.z0, cells.x), cells.prob * spec.integrated_effect(cells.x)


def oracle_best(spec: DgpSpec, cls: PolicyClass):
    """Best-in-class decision set and its welfare ``W_G``."""
    points, scores = population_scores(spec, cls)
    G = argmax_over_class(cls, points, scores)
    return G, representation_welfare(spec, G)


def welfare_report(spec: DgpSpec, G: DecisionSet, cls: PolicyClass, method="representation"):
    evaluate = {"representation": representation_welfare, "brute_force": brute_force_welfare}[method]
    G_star, _ = oracle_best(spec, cls)
    w, w_best = evaluate(spec, G), evaluate(spec, G_star)
    return WelfareReport(w, population_moments(spec).e_y0, w_best, w_best - w, method)


def regret(spec: DgpSpec, G: DecisionSet, w_best: float) -> float:
    return w_best - representation_welfare(spec, G)
