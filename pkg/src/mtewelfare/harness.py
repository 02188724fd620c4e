"""Monte Carlo estimation of worst-case expected regret and its rate in n."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .dgp import DgpSpec, simulate
from .exceptions import ConfigurationError, HarnessError, SingularDesign
from .mte import ParametricMTE
from .policy import DecisionSet, PolicyClass, vc_dimension
from .propensity import LinearPropensity, OraclePropensity
from .rules import (CellDistribution, PosteriorSpec, bayes_rule, ewm_hybrid, ewm_known,
                    plugin_rule)
from .welfare import oracle_best, representation_welfare

RULES = ("ewm_known", "ewm_hybrid", "plugin", "bayes", "never_treat")


@dataclass
class ExperimentConfig:
    family: List[DgpSpec]
    n_grid: Sequence[int]
    replications: int
    rule: str = "ewm_known"
    propensity: str = "fitted"
    K: int = 2
    policy_class: PolicyClass = field(default_factory=PolicyClass.power_set)
    master_seed: int = 0
    posterior: PosteriorSpec = field(default_factory=PosteriorSpec)
    max_failure_rate: float = 0.05

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.family:
            raise ConfigurationError("family: at least one spec is required")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or not self.n_grid:
            raise ConfigurationError("n_grid must be non-empty and strictly increasing")
        if self.n_grid[0] < 1:
            raise ConfigurationError("n_grid entries must be >= 1")
        if int(self.replications) < 1:
            raise ConfigurationError("replications must be >= 1")
        if self.rule not in RULES:
            raise ConfigurationError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.propensity not in ("oracle", "fitted"):
            raise ConfigurationError(f"propensity must be 'oracle' or 'fitted', got {self.propensity!r}")
        for spec in self.family:
            effect = np.abs(spec.integrated_effect(spec.x_support))
            if effect.max() > spec.m_bar:
                raise ConfigurationError(f"family member {spec.name} violates its m_bar bound")

    @property
    def psi_n(self):
        """Kernel-estimation rate attached to the pipeline (sqrt(n) for the linear propensity)."""
        if self.rule == "ewm_known":
            return None
        return "sqrt(n)"


@dataclass
class RegretCurve:
    spec_ids: List[str]
    n_grid: List[int]
    mean: np.ndarray        # (n_specs, n_n)
    stderr: np.ndarray
    failures: np.ndarray
    replications: int

    @property
    def worst_case(self):
        return self.mean.max(axis=0)

    @property
    def worst_spec(self):
        return self.mean.argmax(axis=0)

    @property
    def scaled(self):
        return np.sqrt(np.asarray(self.n_grid, dtype=np.float64)) * self.worst_case

    def write(self, stream, precision=17, provenance=None):
        """Delimited rows per (spec, n) followed by a ``# slope`` summary block."""
        fmt = lambda v: format(float(v), f".{precision}g")
        if provenance:
            stream.write(f"# {provenance}\n")
        stream.write("spec_id,n,mean_regret,stderr,worst_case,scaled_regret,failures\n")
        worst, scaled = self.worst_case, self.scaled
        for j, n in enumerate(self.n_grid):
            for i, sid in enumerate(self.spec_ids):
                stream.write(",".join([sid, str(n), fmt(self.mean[i, j]), fmt(self.stderr[i, j]),
                                       fmt(worst[j]), fmt(scaled[j]), str(int(self.failures[i, j]))]) + "\n")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                slope, se = fit_rate(self)
            stream.write(f"# slope={fmt(slope)},stderr={fmt(se)}\n")
        except HarnessError as exc:
            stream.write(f"# slope=nan,stderr=nan,reason={exc}\n")


def _replication_seed(master_seed, i, j, r):
    # deterministic mixing of the grid position; independent of scheduling
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(i, j, r))


def _apply_rule(config: ExperimentConfig, spec: DgpSpec, dataset, rng_post):
    cls = config.policy_class
    if config.rule == "ewm_known":
        return ewm_known(dataset, spec, cls)
    if config.rule == "never_treat":
        return DecisionSet("powerset", cls.on, {"members": ()})
    prop = OraclePropensity(spec) if config.propensity == "oracle" else LinearPropensity()
    model = ParametricMTE(K=config.K, propensity=prop).fit_dataset(dataset)
    if config.rule == "ewm_hybrid":
        return ewm_hybrid(dataset, model.theta_, cls)
    if config.rule == "plugin":
        return plugin_rule(CellDistribution.from_dataset(dataset, cls), model.theta_, cls)
    return bayes_rule(dataset, model.design_, config.posterior, cls, K=config.K, seed=rng_post)


def _one(task):
    config, spec, w_best, i, j, r, rule = task
    ss = _replication_seed(config.master_seed, i, j, r)
    data_ss, post_ss = ss.spawn(2)
    dataset = simulate(spec, config.n_grid[j], np.random.default_rng(data_ss))
    try:
        if rule is not None:
            G = rule(dataset, spec, config.policy_class)
        else:
            G = _apply_rule(config, spec, dataset, np.random.default_rng(post_ss))
    except (SingularDesign, np.linalg.LinAlgError):
        return np.nan
    return w_best - representation_welfare(spec, G)


def run(config: ExperimentConfig, threads: int = 1, rule: Optional[Callable] = None) -> RegretCurve:
    """Estimate expected regret for every (spec, n) of the experiment.

    Parameters
    ----------
    threads : int
        Worker threads; results do not depend on it.
    rule : callable, optional
        ``rule(dataset, spec, policy_class) -> DecisionSet`` replacing the
        configured rule (used to inject reference rules).
    """
    S, N, R = len(config.family), len(config.n_grid), int(config.replications)
    best = [oracle_best(spec, config.policy_class)[1] for spec in config.family]
    tasks = [(config, config.family[i], best[i], i, j, r, rule)
             for i in range(S) for j in range(N) for r in range(R)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_one, tasks, chunksize=1))
    else:
        out = [_one(t) for t in tasks]
    regrets = np.asarray(out, dtype=np.float64).reshape(S, N, R)

    failures = np.isnan(regrets).sum(axis=2)
    if np.any(failures > config.max_failure_rate * R):
        i, j = np.argwhere(failures > config.max_failure_rate * R)[0]
        raise HarnessError(
            f"{failures[i, j]} of {R} replications failed for spec "
            f"{config.family[i].name} at n={config.n_grid[j]}"
        )
    mean = np.empty((S, N))
    stderr = np.empty((S, N))
    for i in range(S):
        for j in range(N):
            ok = regrets[i, j][~np.isnan(regrets[i, j])]
            mean[i, j] = ok.mean()
            stderr[i, j] = ok.std(ddof=1) / math.sqrt(ok.size) if ok.size > 1 else 0.0
    return RegretCurve([s.name for s in config.family], list(config.n_grid), mean, stderr,
                       failures, R)


def loglog_slope(n, regret):
    """OLS slope of ``log regret`` on ``log n`` and its standard error."""
    n = np.asarray(n, dtype=np.float64)
    r = np.asarray(regret, dtype=np.float64)
    keep = r > 0
    if not keep.all():
        warnings.warn(f"excluding {int((~keep).sum())} non-positive regret entries from the rate fit")
    if keep.sum() < 3:
        raise HarnessError(f"rate fit needs >= 3 positive regrets, have {int(keep.sum())}")
    lx, ly = np.log(n[keep]), np.log(r[keep])
    A = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = lx.size - 2
    sxx = np.sum((lx - lx.mean()) ** 2)
    se = math.sqrt(resid @ resid / dof / sxx) if dof > 0 else float("nan")
    return float(coef[1]), se


def fit_rate(curve: RegretCurve):
    """Log-log slope of the worst-case mean regret in n."""
    return loglog_slope(curve.n_grid, curve.worst_case)


def bound_ratio(curve: RegretCurve, m_bar: float, v: int):
    """``regret_n / (2 M sqrt(v / n))``: an implied estimate of the universal constant."""
    n = np.asarray(curve.n_grid, dtype=np.float64)
    return curve.worst_case / (2.0 * m_bar * np.sqrt(v / n))


def vc_of(config: ExperimentConfig):
    cls = config.policy_class
    if cls.kind == "powerset" and cls.cells is None:
        points = cls.features(config.family[0].cells().z0, config.family[0].cells().x)
        return vc_dimension(cls, n_cells=len({tuple(p) for p in points.tolist()}))
    return vc_dimension(cls)
