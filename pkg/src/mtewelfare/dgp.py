"""Threshold-crossing data-generating processes with endogenous selection.

The structural law is

    U | Z ~ Uniform(0, 1),          D = 1{nu(Z) - U >= 0},
    Y_d = x' beta_d + rho_d (U - 1/2) + sigma * eps_d,

with ``nu(z) = gamma' (1, z0, x1, ...)``.  The implied marginal treatment
effect is ``x'(beta1 - beta0) + (rho1 - rho0)(u - 1/2)``, which belongs to the
quadratic-in-propensity regression family fitted by :mod:`mtewelfare.mte`.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Optional

import numpy as np
from scipy import stats

from ._validation import as_1d, as_2d, check_probabilities
from .exceptions import ConfigurationError, DomainError

EPS_P = 1e-6


@dataclass
class DgpSpec:
    """Structural description of a discrete-support DGP.

    Parameters
    ----------
    x_support : array-like, shape (m, p)
        Covariate support points; the first column must be exactly 1.
    x_probs : array-like, shape (m,)
    z0_support, z0_probs : array-like, shape (k,)
        Instrument values and probabilities, drawn independently of X.
    gamma : array-like, shape (p + 1,)
        Propensity coefficients on ``(1, z0, x1, ..., x_{p-1})``.
    beta0, beta1 : array-like, shape (p,)
    rho0, rho1 : float
        Loadings of the potential outcomes on ``U - 1/2``.
    noise_sd : float
    m_bar : float
        Declared bound on ``|x'(beta1 - beta0)|`` over the support.
    """

    x_support: np.ndarray
    x_probs: np.ndarray
    z0_support: np.ndarray
    z0_probs: np.ndarray
    gamma: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    rho0: float = 0.0
    rho1: float = 0.0
    noise_sd: float = 0.0
    m_bar: float = 1.0
    name: str = "spec"

    def __post_init__(self):
        self.x_support = as_2d(self.x_support, "x_support", allow_empty=False)
        m, p = self.x_support.shape
        if not np.all(self.x_support[:, 0] == 1.0):
            raise ConfigurationError("x_support: first coordinate of every x must be 1")
        if len({tuple(r) for r in self.x_support}) != m:
            raise ConfigurationError("x_support: duplicate support points")
        self.x_probs = check_probabilities(self.x_probs, "x_probs")
        if self.x_probs.shape[0] != m:
            raise ConfigurationError("x_probs: length does not match x_support")
        self.z0_support = as_1d(self.z0_support, "z0_support")
        if len(set(self.z0_support.tolist())) != self.z0_support.shape[0]:
            raise ConfigurationError("z0_support: duplicate values")
        self.z0_probs = check_probabilities(self.z0_probs, "z0_probs")
        if self.z0_probs.shape[0] != self.z0_support.shape[0]:
            raise ConfigurationError("z0_probs: length does not match z0_support")
        self.gamma = as_1d(self.gamma, "gamma", length=p + 1)
        self.beta0 = as_1d(self.beta0, "beta0", length=p)
        self.beta1 = as_1d(self.beta1, "beta1", length=p)
        self.rho0 = float(self.rho0)
        self.rho1 = float(self.rho1)
        self.noise_sd = float(self.noise_sd)
        self.m_bar = float(self.m_bar)
        if self.noise_sd < 0:
            raise ConfigurationError("noise_sd must be >= 0")

        cells = self.cells()
        bad = np.flatnonzero((cells.nu < EPS_P) | (cells.nu > 1 - EPS_P))
        if bad.size:
            i = bad[0]
            raise ConfigurationError(
                f"gamma: propensity {float(cells.nu[i])!r} outside [{EPS_P:g}, {1 - EPS_P:g}] "
                f"at cell z0={float(cells.z0[i])!r}, x={cells.x[i].tolist()}"
            )
        effect = self.x_support @ (self.beta1 - self.beta0)
        worst = int(np.argmax(np.abs(effect)))
        if abs(effect[worst]) > self.m_bar:
            raise ConfigurationError(
                f"m_bar: |x'(beta1-beta0)| = {abs(effect[worst])!r} exceeds m_bar={self.m_bar!r} "
                f"at x={self.x_support[worst].tolist()}"
            )

    @property
    def dim_x(self) -> int:
        return self.x_support.shape[1]

    def propensity(self, z0, x):
        """Unclamped ``gamma' (1, z0, x1, ...)`` for rows of ``(z0, x)``."""
        z0 = np.asarray(z0, dtype=np.float64)
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self.gamma[0] + self.gamma[1] * z0 + x[:, 1:] @ self.gamma[2:]

    def integrated_effect(self, x):
        """``x'(beta1 - beta0)`` for each row of ``x``; no support check."""
        return np.asarray(x, dtype=np.float64) @ (self.beta1 - self.beta0)

    def cells(self) -> "CellTable":
        k = self.z0_support.shape[0]
        m = self.x_support.shape[0]
        z0 = np.repeat(self.z0_support, m)
        x = np.tile(self.x_support, (k, 1))
        prob = np.repeat(self.z0_probs, m) * np.tile(self.x_probs, k)
        return CellTable(z0=z0, x=x, prob=prob, nu=self.propensity(z0, x))

    def x_index(self, x) -> int:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.dim_x:
            raise DomainError(f"x has dimension {x.shape[0]}, expected {self.dim_x}")
        hits = np.flatnonzero(np.all(self.x_support == x, axis=1))
        if hits.size == 0:
            raise DomainError(f"x={x.tolist()} is not in the support of {self.name}")
        return int(hits[0])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "x_support": self.x_support.tolist(),
            "x_probs": self.x_probs.tolist(),
            "z0_support": self.z0_support.tolist(),
            "z0_probs": self.z0_probs.tolist(),
            "gamma": self.gamma.tolist(),
            "beta0": self.beta0.tolist(),
            "beta1": self.beta1.tolist(),
            "rho0": self.rho0,
            "rho1": self.rho1,
            "noise_sd": self.noise_sd,
            "m_bar": self.m_bar,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown spec key: {unknown[0]}")
        missing = [k for k in ("x_support", "x_probs", "z0_support", "z0_probs",
                               "gamma", "beta0", "beta1") if k not in d]
        if missing:
            raise ConfigurationError(f"missing spec key: {missing[0]}")
        return cls(**d)


@dataclass
class CellTable:
    """Joint support of ``(z0, x)`` with cell probabilities and propensities."""

    z0: np.ndarray
    x: np.ndarray
    prob: np.ndarray
    nu: np.ndarray

    def __len__(self):
        return self.prob.shape[0]


def reference_spec() -> DgpSpec:
    """The reference design used throughout the tests and bundled configs.

    ``x1`` and ``z0`` are equiprobable on {-1, 0, 1} and {0, 1};
    ``nu = 0.2 + 0.4 z0 + 0.1 x1``; ``beta1 = (0.3, 0.5)``; ``rho = (0.5, 1.5)``.
    """
    return DgpSpec(
        x_support=[[1.0, -1.0], [1.0, 0.0], [1.0, 1.0]],
        x_probs=[1 / 3, 1 / 3, 1 / 3],
        z0_support=[0.0, 1.0],
        z0_probs=[0.5, 0.5],
        gamma=[0.2, 0.4, 0.1],
        beta0=[0.0, 0.0],
        beta1=[0.3, 0.5],
        rho0=0.5,
        rho1=1.5,
        noise_sd=0.5,
        m_bar=0.8,
        name="reference",
    )


class Observation(NamedTuple):
    y: float
    d: int
    z0: float
    x: np.ndarray
    y0: Optional[float] = None
    y1: Optional[float] = None
    u: Optional[float] = None


@dataclass
class Dataset:
    """Observed sample ``(Y, D, Z0, X)`` with optional latents ``(Y0, Y1, U)``."""

    y: np.ndarray
    d: np.ndarray
    z0: np.ndarray
    x: np.ndarray
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    seed: Optional[int] = None
    spec_id: Optional[str] = None

    def __post_init__(self):
        n = self.y.shape[0]
        if not (self.d.shape[0] == self.z0.shape[0] == self.x.shape[0] == n):
            raise DomainError("dataset columns have different lengths")
        latents = [self.y0, self.y1, self.u]
        if any(a is None for a in latents) and not all(a is None for a in latents):
            raise DomainError("latents must be retained for all of y0, y1, u or none")
        if self.latents_retained and any(a.shape[0] != n for a in latents):
            raise DomainError("latent columns have different lengths")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def latents_retained(self) -> bool:
        return self.u is not None

    @property
    def features(self) -> np.ndarray:
        """Exogenous variables ``(z0, x1, ..., x_{p-1})`` without the intercept."""
        return np.column_stack([self.z0, self.x[:, 1:]])

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> Observation:
        if self.latents_retained:
            return Observation(float(self.y[i]), int(self.d[i]), float(self.z0[i]),
                               self.x[i], float(self.y0[i]), float(self.y1[i]), float(self.u[i]))
        return Observation(float(self.y[i]), int(self.d[i]), float(self.z0[i]), self.x[i])

    def __iter__(self) -> Iterator[Observation]:
        for i in range(self.n):
            yield self[i]

    def take(self, idx) -> "Dataset":
        sub = lambda a: None if a is None else a[idx]
        return Dataset(self.y[idx], self.d[idx], self.z0[idx], self.x[idx],
                       sub(self.y0), sub(self.y1), sub(self.u), self.seed, self.spec_id)


def simulate(spec: DgpSpec, n: int, seed: int, retain_latents: bool = True) -> Dataset:
    """Draw ``n`` i.i.d. observations; deterministic in ``(spec, n, seed)``."""
    if n < 0:
        raise DomainError("n must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    xi = rng.choice(spec.x_support.shape[0], size=n, p=spec.x_probs)
    zi = rng.choice(spec.z0_support.shape[0], size=n, p=spec.z0_probs)
    u = rng.random(n)
    eps = rng.standard_normal((2, n))

    x = spec.x_support[xi]
    z0 = spec.z0_support[zi]
    nu = spec.propensity(z0, x)
    d = (nu - u >= 0).astype(np.int64)
    y0 = x @ spec.beta0 + spec.rho0 * (u - 0.5) + spec.noise_sd * eps[0]
    y1 = x @ spec.beta1 + spec.rho1 * (u - 0.5) + spec.noise_sd * eps[1]
    y = np.where(d == 1, y1, y0)
    seed_id = None if isinstance(seed, np.random.Generator) else int(seed)
    if retain_latents:
        return Dataset(y, d, z0, x, y0, y1, u, seed=seed_id, spec_id=spec.name)
    return Dataset(y, d, z0, x, seed=seed_id, spec_id=spec.name)


def true_mte(spec: DgpSpec, u, x):
    """``x'(beta1 - beta0) + (rho1 - rho0)(u - 1/2)``; ``u`` may be an array."""
    i = spec.x_index(x)
    u = np.asarray(u, dtype=np.float64)
    if np.any((u < 0) | (u > 1)):
        raise DomainError("u must lie in [0, 1]")
    value = spec.integrated_effect(spec.x_support[i]) + (spec.rho1 - spec.rho0) * (u - 0.5)
    return float(value) if value.ndim == 0 else value


def true_integrated_mte(spec: DgpSpec, x) -> float:
    return float(spec.integrated_effect(spec.x_support[spec.x_index(x)]))


# --- normalisation of a general latent selection variable -------------------

_FAMILIES = {
    "exponential": lambda p: stats.expon(scale=1.0 / p.get("rate", 1.0)),
    "normal": lambda p: stats.norm(loc=p.get("mu", 0.0), scale=p.get("sigma", 1.0)),
    "uniform": lambda p: stats.uniform(loc=p.get("a", 0.0), scale=p.get("b", 1.0) - p.get("a", 0.0)),
}


@dataclass
class LatentSelectionSpec:
    """Selection ``D = 1{threshold(z) - U~ >= 0}`` with ``U~`` from a continuous family.

    ``threshold`` maps an instrument/covariate value to the latent cutoff.
    """

    family: str
    params: dict = field(default_factory=dict)
    threshold: Callable = lambda z: 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigurationError(
                f"unsupported latent family {self.family!r}; expected one of {sorted(_FAMILIES)}"
            )
        dist = _FAMILIES[self.family](self.params)
        lo, hi = dist.support()
        if not lo < hi:
            raise ConfigurationError(f"{self.family}: degenerate support [{lo}, {hi}]")
        self.distribution = dist

    def draw(self, n, rng):
        return self.distribution.rvs(size=n, random_state=rng)


def normalize_selection(latent: LatentSelectionSpec, z):
    """Map a latent selection model to its uniform normalisation.

    Returns ``(nu, transform)`` where ``nu = F(threshold(z))`` and
    ``transform(u_tilde) = F(u_tilde)`` with ``F`` the latent CDF, so that
    ``1{nu >= transform(u_tilde)} == 1{threshold(z) >= u_tilde}`` draw by draw.
    """
    if not isinstance(latent, LatentSelectionSpec):
        raise ConfigurationError("latent must be a LatentSelectionSpec")
    cdf = latent.distribution.cdf
    nu = cdf(latent.threshold(z))
    return (float(nu) if np.ndim(nu) == 0 else nu), cdf


# --- closed-form population moments -----------------------------------------

@dataclass
class PopulationMoments:
    """Exact moments; per-cell arrays are aligned with ``DgpSpec.cells()``."""

    e_y0: float
    e_y1: float
    e_y: float
    cells: CellTable
    mean_y0: np.ndarray
    mean_y1: np.ndarray
    mean_y: np.ndarray
    mean_y1_treated: np.ndarray
    mean_y0_untreated: np.ndarray


def population_moments(spec: DgpSpec) -> PopulationMoments:
    cells = spec.cells()
    nu = cells.nu
    lvl0 = cells.x @ spec.beta0
    lvl1 = cells.x @ spec.beta1
    # E[U - 1/2 | U <= nu] = (nu - 1)/2 ;  E[U - 1/2 | U > nu] = nu/2
    y1_treated = lvl1 + spec.rho1 * (nu - 1.0) / 2.0
    y0_untreated = lvl0 + spec.rho0 * nu / 2.0
    mean_y = nu * y1_treated + (1.0 - nu) * y0_untreated
    return PopulationMoments(
        e_y0=float(cells.prob @ lvl0),
        e_y1=float(cells.prob @ lvl1),
        e_y=float(cells.prob @ mean_y),
        cells=cells,
        mean_y0=lvl0,
        mean_y1=lvl1,
        mean_y=mean_y,
        mean_y1_treated=y1_treated,
        mean_y0_untreated=y0_untreated,
    )


# --- delimited text ----------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def write_dataset(dataset: Dataset, stream, provenance: Optional[str] = None):
    """Write comma-delimited rows ``y,d,z0,x1,...[,y0,y1,u]``.

    Floats use ``repr`` (17 significant digits), so a round trip is exact.
    """
    p = dataset.x.shape[1]
    header = ["y", "d", "z0"] + [f"x{j}" for j in range(1, p)]
    if dataset.latents_retained:
        header += ["y0", "y1", "u"]
    if provenance:
        stream.write(f"# {provenance}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for i in range(dataset.n):
        row = [_fmt(dataset.y[i]), str(int(dataset.d[i])), _fmt(dataset.z0[i])]
        row += [_fmt(v) for v in dataset.x[i, 1:]]
        if dataset.latents_retained:
            row += [_fmt(dataset.y0[i]), _fmt(dataset.y1[i]), _fmt(dataset.u[i])]
        writer.writerow(row)


def read_dataset(stream) -> Dataset:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = [ln for ln in stream if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise DomainError("dataset file has no header") from None
    if header[:3] != ["y", "d", "z0"]:
        raise DomainError(f"dataset header must start with y,d,z0; got {header[:3]}")
    latents = header[-3:] == ["y0", "y1", "u"]
    xcols = header[3:len(header) - 3] if latents else header[3:]
    for j, name in enumerate(xcols, start=1):
        if name != f"x{j}":
            raise DomainError(f"unexpected dataset column {name!r}")
    rows = [r for r in reader if r]
    width = len(header)
    for k, r in enumerate(rows):
        if len(r) != width:
            raise DomainError(f"dataset row {k + 1} has {len(r)} fields, expected {width}")
    try:
        a = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    except ValueError as exc:
        raise DomainError(f"non-numeric dataset entry: {exc}") from None
    d = a[:, 1]
    if not np.all((d == 0) | (d == 1)):
        raise DomainError("treatment column d must be 0/1")
    p = len(xcols) + 1
    x = np.column_stack([np.ones(len(rows)), a[:, 3:3 + len(xcols)]])
    kw = {}
    if latents:
        kw = dict(y0=a[:, 2 + p], y1=a[:, 3 + p], u=a[:, 4 + p])
    return Dataset(y=a[:, 0], d=d.astype(np.int64), z0=a[:, 2], x=x, **kw)
