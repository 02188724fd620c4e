"""Policy classes and exact score-weighted set selection.

Every decision rule reduces to

    argmax_{G in class} sum_i s_i 1{z_i in G},

solved exactly here for four families: arbitrary subsets of a finite set of
cells, one-sided thresholds and intervals on one coordinate, and affine
halfspaces in up to three coordinates.  Among maximizers the canonical
answer has the fewest members, then the lexicographically smallest
description.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Tuple

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d, as_2d
from .exceptions import ConfigurationError, DomainError, UnsupportedDimension

KINDS = ("powerset", "threshold", "interval", "linear")
MAX_LINEAR_DIM = 3


@dataclass(frozen=True)
class PolicyClass:
    """A family of decision sets over feature vectors.

    ``on`` selects the features a policy may condition on: ``"x"`` uses
    ``(x1, ..., x_{p-1})``; ``"z"`` uses ``(z0, x1, ...)``.

    For ``powerset`` the ``cells`` are the finite support the subsets range
    over.  ``coordinate`` indexes the feature used by ``threshold`` and
    ``interval``; ``coordinates`` those of ``linear``.
    """

    kind: str
    on: str = "x"
    cells: Optional[Tuple[Tuple[float, ...], ...]] = None
    coordinate: int = 0
    direction: str = "ge"
    coordinates: Tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown policy class kind {self.kind!r}")
        if self.on not in ("x", "z"):
            raise ConfigurationError(f"policy 'on' must be 'x' or 'z', got {self.on!r}")
        if self.direction not in ("ge", "le"):
            raise ConfigurationError(f"direction must be 'ge' or 'le', got {self.direction!r}")
        if self.cells is not None:
            cells = tuple(sorted({tuple(float(v) for v in c) for c in self.cells}))
            object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "coordinates", tuple(int(c) for c in self.coordinates))

    @classmethod
    def power_set(cls, cells=None, on="x"):
        return cls("powerset", on=on, cells=cells)

    @classmethod
    def threshold(cls, coordinate=0, direction="ge", on="x"):
        return cls("threshold", on=on, coordinate=coordinate, direction=direction)

    @classmethod
    def interval(cls, coordinate=0, on="x"):
        return cls("interval", on=on, coordinate=coordinate)

    @classmethod
    def linear(cls, coordinates=(0,), on="x"):
        return cls("linear", on=on, coordinates=tuple(coordinates))

    def features(self, z0, x):
        """Feature matrix this class acts on, from instrument and covariates."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.on == "x":
            return x[:, 1:]
        return np.column_stack([np.asarray(z0, dtype=np.float64).reshape(-1), x[:, 1:]])

    def to_dict(self):
        d = {"kind": self.kind, "on": self.on}
        if self.kind == "powerset" and self.cells is not None:
            d["cells"] = [list(c) for c in self.cells]
        if self.kind in ("threshold", "interval"):
            d["coordinate"] = self.coordinate
        if self.kind == "threshold":
            d["direction"] = self.direction
        if self.kind == "linear":
            d["coordinates"] = list(self.coordinates)
        return d

    @classmethod
    def from_dict(cls, d):
        allowed = {"kind", "on", "cells", "coordinate", "direction", "coordinates"}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ConfigurationError(f"unknown policy_class key: {unknown[0]}")
        if "kind" not in d:
            raise ConfigurationError("missing policy_class key: kind")
        kw = dict(d)
        if kw.get("cells") is not None:
            kw["cells"] = tuple(tuple(c) for c in kw["cells"])
        if "coordinates" in kw:
            kw["coordinates"] = tuple(kw["coordinates"])
        return cls(**kw)


def vc_dimension(cls: PolicyClass, n_cells=None) -> int:
    """VC dimension of the class.

    A power set over ``m`` cells shatters exactly those ``m`` points, so its
    dimension is ``m`` (not ``2**m``).
    """
    if cls.kind == "powerset":
        m = len(cls.cells) if cls.cells is not None else n_cells
        if m is None:
            raise ConfigurationError("power set class needs cells to report a VC dimension")
        return int(m)
    if cls.kind == "threshold":
        return 1
    if cls.kind == "interval":
        return 2
    return len(cls.coordinates) + 1


@dataclass(frozen=True)
class DecisionSet:
    """A concrete member ``G`` of a :class:`PolicyClass`.

    ``params`` by kind:
      powerset  -- ``members``: sorted tuple of cell tuples
      threshold -- ``coordinate``, ``direction``, ``cut`` (+-inf for empty/full)
      interval  -- ``coordinate``, ``low``, ``high`` (``low > high`` is empty)
      linear    -- ``coordinates``, ``weights`` on ``(1, z_coords)``; ``w'(1,z) >= 0``
    """

    kind: str
    on: str
    params: dict = field(hash=False)
    canonical: bool = True

    def mask(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        p = self.params
        if self.kind == "powerset":
            members = set(p["members"])
            return np.fromiter((tuple(r) in members for r in points.tolist()),
                               dtype=bool, count=points.shape[0])
        if self.kind == "threshold":
            v = points[:, p["coordinate"]]
            return v >= p["cut"] if p["direction"] == "ge" else v <= p["cut"]
        if self.kind == "interval":
            v = points[:, p["coordinate"]]
            return (v >= p["low"]) & (v <= p["high"])
        w = np.asarray(p["weights"])
        sub = points[:, list(p["coordinates"])]
        return w[0] + sub @ w[1:] >= 0

    def mask_cells(self, z0, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.on == "x":
            return self.mask(x[:, 1:])
        return self.mask(np.column_stack([np.asarray(z0, dtype=np.float64).reshape(-1), x[:, 1:]]))

    def describe(self):
        p = self.params
        if self.kind == "powerset":
            return "{" + "; ".join(",".join(_num(v) for v in c) for c in p["members"]) + "}"
        if self.kind == "threshold":
            op = ">=" if p["direction"] == "ge" else "<="
            return f"f{p['coordinate']}{op}{_num(p['cut'])}"
        if self.kind == "interval":
            return f"{_num(p['low'])}<=f{p['coordinate']}<={_num(p['high'])}"
        return "w=(" + ",".join(_num(v) for v in p["weights"]) + ")"

    def to_dict(self):
        p = dict(self.params)
        if self.kind == "powerset":
            p["members"] = [list(c) for c in p["members"]]
        if self.kind == "linear":
            p["weights"] = [float(v) for v in p["weights"]]
            p["coordinates"] = list(p["coordinates"])
        for k in ("cut", "low", "high"):
            if k in p:
                p[k] = _num(p[k])
        return {"kind": self.kind, "on": self.on, "canonical": self.canonical, "params": p}

    @classmethod
    def from_dict(cls, d):
        unknown = sorted(set(d) - {"kind", "on", "canonical", "params"})
        if unknown:
            raise ConfigurationError(f"unknown decision_set key: {unknown[0]}")
        try:
            kind, p = d["kind"], dict(d["params"])
        except KeyError as exc:
            raise ConfigurationError(f"missing decision_set key: {exc.args[0]}") from None
        if kind == "powerset":
            p["members"] = tuple(sorted(tuple(float(v) for v in c) for c in p["members"]))
        if kind == "linear":
            p["weights"] = tuple(float(v) for v in p["weights"])
            p["coordinates"] = tuple(p["coordinates"])
        for k in ("cut", "low", "high"):
            if k in p:
                p[k] = float(p[k])
        return cls(kind, d.get("on", "x"), p, d.get("canonical", True))


def _num(v):
    v = float(v)
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def contains(G: DecisionSet, z) -> bool:
    return bool(G.mask(np.asarray(z, dtype=np.float64).reshape(1, -1))[0])


def objective(G: DecisionSet, points, scores) -> float:
    return float(np.sum(np.asarray(scores, dtype=np.float64)[G.mask(points)]))


def _aggregate(points, scores):
    """Unique rows (lexicographically sorted) and their summed scores."""
    if points.shape[0] == 0:
        return points, scores
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    sums = np.zeros(uniq.shape[0])
    np.add.at(sums, inv.reshape(-1), scores)
    return uniq, sums


def argmax_over_class(cls: PolicyClass, points, scores) -> DecisionSet:
    """Exact maximizer of ``sum_i scores_i 1{points_i in G}`` over the class."""
    points = as_2d(points, "points")
    scores = as_1d(scores, "scores", length=points.shape[0])
    if cls.kind == "powerset":
        return _argmax_powerset(cls, points, scores)
    if cls.kind in ("threshold", "interval"):
        if points.shape[0] and not 0 <= cls.coordinate < points.shape[1]:
            raise DomainError(f"coordinate {cls.coordinate} out of range")
        col = points[:, [cls.coordinate]] if points.shape[0] else np.empty((0, 1))
        vals, sums = _aggregate(col, scores)
        vals = vals.reshape(-1)
        if cls.kind == "threshold":
            return _argmax_threshold(cls, vals, sums)
        return _argmax_interval(cls, vals, sums)
    return _argmax_linear(cls, points, scores)


def _argmax_powerset(cls, points, scores):
    uniq, sums = _aggregate(points, scores)
    if cls.cells is not None:
        cellset = set(cls.cells)
        for r in uniq.tolist():
            if tuple(r) not in cellset:
                raise DomainError(f"point {r} is not a cell of the power-set class")
    members = tuple(tuple(r) for r, s in zip(uniq.tolist(), sums) if s > 0)
    return DecisionSet("powerset", cls.on, {"members": members})


def _argmax_threshold(cls, vals, sums):
    # candidates: the empty set plus every suffix (ge) / prefix (le)
    best, best_k = 0.0, 0
    m = vals.shape[0]
    if cls.direction == "ge":
        running = np.cumsum(sums[::-1])  # running[k-1]: top-k values included
    else:
        running = np.cumsum(sums)
    for k in range(1, m + 1):
        if running[k - 1] > best:
            best, best_k = running[k - 1], k
    if best_k == 0:
        cut = np.inf if cls.direction == "ge" else -np.inf
    else:
        cut = vals[m - best_k] if cls.direction == "ge" else vals[best_k - 1]
    return DecisionSet("threshold", cls.on,
                       {"coordinate": cls.coordinate, "direction": cls.direction, "cut": float(cut)})


def _argmax_interval(cls, vals, sums):
    # Kadane over sorted values. Restarting when the running sum is <= 0 keeps
    # the shortest maximizing block per end index; ties across end indices
    # prefer the shorter block, then the earlier one.
    best_sum, best_run = 0.0, None
    cur_sum, cur_start = -np.inf, 0
    for j, s in enumerate(sums):
        if cur_sum > 0:
            cur_sum += s
        else:
            cur_sum, cur_start = s, j
        if cur_sum > best_sum or (
            best_run is not None and cur_sum == best_sum and j - cur_start < best_run[1] - best_run[0]
        ):
            best_sum, best_run = cur_sum, (cur_start, j)
    if best_run is None:
        return DecisionSet("interval", cls.on,
                           {"coordinate": cls.coordinate, "low": np.inf, "high": -np.inf})
    a, b = best_run
    return DecisionSet("interval", cls.on,
                       {"coordinate": cls.coordinate, "low": float(vals[a]), "high": float(vals[b])})


# --- affine halfspaces -------------------------------------------------------

def _rank_basis(P, tol):
    """Orthonormal basis (columns) of the row space of P."""
    if P.shape[0] == 0:
        return np.empty((P.shape[1], 0))
    _, s, vt = linalg.svd(P, full_matrices=False)
    r = int(np.sum(s > tol * max(1.0, s[0])))
    return vt[:r].T


def _sign_cells(P, tol=1e-9):
    """All strict sign patterns of ``P @ w`` with their witnesses ``w``.

    The patterns are the full-dimensional cells of the central arrangement
    with normals ``P``.  Every such cone is pointed once projected on the
    row space, so it has an extreme ray on which ``r - 1`` independent rows
    vanish; the remaining rows fix their signs and the vanishing rows are
    resolved recursively by a small perturbation.

    Returns
    -------
    dict mapping tuple of bool (True where ``P w > 0``) to a witness vector.
    """
    k, D = P.shape
    if k == 0:
        return {(): np.zeros(D)}
    B = _rank_basis(P, tol)
    r = B.shape[1]
    Q = P @ B
    if r == 1:
        q = Q[:, 0]
        out = {}
        for s in (1.0, -1.0):
            out[tuple(s * q > 0)] = s * B[:, 0]
        return out
    scale = np.max(np.abs(Q))
    out = {}
    seen = set()
    sub_cells = {}
    for idx in combinations(range(k), r - 1):
        sub = Q[list(idx)]
        ns = linalg.null_space(sub, rcond=tol)
        if ns.shape[1] != 1:
            continue
        ray = ns[:, 0]
        for s in (1.0, -1.0):
            v = Q @ (s * ray)
            zero = np.abs(v) <= tol * scale * max(1.0, np.abs(ray).max())
            # many index sets span the same ray; each ray is processed once
            ray_key = (tuple(zero.tolist()), tuple((v > 0).tolist()))
            if ray_key in seen:
                continue
            seen.add(ray_key)
            base = s * ray
            zidx = np.flatnonzero(zero)
            nz = np.flatnonzero(~zero)
            zkey = tuple(zidx.tolist())
            if zkey not in sub_cells:
                sub_cells[zkey] = _sign_cells(Q[zidx], tol)
            for pattern, pert in sub_cells[zkey].items():
                # pert lives in the r-dim space; keep it small enough not to flip nonzeros
                pv = Q[nz] @ pert
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratios = np.abs(v[nz]) / np.abs(pv)
                eps = 0.5 * min(1.0, float(np.min(ratios))) if nz.size and np.any(pv != 0) else 1.0
                w = base + eps * pert
                full = np.empty(k, dtype=bool)
                full[nz] = v[nz] > 0
                full[zidx] = np.asarray(pattern, dtype=bool)
                key = tuple(full.tolist())
                if key not in out:
                    out[key] = B @ w
    return out


def linear_dichotomies(points, tol=1e-9):
    """Dichotomies of ``points`` realizable by ``{z : w'(1, z) >= 0}``.

    Returns a dict from inclusion pattern (tuple of bool) to weights ``w``
    that realize it with a strict margin.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    P = np.column_stack([np.ones(points.shape[0]), points])
    return _sign_cells(P, tol)


def _argmax_linear(cls, points, scores):
    dim = len(cls.coordinates)
    if dim > MAX_LINEAR_DIM:
        raise UnsupportedDimension(f"linear-score class of dimension {dim} > {MAX_LINEAR_DIM}")
    if points.shape[0] and max(cls.coordinates) >= points.shape[1]:
        raise DomainError(f"coordinates {cls.coordinates} out of range")
    sub = points[:, list(cls.coordinates)] if points.shape[0] else np.empty((0, dim))
    uniq, sums = _aggregate(sub, scores)
    best_key, best_w = None, None
    for pattern, w in linear_dichotomies(uniq).items():
        members = tuple(i for i, b in enumerate(pattern) if b)
        obj = float(sums[list(members)].sum()) if members else 0.0
        key = (-obj, len(members), members)
        if best_key is None or key < best_key:
            best_key, best_w = key, w
    w = best_w / np.max(np.abs(best_w))
    return DecisionSet("linear", cls.on,
                       {"coordinates": cls.coordinates, "weights": tuple(float(v) for v in w)})


class EWMPolicy(BaseEstimator):
    """Score-weighted set selection as an estimator.

    ``fit(points, scores)`` stores the canonical maximizer in
    ``decision_set_``; ``predict(points)`` returns the treatment indicator.
    """

    def __init__(self, policy_class=None):
        self.policy_class = policy_class

    def fit(self, points, scores):
        cls = self.policy_class if self.policy_class is not None else PolicyClass.power_set()
        self.decision_set_ = argmax_over_class(cls, points, scores)
        self.objective_ = objective(self.decision_set_, points, scores)
        return self

    def predict(self, points):
        check_is_fitted(self, "decision_set_")
        return self.decision_set_.mask(points).astype(np.int64)
