"""Exhaustive reference solvers for score-weighted set selection.

Each returns ``(objective, mask)`` for the canonical maximizer: largest
objective, then fewest distinct points, then the lexicographically first
description.
"""
from itertools import combinations

import numpy as np
from scipy.optimize import linprog


def _unique(points, scores):
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    sums = np.array([scores[inv == k].sum() for k in range(uniq.shape[0])])
    return uniq, inv, sums


def _all_subsets(m):
    for k in range(m + 1):
        yield from combinations(range(m), k)


def powerset(points, scores):
    uniq, inv, sums = _unique(points, scores)
    best = min(_all_subsets(len(uniq)), key=lambda S: (-sums[list(S)].sum(), len(S), S))
    return sums[list(best)].sum(), np.isin(inv, best)


def threshold(points, scores, coordinate, direction):
    v = points[:, coordinate]
    cands = [np.zeros(len(v), dtype=bool)]
    for c in np.unique(v):
        cands.append(v >= c if direction == "ge" else v <= c)
    return _pick(cands, scores, v)


def interval(points, scores, coordinate):
    v = points[:, coordinate]
    vals = np.unique(v)
    cands = [np.zeros(len(v), dtype=bool)]
    for a in range(len(vals)):
        for b in range(a, len(vals)):
            cands.append((v >= vals[a]) & (v <= vals[b]))
    return _pick(cands, scores, v)


def _pick(cands, scores, v):
    def key(mask):
        inside = tuple(sorted(set(v[mask].tolist())))
        return (-scores[mask].sum(), len(inside), inside)
    best = min(cands, key=key)
    return scores[best].sum(), best


def hull_conflict(inside_pts, outside_pts):
    """Indices of a convex-hull intersection witness, or None when separable.

    Solves ``sum l_i a_i = sum m_j b_j`` with ``l, m`` on the simplices; a
    vertex solution uses at most ``dim + 2`` points.  Any subset that keeps
    the witness's inside points in and outside points out is also infeasible.
    """
    if len(inside_pts) == 0 or len(outside_pts) == 0:
        return None
    a, b = len(inside_pts), len(outside_pts)
    A_eq = np.vstack([
        np.hstack([inside_pts.T, -outside_pts.T]),
        np.r_[np.ones(a), np.zeros(b)],
        np.r_[np.zeros(a), np.ones(b)],
    ])
    b_eq = np.r_[np.zeros(inside_pts.shape[1]), 1.0, 1.0]
    res = linprog(np.zeros(a + b), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * (a + b),
                  method="highs-ds")
    if res.status != 0:
        return None
    x = res.x
    return np.flatnonzero(x[:a] > 1e-12), np.flatnonzero(x[a:] > 1e-12)


def linear(points, scores, coordinates):
    sub = points[:, list(coordinates)]
    uniq, inv, sums = _unique(sub, scores)
    m = len(uniq)
    order = sorted(_all_subsets(m), key=lambda S: (-sums[list(S)].sum(), len(S), S))
    certificates = []
    for S in order:
        bits = sum(1 << i for i in S)
        if any((cin & ~bits) == 0 and (cout & bits) == 0 for cin, cout in certificates):
            continue
        mask = np.zeros(m, dtype=bool)
        mask[list(S)] = True
        inside, outside = np.flatnonzero(mask), np.flatnonzero(~mask)
        conflict = hull_conflict(uniq[inside], uniq[outside])
        if conflict is None:
            return sums[list(S)].sum(), mask[inv]
        cin = sum(1 << int(inside[i]) for i in conflict[0])
        cout = sum(1 << int(outside[j]) for j in conflict[1])
        certificates.append((cin, cout))
    raise AssertionError("no separable subset")
