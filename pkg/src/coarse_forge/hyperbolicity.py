"""Empirical Gromov four-point delta."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .spaces import EnumerationPlan, MetricSpace

EXHAUSTIVE_LIMIT = 40


@dataclass
class DeltaReport:
    quadruples_checked: int
    delta: float
    witness: tuple
    exhaustive: bool

    @property
    def is_lower_bound(self) -> bool:
        return not self.exhaustive


def _deltas(space: MetricSpace, Q: np.ndarray) -> np.ndarray:
    x, y, z, w = Q.T
    s1 = space.distances(x, y) + space.distances(z, w)
    s2 = space.distances(x, z) + space.distances(y, w)
    s3 = space.distances(x, w) + space.distances(y, z)
    S = np.stack([s1, s2, s3])
    top = S.max(axis=0)
    mid = S.sum(axis=0) - top - S.min(axis=0)
    return (top - mid) / 2.0


def quadruple_delta(space: MetricSpace, quad) -> float:
    """Half the gap between the two largest pair sums for one quadruple of points."""
    Q = np.array([[space.index(p) for p in quad]])
    return float(_deltas(space, Q)[0])


def _best(Q: np.ndarray, d: np.ndarray):
    top = d.max()
    hits = Q[d == top]
    first = np.lexsort(hits.T[::-1])[0]
    return float(top), tuple(int(v) for v in hits[first])


def four_point_delta(space: MetricSpace, plan: EnumerationPlan | None = None,
                     chunk: int = 250_000) -> DeltaReport:
    """Max four-point delta over all (or a fixed-seed sample of) quadruples.

    The witness is the lexicographically smallest index quadruple attaining
    the maximum.  A sampled delta is only a lower bound.
    """
    n = len(space)
    if plan is None:
        plan = EnumerationPlan.auto(n, EXHAUSTIVE_LIMIT, samples=1_000_000)
    if plan.exhaustive:
        if n > EXHAUSTIVE_LIMIT:
            raise ValueError(f"exhaustive enumeration limited to {EXHAUSTIVE_LIMIT} points")
        Q = np.array(list(itertools.combinations(range(n), 4)), dtype=np.int64).reshape(-1, 4)
        batches = [Q[i:i + chunk] for i in range(0, len(Q), chunk)]
        total = len(Q)
    else:
        rng = np.random.default_rng(plan.seed)
        Q = np.sort(rng.integers(0, n, size=(plan.samples, 4)), axis=1)
        batches = [Q[i:i + chunk] for i in range(0, len(Q), chunk)]
        total = plan.samples

    best, witness = 0.0, None
    for B in batches:
        if not len(B):
            continue
        val, wit = _best(B, _deltas(space, B))
        if witness is None or val > best or (val == best and wit < witness):
            best, witness = val, wit
    pts = space.points
    witness_pts = tuple(pts[i] for i in witness) if witness is not None else ()
    return DeltaReport(total, best, witness_pts, plan.exhaustive)


def diamond_quadruple(m: int):
    """(-m,0), (m,0), (0,m), (0,-m): raw sup-metric delta equals m."""
    return ((-m, 0), (m, 0), (0, m), (0, -m))
