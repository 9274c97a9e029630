"""Turning coarse equivalences into quasi-isometries by reshaping both metrics.

For a map with contraction ``phi`` and dilation ``Phi``, interleaved
schedules ``a`` (domain) and ``b`` (codomain) give concave ``c_X``, ``c_Y``
with ``c_X(a_k) = c_Y(b_k) = k + 1``.  In the new metrics the map distorts
distances by at most -2 / +1 additively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .plfun import (
    TOL,
    PiecewiseLinearFn,
    analyze,
    log1p_chordal,
    log_value_nodes,
    compose,
    round_sig,
    scale,
    sup_preimage,
)
from .spaces import EnumerationPlan, MetricSpace, PreconditionError


@dataclass(frozen=True)
class CoarseProfile:
    """Contraction/dilation bounds ``phi(d) <= d_Y(f x, f x') <= Phi(d)``."""

    phi: PiecewiseLinearFn
    Phi: PiecewiseLinearFn

    def __post_init__(self):
        for name, g in (("phi", self.phi), ("Phi", self.Phi)):
            if not analyze(g).is_unbounded:
                raise PreconditionError(f"{name} must be unbounded")
        xs = np.union1d(self.phi.xs, self.Phi.xs)
        if np.any(self.phi(xs) > self.Phi(xs) + TOL) or self.phi.tail_slope > self.Phi.tail_slope + TOL:
            raise PreconditionError("phi must not exceed Phi")


def _concave_c(nodes) -> PiecewiseLinearFn:
    xs = [0.0] + list(nodes)
    return PiecewiseLinearFn.from_points(xs, range(len(xs)), 1.0 / (xs[-1] - xs[-2]))


@dataclass(frozen=True)
class QISchedulePair:
    a: tuple[float, ...]  # a_0 = 1, a_1, ...
    b: tuple[float, ...]  # b_0, b_1, ...
    c_X: PiecewiseLinearFn
    c_Y: PiecewiseLinearFn

    def to_dict(self, digits: int | None = 12) -> dict:
        fmt = (lambda v: v) if digits is None else (lambda v: round_sig(v, digits))
        return {"a": [fmt(v) for v in self.a], "b": [fmt(v) for v in self.b],
                "c_X": self.c_X.to_dict(digits), "c_Y": self.c_Y.to_dict(digits)}

    @classmethod
    def from_dict(cls, data: dict) -> "QISchedulePair":
        return cls(tuple(data["a"]), tuple(data["b"]),
                   PiecewiseLinearFn.from_dict(data["c_X"]), PiecewiseLinearFn.from_dict(data["c_Y"]))


def build_qi_schedules(profile: CoarseProfile, steps: int) -> QISchedulePair:
    """Interleaved steps (0,1), (1,0), (1,1), (2,0), ... of the repair."""
    if steps < 1:
        raise ValueError("steps must be positive")
    phi, Phi = profile.phi, profile.Phi
    a = [1.0]
    b = [max(Phi(1.0), 1.0)]
    for _ in range(steps):
        a_prev2 = a[-2] if len(a) > 1 else 0.0
        b_prev2 = b[-2] if len(b) > 1 else 0.0
        a.append(float(max(sup_preimage(phi, b[-1]), 2.0 * a[-1] - a_prev2)))
        b.append(float(max(Phi(a[-1]), 2.0 * b[-1] - b_prev2)))
    return QISchedulePair(tuple(a), tuple(b), _concave_c(a), _concave_c(b))


def qi_steps_for(profile: CoarseProfile, r_max: float, limit: int = 100_000) -> QISchedulePair:
    """Smallest schedule pair whose domain breakpoints reach ``r_max``."""
    steps = 1
    while True:
        pair = build_qi_schedules(profile, steps)
        if pair.a[-1] >= r_max or steps >= limit:
            return pair
        steps *= 2


def interleaving_defects(profile: CoarseProfile, pair: QISchedulePair) -> list[str]:
    """Check phi(r) >= b_{k-2} for r >= a_{k-1} and Phi(r) <= b_k for r <= a_k.

    Both profiles are nondecreasing, so checking at the breakpoints suffices.
    """
    out = []
    a, b = pair.a, pair.b
    for k in range(len(a)):
        if profile.Phi(a[k]) > b[k] + TOL:
            out.append(f"Phi(a_{k}) = {profile.Phi(a[k])} > b_{k} = {b[k]}")
        if k >= 2 and profile.phi(a[k - 1]) < b[k - 2] - TOL:
            out.append(f"phi(a_{k-1}) = {profile.phi(a[k-1])} < b_{k-2} = {b[k-2]}")
    return out


def log_corrected_pair(pair: QISchedulePair, node_count: int = 64,
                       span: float | None = None) -> tuple[PiecewiseLinearFn, PiecewiseLinearFn]:
    """Compose both c's with one shared chordal ``ln(1 + .)``.

    Sharing the outer function keeps additive distortion bounds: it is
    nondecreasing with every slope at most 1.
    """
    top = span if span is not None else float(max(pair.c_X.ys[-1], pair.c_Y.ys[-1]))
    nodes = set(log_value_nodes(pair.c_X, node_count, top)) | set(log_value_nodes(pair.c_Y, node_count, top))
    L = log1p_chordal(nodes)
    return compose(L, pair.c_X), compose(L, pair.c_Y)


@dataclass
class SampledMap:
    domain: MetricSpace
    codomain: MetricSpace
    mapping: Callable

    def image_indices(self) -> np.ndarray:
        return np.array([self.codomain.index(self.mapping(p)) for p in self.domain.points])


@dataclass
class QIReport:
    pairs_checked: int
    min_diff: float
    max_diff: float
    lower: float
    upper: float
    witnesses: list = field(default_factory=list)  # (x, x', d'_X, d'_Y, diff)

    @property
    def passed(self) -> bool:
        return self.min_diff >= self.lower - TOL and self.max_diff <= self.upper + TOL


def verify_qi_additive(f: SampledMap, c_X: PiecewiseLinearFn, c_Y: PiecewiseLinearFn,
                       plan: EnumerationPlan | None = None, lower: float = -2.0, upper: float = 1.0,
                       block: int = 512, max_witnesses: int = 100) -> QIReport:
    """Range of ``c_Y(d_Y(f x, f x')) - c_X(d_X(x, x'))`` over sampled pairs.

    Witness rows cover the extreme pairs and every pair outside
    ``[lower, upper]`` (up to ``max_witnesses``).
    """
    n = len(f.domain)
    img = f.image_indices()
    pts = f.domain.points
    if plan is None:
        plan = EnumerationPlan.auto(n, 5000, samples=1_000_000)
    lo_val, hi_val = math.inf, -math.inf
    lo_row = hi_row = None
    bad = []

    def consume(I, J):
        nonlocal lo_val, hi_val, lo_row, hi_row
        dX = c_X(f.domain.distances(I, J))
        dY = c_Y(f.codomain.distances(img[I], img[J]))
        diff = dY - dX
        k_lo, k_hi = np.unravel_index(np.argmin(diff), diff.shape), np.unravel_index(np.argmax(diff), diff.shape)
        Ib, Jb = np.broadcast_arrays(I, J)

        def row(k):
            return (pts[Ib[k]], pts[Jb[k]], float(dX[k]), float(dY[k]), float(diff[k]))

        if diff[k_lo] < lo_val:
            lo_val, lo_row = float(diff[k_lo]), row(k_lo)
        if diff[k_hi] > hi_val:
            hi_val, hi_row = float(diff[k_hi]), row(k_hi)
        if len(bad) < max_witnesses:
            out = np.argwhere((diff < lower - TOL) | (diff > upper + TOL))
            bad.extend(row(tuple(k)) for k in out[: max_witnesses - len(bad)])

    if plan.exhaustive:
        J = np.arange(n)[None, :]
        for start in range(0, n, block):
            consume(np.arange(start, min(n, start + block))[:, None], J)
        checked = n * n
    else:
        rng = np.random.default_rng(plan.seed)
        I, J = rng.integers(0, n, size=(2, plan.samples))
        consume(I, J)
        checked = plan.samples
    witnesses = [w for w in (lo_row, hi_row) if w is not None] + bad
    return QIReport(checked, lo_val, hi_val, lower, upper, witnesses)


def scaled_pair(c_X, c_Y, eps: float):
    return scale(c_X, eps), scale(c_Y, eps)


def build_lsl_schedule(Phi: PiecewiseLinearFn, steps: int) -> PiecewiseLinearFn:
    """c_Y making a coarse map with dilation Phi large-scale Lipschitz.

    b_0 = max(Phi(1), 1), b_k = max(Phi(k+1), 2 b_{k-1} - b_{k-2}) and
    c_Y(b_k) = k + 1, so ``c_Y(Phi(r)) <= r + 1`` for r <= steps + 1.
    """
    if not analyze(Phi).is_unbounded:
        raise PreconditionError("Phi must be unbounded")
    if steps < 1:
        raise ValueError("steps must be positive")
    b = [max(Phi(1.0), 1.0)]
    for k in range(1, steps + 1):
        b_prev2 = b[-2] if len(b) > 1 else 0.0
        b.append(max(Phi(k + 1.0), 2.0 * b[-1] - b_prev2))
    return _concave_c(b)


def lsl_excess(c_Y: PiecewiseLinearFn, Phi: PiecewiseLinearFn, rs) -> np.ndarray:
    rs = np.asarray(rs, dtype=float)
    return c_Y(Phi(rs)) - rs


def lsl_breakpoints(c_Y: PiecewiseLinearFn) -> tuple[float, ...]:
    return tuple(float(x) for x in c_Y.xs[1:])

