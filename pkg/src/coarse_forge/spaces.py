"""Finite metric spaces used as test beds, plus empirical axiom checks."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .plfun import TOL, PiecewiseLinearFn, analyze, inverse_or_zero

DEFAULT_SEED = 0xC0A45E
EXHAUSTIVE_TRIPLE_LIMIT = 1000


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class EnumerationPlan:
    """Exhaustive enumeration or a fixed-seed random sample of tuples."""

    exhaustive: bool = True
    samples: int = 0
    seed: int = DEFAULT_SEED

    @classmethod
    def auto(cls, n_points: int, limit: int, samples: int = 200_000, seed: int = DEFAULT_SEED):
        if n_points <= limit:
            return cls(True, 0, seed)
        return cls(False, samples, seed)

    @classmethod
    def sampled(cls, samples: int, seed: int = DEFAULT_SEED):
        return cls(False, samples, seed)


class MetricSpace:
    """A finite point set with a vectorised distance oracle.

    Points are addressed by integer index; ``distances(I, J)`` broadcasts
    over index arrays.
    """

    points: Sequence

    def __len__(self) -> int:
        return len(self.points)

    def index(self, point) -> int:
        raise NotImplementedError

    def distances(self, I, J) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x, y) -> float:
        return float(self.distances(np.array(self.index(x)), np.array(self.index(y))))

    def distance_matrix(self) -> np.ndarray:
        idx = np.arange(len(self))
        return self.distances(idx[:, None], idx[None, :])


class Lattice(MetricSpace):
    """The box {-R..R}^n in Z^n with the sup metric."""

    def __init__(self, n: int, box_radius: int):
        if n < 1 or box_radius < 0:
            raise ValueError("need n >= 1 and box_radius >= 0")
        self.n = n
        self.box_radius = box_radius
        self.side = 2 * box_radius + 1

    def __repr__(self):
        return f"Lattice(n={self.n}, box_radius={self.box_radius})"

    @cached_property
    def points(self) -> list[tuple[int, ...]]:
        r = range(-self.box_radius, self.box_radius + 1)
        return list(itertools.product(r, repeat=self.n))

    def __len__(self) -> int:
        return self.side**self.n

    @cached_property
    def coords(self) -> np.ndarray:
        axes = np.arange(-self.box_radius, self.box_radius + 1)
        grids = np.meshgrid(*([axes] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def index(self, point) -> int:
        point = tuple(point) if not isinstance(point, int) else (point,)
        if len(point) != self.n or any(abs(int(p)) > self.box_radius for p in point):
            raise KeyError(f"{point} is not in {self!r}")
        idx = 0
        for p in point:
            idx = idx * self.side + int(p) + self.box_radius
        return idx

    def distances(self, I, J):
        c = self.coords
        return np.abs(c[I] - c[J]).max(axis=-1).astype(float)


class Explicit(MetricSpace):
    """A distance matrix, validated on construction."""

    def __init__(self, matrix, labels: Sequence[str] | None = None, validate: bool = True):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("distance matrix must be square")
        self.matrix = m
        self.labels = list(labels) if labels is not None else [str(i) for i in range(len(m))]
        if len(self.labels) != len(m):
            raise ValueError("label count does not match matrix size")
        self.points = self.labels
        self._lookup = {label: i for i, label in enumerate(self.labels)}
        if len(self._lookup) != len(m):
            raise ValueError("labels must be distinct")
        if validate:
            report = verify_metric_axioms(self, EnumerationPlan(True))
            if not report.passed:
                raise ValueError(f"not a metric: {report.summary()}")

    def __repr__(self):
        return f"Explicit({len(self)} points)"

    def index(self, point) -> int:
        if point in self._lookup:
            return self._lookup[point]
        if isinstance(point, (int, np.integer)) and 0 <= point < len(self):
            return int(point)
        raise KeyError(f"{point!r} is not a point of this space")

    def distances(self, I, J):
        return self.matrix[I, J]


class SupProduct(MetricSpace):
    """Cartesian product with the max of the factor metrics."""

    def __init__(self, factors: Sequence[MetricSpace]):
        if not factors:
            raise ValueError("need at least one factor")
        self.factors = list(factors)
        self.shape = tuple(len(f) for f in self.factors)

    def __repr__(self):
        return f"SupProduct({self.factors!r})"

    @cached_property
    def points(self):
        return list(itertools.product(*(f.points for f in self.factors)))

    def __len__(self) -> int:
        return math.prod(self.shape)

    def index(self, point) -> int:
        if len(point) != len(self.factors):
            raise KeyError(f"{point} has the wrong number of components")
        return int(np.ravel_multi_index(
            tuple(f.index(p) for f, p in zip(self.factors, point)), self.shape))

    def distances(self, I, J):
        I_parts = np.unravel_index(np.asarray(I), self.shape)
        J_parts = np.unravel_index(np.asarray(J), self.shape)
        out = None
        for f, i, j in zip(self.factors, I_parts, J_parts):
            d = f.distances(i, j)
            out = d if out is None else np.maximum(out, d)
        return out


class Log1p:
    """Exact ``ln(1 + r)``, for when no piecewise-linear form is needed."""

    def __call__(self, r):
        return np.log1p(r)

    def __repr__(self):
        return "log1p"


class Transformed(MetricSpace):
    """The metric ``c(d(x, y))`` on the points of ``base``."""

    def __init__(self, base: MetricSpace, c: Callable):
        self.base = base
        self.c = c

    def __repr__(self):
        return f"Transformed({self.base!r})"

    @property
    def points(self):
        return self.base.points

    def __len__(self) -> int:
        return len(self.base)

    def index(self, point) -> int:
        return self.base.index(point)

    def distances(self, I, J):
        d = self.base.distances(I, J)
        return np.asarray(self.c(d), dtype=float)


def load_csv_matrix(path: str | Path) -> Explicit:
    """Read a distance matrix; first row holds point labels.

    Data rows may optionally start with their own label.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    labels, body = rows[0], rows[1:]
    n = len(labels)
    matrix = []
    for row in body:
        if len(row) == n + 1:
            row = row[1:]
        if len(row) != n:
            raise ValueError(f"row of length {len(row)} in a {n}-point matrix")
        matrix.append([float(v) for v in row])
    return Explicit(matrix, labels)


@dataclass
class AxiomReport:
    triples_checked: int
    violations: list = field(default_factory=list)
    violation_count: int = 0
    max_defect: float = 0.0
    symmetry_violations: list = field(default_factory=list)
    identity_violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (self.violations or self.symmetry_violations or self.identity_violations)

    def summary(self) -> str:
        return (f"{self.triples_checked} triples, {self.violation_count} triangle violations "
                f"(max defect {self.max_defect:.3g}), {len(self.symmetry_violations)} asymmetric "
                f"pairs, {len(self.identity_violations)} identity failures")


def _pair_checks(space: MetricSpace, D: np.ndarray, report: AxiomReport, cap: int):
    pts = space.points
    asym = np.argwhere(np.abs(D - D.T) > TOL)
    report.symmetry_violations = [(pts[i], pts[j]) for i, j in asym[:cap] if i < j]
    diag = np.abs(np.diag(D)) > TOL
    off = (D <= TOL) & ~np.eye(len(D), dtype=bool)
    report.identity_violations = [(pts[i], pts[i]) for i in np.flatnonzero(diag)[:cap]]
    report.identity_violations += [(pts[i], pts[j]) for i, j in np.argwhere(off)[:cap] if i < j]


def verify_metric_axioms(space: MetricSpace, plan: EnumerationPlan | None = None,
                         max_witnesses: int = 1000) -> AxiomReport:
    """Triangle, symmetry and identity checks.

    A violation is ``(x, y, z, defect)`` with defect
    ``d(x, z) - d(x, y) - d(y, z) > TOL``; witnesses are sorted by index.
    """
    n = len(space)
    if plan is None:
        plan = EnumerationPlan.auto(n, EXHAUSTIVE_TRIPLE_LIMIT)
    pts = space.points

    if plan.exhaustive:
        D = space.distance_matrix()
        report = AxiomReport(triples_checked=n**3)
        _pair_checks(space, D, report, max_witnesses)
        found = []
        for y in range(n):
            defect = D - D[:, y][:, None] - D[y, :][None, :]
            report.max_defect = max(report.max_defect, float(defect.max(initial=0.0)))
            bad = np.argwhere(defect > TOL)
            if len(bad):
                report.violation_count += len(bad)
                if len(found) < max_witnesses:
                    found.extend((int(x), y, int(z), float(defect[x, z])) for x, z in bad[:max_witnesses])
        found.sort(key=lambda t: t[:3])
    else:
        rng = np.random.default_rng(plan.seed)
        T = rng.integers(0, n, size=(plan.samples, 3))
        x, y, z = T.T
        defect = space.distances(x, z) - space.distances(x, y) - space.distances(y, z)
        report = AxiomReport(triples_checked=plan.samples)
        sym = np.abs(space.distances(x, y) - space.distances(y, x)) > TOL
        report.symmetry_violations = [(pts[i], pts[j]) for i, j in zip(x[sym], y[sym])][:max_witnesses]
        dxy = space.distances(x, y)
        ident = ((x == y) & (dxy > TOL)) | ((x != y) & (dxy <= TOL))
        report.identity_violations = [(pts[i], pts[j]) for i, j in zip(x[ident], y[ident])][:max_witnesses]
        report.max_defect = max(0.0, float(defect.max()))
        bad = np.flatnonzero(defect > TOL)
        report.violation_count = len(bad)
        found = sorted({(int(x[k]), int(y[k]), int(z[k]), float(defect[k])) for k in bad})
    report.violations = [(pts[a], pts[b], pts[c], d) for a, b, c, d in found[:max_witnesses]]
    return report


@dataclass
class CoarseIdentityReport:
    pairs_checked: int
    max_defect: float
    continuous_at_zero: bool

    @property
    def passed(self) -> bool:
        return self.max_defect <= TOL and self.continuous_at_zero


def verify_coarse_identity(base: MetricSpace, c: PiecewiseLinearFn,
                           plan: EnumerationPlan | None = None) -> CoarseIdentityReport:
    """Check that the identity between ``d`` and ``c o d`` is a coarse equivalence.

    The two-sided bound is the round trip ``c^{-1}(c(d)) = d``.
    """
    info = analyze(c)
    if not info.is_unbounded:
        raise PreconditionError("coarse equivalence needs an unbounded c")
    if not info.is_nondecreasing or abs(c(0.0)) > TOL:
        raise PreconditionError("c must be nondecreasing with c(0) = 0")
    n = len(base)
    if plan is None:
        plan = EnumerationPlan.auto(n, 3000)
    if plan.exhaustive:
        d = base.distance_matrix().ravel()
        pairs = n * n
    else:
        rng = np.random.default_rng(plan.seed)
        I, J = rng.integers(0, n, size=(2, plan.samples))
        d = base.distances(I, J)
        pairs = plan.samples
    back = inverse_or_zero(c, c(d))
    defect = float(np.max(np.abs(back - d), initial=0.0))
    # c is piecewise-linear, hence continuous; continuity at 0 reduces to c(0) = 0
    continuous = abs(c(0.0)) <= TOL
    return CoarseIdentityReport(pairs, defect, continuous)
