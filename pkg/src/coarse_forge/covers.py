"""Colored covers of integer lattices and control-function fitting.

``brick_cover(n, r)`` colours Z^n with n+1 colours so that each colour class
is a union of cubes that are pairwise at sup-distance > r.  ``verify_cover``
checks such a cover exhaustively on a lattice box, optionally in a
transformed metric ``c o d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .plfun import TOL, PiecewiseLinearFn, analyze
from .spaces import Lattice, MetricSpace, Transformed


@dataclass(frozen=True)
class ColoredCover:
    n: int
    r: int
    period: int

    @property
    def core_width(self) -> int:
        return self.period - 2 * self.r

    @property
    def advertised_bound(self) -> int:
        return 2 * (self.n + 1) * self.r

    def offset(self, color: int) -> int:
        return 2 * self.r * color

    def in_core(self, coords: np.ndarray, color: int) -> np.ndarray:
        shifted = np.asarray(coords) - self.offset(color)
        return np.all(np.mod(shifted, self.period) < self.core_width, axis=-1)

    def assign(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Colour (-1 if uncovered) and cell index of every row of ``coords``."""
        coords = np.atleast_2d(np.asarray(coords))
        colors = np.full(len(coords), -1, dtype=np.int64)
        cells = np.zeros(coords.shape, dtype=np.int64)
        for k in range(self.n + 1):
            take = (colors < 0) & self.in_core(coords, k)
            colors[take] = k
            cells[take] = np.floor_divide(coords[take] - self.offset(k), self.period)
        return colors, cells

    def cell_of(self, point) -> tuple[int, tuple[int, ...]] | None:
        point = (point,) if np.ndim(point) == 0 else tuple(point)
        colors, cells = self.assign(np.array([point]))
        if colors[0] < 0:
            return None
        return int(colors[0]), tuple(int(v) for v in cells[0])


def brick_cover(n: int, r: int) -> ColoredCover:
    """Shifted-core brick cover of Z^n at separation scale ``r``.

    Colour k keeps, in every coordinate, the first L - 2r integers of each
    period-L interval starting at 2rk (L = 2(n+1)r); a point takes the first
    colour whose core contains it.  The n+1 excluded zones per axis are
    disjoint, so n coordinates can block at most n colours.
    """
    if n < 1 or r < 1:
        raise ValueError("need n >= 1 and r >= 1")
    return ColoredCover(n, r, 2 * (n + 1) * r)


@dataclass
class CellRow:
    color: int
    cell_id: tuple[int, ...]
    diameter: float
    min_same_color_gap: float | None = None


@dataclass
class CoverReport:
    points_checked: int
    scale: float
    bound: float
    uncovered: list = field(default_factory=list)
    misassigned: list = field(default_factory=list)
    separation_violations: list = field(default_factory=list)
    diameter_violations: list = field(default_factory=list)
    cells: list[CellRow] = field(default_factory=list)
    max_diameter: float = 0.0

    @property
    def passed(self) -> bool:
        return not (self.uncovered or self.misassigned
                    or self.separation_violations or self.diameter_violations)

    def rows(self):
        for c in self.cells:
            yield c.color, ";".join(map(str, c.cell_id)), c.diameter, c.min_same_color_gap


def _lattice_and_transform(space: MetricSpace):
    transforms = []
    while isinstance(space, Transformed):
        c = space.c
        if isinstance(c, PiecewiseLinearFn) and not analyze(c).is_nondecreasing:
            raise ValueError("cover verification needs nondecreasing transforms")
        transforms.append(c)
        space = space.base
    if not isinstance(space, Lattice):
        raise TypeError("verify_cover works on lattice boxes and their transforms")

    def t(d):
        d = np.asarray(d, dtype=float)
        for c in reversed(transforms):
            d = np.asarray(c(d), dtype=float)
        return d

    return space, t


def _conflicts(color_grid, label_grid, color, w):
    """Points of ``color`` with a different same-colour cell within sup-distance ``w``."""
    mine = color_grid == color
    big = int(label_grid.max()) + 1  # scipy routes cval through a double
    hi = ndimage.maximum_filter(np.where(mine, label_grid, -1), size=2 * w + 1,
                                mode="constant", cval=-1)
    lo = ndimage.minimum_filter(np.where(mine, label_grid, big), size=2 * w + 1,
                                mode="constant", cval=big)
    return mine & ((hi > label_grid) | (lo < label_grid))


def _nearest_rival(color_grid, label_grid, p, w):
    """Closest point to grid position ``p`` in another cell of the same colour."""
    box = tuple(slice(max(0, q - w), q + w + 1) for q in p)
    col, lab = color_grid[box], label_grid[box]
    rivals = np.argwhere((col == color_grid[p]) & (lab != label_grid[p]))
    origin = np.array([s.start for s in box])
    rivals = rivals + origin
    d = np.abs(rivals - np.array(p)).max(axis=1)
    k = int(np.lexsort((*rivals.T[::-1], d))[0])
    return tuple(int(v) for v in rivals[k]), int(d[k])


def verify_cover(space: MetricSpace, cover: ColoredCover, r: float, D: float,
                 gap_window: int | None = None, max_witnesses: int = 100) -> CoverReport:
    """Exhaustive check of coverage, r-disjointness per colour and diameters <= D.

    Distances are measured in ``space`` (a lattice box or a transform of
    one).  Cells are clipped to the box.  With ``gap_window`` set, each
    cell's nearest same-colour neighbour within that many lattice steps is
    recorded for reporting.
    """
    lattice, t = _lattice_and_transform(space)
    coords = lattice.coords
    R = lattice.box_radius
    shape = (lattice.side,) * lattice.n
    report = CoverReport(points_checked=len(coords), scale=r, bound=D)

    colors, cells = cover.assign(coords)
    bad = np.flatnonzero(colors < 0)
    report.uncovered = [tuple(int(v) for v in coords[i]) for i in bad[:max_witnesses]]
    covered = colors >= 0
    # independent membership check: the point lies in its colour's core and cell
    for k in range(cover.n + 1):
        sel = colors == k
        ok = cover.in_core(coords[sel], k) & np.all(
            np.floor_divide(coords[sel] - cover.offset(k), cover.period) == cells[sel], axis=1)
        report.misassigned += [tuple(int(v) for v in p) for p in coords[sel][~ok][:max_witnesses]]

    keys = np.column_stack([colors, cells])
    uniq, labels = np.unique(keys[covered], axis=0, return_inverse=True)
    labels = labels.ravel()
    label_full = np.full(len(coords), -1, dtype=np.int64)
    label_full[covered] = labels

    lo = np.full((len(uniq), lattice.n), np.iinfo(np.int64).max)
    hi = np.full((len(uniq), lattice.n), np.iinfo(np.int64).min)
    np.minimum.at(lo, labels, coords[covered])
    np.maximum.at(hi, labels, coords[covered])
    # sup-diameter of a finite set = largest coordinate range; t is nondecreasing
    diam = t((hi - lo).max(axis=1))
    report.max_diameter = float(diam.max(initial=0.0))
    report.cells = [CellRow(int(u[0]), tuple(int(v) for v in u[1:]), float(d))
                    for u, d in zip(uniq, diam)]
    for row in report.cells:
        if row.diameter > D + TOL:
            report.diameter_violations.append((row.color, row.cell_id, row.diameter))

    color_grid = colors.reshape(shape)
    label_grid = label_full.reshape(shape)
    steps = np.arange(1, 2 * R + 1)
    too_close = t(steps) < r - TOL
    w = int(np.argmin(too_close)) if not too_close.all() else len(steps)
    if w > 0:
        for k in range(cover.n + 1):
            for p in np.argwhere(_conflicts(color_grid, label_grid, k, w))[:max_witnesses]:
                p = tuple(int(v) for v in p)
                q, d = _nearest_rival(color_grid, label_grid, p, w)
                report.separation_violations.append(
                    (tuple(v - R for v in p), tuple(v - R for v in q), float(t(d))))
        report.separation_violations.sort()
        del report.separation_violations[max_witnesses:]

    if gap_window:
        gap = np.full(len(uniq), np.nan)
        for d in range(1, gap_window + 1):
            for k in range(cover.n + 1):
                touched = np.unique(label_grid[_conflicts(color_grid, label_grid, k, d)])
                fresh = touched[np.isnan(gap[touched])]
                gap[fresh] = float(t(d))
        for row, g in zip(report.cells, gap):
            row.min_same_color_gap = None if np.isnan(g) else float(g)
    return report


@dataclass
class ControlSamples:
    samples: list[tuple[float, float]]
    fitted: tuple[float, float] | None = None


def measure_control(n: int, rs, box_radius: int | None = None) -> ControlSamples:
    """Largest brick-cell diameter for each scale, measured on a lattice box."""
    out = []
    for r in rs:
        cover = brick_cover(n, r)
        R = box_radius if box_radius is not None else max(cover.period, 3)
        rep = verify_cover(Lattice(n, R), cover, r, cover.advertised_bound)
        if not rep.passed:
            raise RuntimeError(f"brick cover failed verification at n={n}, r={r}")
        out.append((float(r), rep.max_diameter))
    return ControlSamples(out)


def _upper_hull(points):
    hull = []
    for p in points:
        while len(hull) >= 2:
            (x0, y0), (x1, y1) = hull[-2], hull[-1]
            if (x1 - x0) * (p[1] - y0) - (y1 - y0) * (p[0] - x0) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def fit_affine_control(samples: ControlSamples, growth_tolerance: float = 1.5):
    """Least-slope affine majorant ``(A, B)`` supported by the upper hull.

    Returns None when the secant slope over the upper half of the samples
    exceeds the lower-half secant by more than a factor ``growth_tolerance``,
    the sampled signature of superlinear growth.
    """
    pts = sorted(samples.samples)
    if len(pts) < 2:
        raise ValueError("need at least two samples")
    merged = {}
    for r, d in pts:
        merged[r] = max(d, merged.get(r, d))
    pts = sorted(merged.items())
    if len(pts) < 2:
        raise ValueError("need samples at two distinct scales")

    if len(pts) >= 3:
        (r0, d0), (rm, dm), (r1, d1) = pts[0], pts[len(pts) // 2], pts[-1]
        lower, upper = (dm - d0) / (rm - r0), (d1 - dm) / (r1 - rm)
        if upper > growth_tolerance * max(lower, 0.0) + TOL:
            samples.fitted = None
            return None

    hull = _upper_hull(pts)
    (r0, d0), (r1, d1) = hull[-2], hull[-1]
    A = (d1 - d0) / (r1 - r0)
    B = max(d - A * r for r, d in pts)
    samples.fitted = (A, B)
    return A, B
