"""Monotone piecewise-linear functions on [0, inf).

Every function in the toolkit (flattening functions, contraction/dilation
profiles, control functions) is one of these: a list of breakpoints with
affine interpolation in between and an affine tail beyond the last one.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TOL = 1e-9


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class RangeError(ValueError):
    """Value outside the image of a bounded function."""


@dataclass(frozen=True)
class PiecewiseLinearFn:
    breakpoints: tuple[tuple[float, float], ...]
    tail_slope: float

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.breakpoints)
        if not pts:
            raise ValueError("at least one breakpoint required")
        if pts[0][0] != 0.0:
            raise ValueError(f"first breakpoint must have x = 0, got {pts[0][0]}")
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if not x1 > x0:
                raise ValueError(f"breakpoints not strictly increasing at x={x1}")
            if y1 < y0:
                raise ValueError(f"values decrease between x={x0} and x={x1}")
        if any(y < 0 or not math.isfinite(y) for _, y in pts):
            raise ValueError("values must be finite and nonnegative")
        tail = float(self.tail_slope)
        if tail < 0 or not math.isfinite(tail):
            raise ValueError("tail_slope must be finite and nonnegative")
        object.__setattr__(self, "breakpoints", pts)
        object.__setattr__(self, "tail_slope", tail)
        object.__setattr__(self, "_xs", np.array([p[0] for p in pts]))
        object.__setattr__(self, "_ys", np.array([p[1] for p in pts]))

    @classmethod
    def from_points(cls, xs: Iterable[float], ys: Iterable[float], tail_slope: float):
        return cls(tuple(zip(xs, ys)), tail_slope)

    @classmethod
    def identity(cls) -> "PiecewiseLinearFn":
        return cls(((0.0, 0.0), (1.0, 1.0)), 1.0)

    @classmethod
    def linear(cls, slope: float) -> "PiecewiseLinearFn":
        return cls(((0.0, 0.0),), slope)

    @classmethod
    def affine(cls, A: float, B: float) -> "PiecewiseLinearFn":
        return cls(((0.0, B), (1.0, A + B)), A)

    @classmethod
    def chordal(cls, fn, nodes: Sequence[float], tail_slope: float | None = None):
        """Interpolate ``fn`` at ``nodes``; the tail continues the last chord."""
        xs = [float(x) for x in nodes]
        ys = [float(fn(x)) for x in xs]
        if tail_slope is None:
            tail_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2]) if len(xs) > 1 else 0.0
        return cls.from_points(xs, ys, tail_slope)

    @property
    def xs(self) -> np.ndarray:
        return self._xs

    @property
    def ys(self) -> np.ndarray:
        return self._ys

    @property
    def slopes(self) -> list[float]:
        """Segment slopes followed by the tail slope."""
        pts = self.breakpoints
        seg = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(pts, pts[1:])]
        return seg + [self.tail_slope]

    def __call__(self, r):
        if np.ndim(r) == 0:
            return evaluate(self, float(r))
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("negative argument")
        out = np.interp(r, self._xs, self._ys)
        beyond = r > self._xs[-1]
        if np.any(beyond):
            out[beyond] = self._ys[-1] + self.tail_slope * (r[beyond] - self._xs[-1])
        return out

    def to_dict(self, digits: int | None = None) -> dict:
        fmt = (lambda v: v) if digits is None else (lambda v: round_sig(v, digits))
        return {
            "breakpoints": [[fmt(x), fmt(y)] for x, y in self.breakpoints],
            "tail_slope": fmt(self.tail_slope),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseLinearFn":
        try:
            return cls(tuple((x, y) for x, y in data["breakpoints"]), data["tail_slope"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed piecewise-linear function: {exc}") from None

    def to_json(self, digits: int | None = None) -> str:
        return json.dumps(self.to_dict(digits))

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseLinearFn":
        return cls.from_dict(json.loads(text))


def round_sig(v: float, digits: int = 12) -> float:
    return float(format(v, f".{digits}g"))


def evaluate(f: PiecewiseLinearFn, r: float) -> float:
    if r < 0:
        raise DomainError(f"negative argument {r}")
    pts = f.breakpoints
    x_last, y_last = pts[-1]
    if r >= x_last:
        return y_last + f.tail_slope * (r - x_last)
    i = bisect.bisect_right(f.xs, r) - 1
    (x0, y0), (x1, y1) = pts[i], pts[i + 1]
    return y0 + (y1 - y0) * (r - x0) / (x1 - x0)


def right_slope(f: PiecewiseLinearFn, r: float) -> float:
    if r >= f.breakpoints[-1][0]:
        return f.tail_slope
    i = bisect.bisect_right(f.xs, r) - 1
    (x0, y0), (x1, y1) = f.breakpoints[i], f.breakpoints[i + 1]
    return (y1 - y0) / (x1 - x0)


def inverse_or_zero(f: PiecewiseLinearFn, y):
    """Least r with f(r) >= y; 0 when y does not exceed f(0).

    Accepts scalars or arrays.
    """
    if np.ndim(y) != 0:
        return _inverse_array(f, np.asarray(y, dtype=float))
    y = float(y)
    if y < 0:
        raise DomainError(f"negative value {y}")
    xs, ys = f.xs, f.ys
    if y <= ys[0]:
        return 0.0
    if y > ys[-1]:
        if f.tail_slope == 0:
            raise RangeError(f"{y} exceeds the supremum {ys[-1]} of a bounded function")
        return xs[-1] + (y - ys[-1]) / f.tail_slope
    i = bisect.bisect_left(ys, y)
    return xs[i - 1] + (y - ys[i - 1]) * (xs[i] - xs[i - 1]) / (ys[i] - ys[i - 1])


def _inverse_array(f: PiecewiseLinearFn, y: np.ndarray) -> np.ndarray:
    if np.any(y < 0):
        raise DomainError("negative value")
    xs, ys = f.xs, f.ys
    if f.tail_slope == 0 and np.any(y > ys[-1]):
        raise RangeError(f"values exceed the supremum {ys[-1]} of a bounded function")
    out = np.zeros_like(y)
    tail = y > ys[-1]
    out[tail] = xs[-1] + (y[tail] - ys[-1]) / f.tail_slope if f.tail_slope else 0.0
    mid = (y > ys[0]) & ~tail
    i = np.searchsorted(ys, y[mid], side="left")
    x0, y0 = xs[i - 1], ys[i - 1]
    out[mid] = x0 + (y[mid] - y0) * (xs[i] - x0) / (ys[i] - y0)
    return out


def sup_preimage(f: PiecewiseLinearFn, b: float) -> float:
    """Largest r with f(r) <= b, i.e. sup f^{-1}([0, b]).

    On a flat segment at level b this is the segment's right end.
    """
    xs, ys = f.xs, f.ys
    if b < ys[0]:
        raise RangeError(f"{b} lies below f(0) = {ys[0]}")
    if b >= ys[-1]:
        if f.tail_slope == 0:
            raise RangeError("preimage of a bounded function is unbounded")
        return xs[-1] + (b - ys[-1]) / f.tail_slope
    i = bisect.bisect_right(ys, b)
    # ys[i-1] <= b < ys[i]
    return xs[i - 1] + (b - ys[i - 1]) * (xs[i] - xs[i - 1]) / (ys[i] - ys[i - 1])


@dataclass(frozen=True)
class FnAnalysis:
    is_nondecreasing: bool
    is_concave: bool
    is_subadditive: bool
    vanishes_only_at_zero: bool
    is_unbounded: bool
    witness: tuple[float, float] | None = None

    @property
    def metric_preserving(self) -> bool:
        """Composition with any metric is again a metric."""
        return self.is_nondecreasing and self.is_subadditive and self.vanishes_only_at_zero


def _subadditivity_candidates(f: PiecewiseLinearFn, grid_step: float):
    bx = [float(x) for x in f.xs]
    for i, a in enumerate(bx):
        for b in bx[i:]:
            yield a, b
    # vertices of the arrangement a = x_i, b = x_j, a + b = x_k
    for a in bx:
        for s in bx:
            if s > a:
                yield min(a, s - a), max(a, s - a)
    top = 2.0 * max(bx[-1], grid_step)
    m = int(math.floor(top / grid_step + TOL))
    grid = [k * grid_step for k in range(m + 1)]
    for i, a in enumerate(grid):
        for b in grid[i:]:
            yield a, b


def analyze(f: PiecewiseLinearFn, grid_step: float = 0.5) -> FnAnalysis:
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    slopes = f.slopes
    nondecreasing = all(s >= -TOL for s in slopes)
    concave = all(s1 <= s0 + TOL for s0, s1 in zip(slopes, slopes[1:]))
    zero_only_at_zero = abs(f.ys[0]) <= TOL and slopes[0] > TOL
    unbounded = f.tail_slope > TOL

    witness = None
    if concave:
        # nonnegative concave functions on [0, inf) are subadditive
        subadditive = True
    else:
        subadditive = True
        for a, b in _subadditivity_candidates(f, grid_step):
            if evaluate(f, a + b) > evaluate(f, a) + evaluate(f, b) + TOL:
                subadditive, witness = False, (a, b)
                break
    return FnAnalysis(nondecreasing, concave, subadditive, zero_only_at_zero, unbounded, witness)


def compose(outer: PiecewiseLinearFn, inner: PiecewiseLinearFn) -> PiecewiseLinearFn:
    """The piecewise-linear function ``outer(inner(r))``."""
    nodes = set(float(x) for x in inner.xs)
    lo, hi = inner.ys[0], inner.ys[-1]
    for yb in outer.xs:
        if yb <= lo:
            continue
        if yb > hi and inner.tail_slope == 0:
            break
        nodes.add(float(inverse_or_zero(inner, yb)))
    xs = []
    for x in sorted(nodes):
        if xs and x - xs[-1] <= 1e-12 * max(1.0, x):
            continue
        xs.append(x)
    ys = [evaluate(outer, evaluate(inner, x)) for x in xs]
    ys = list(np.maximum.accumulate(ys))  # guard against rounding dips
    tail = right_slope(outer, evaluate(inner, xs[-1])) * inner.tail_slope
    return PiecewiseLinearFn.from_points(xs, ys, tail)


def log1p_chordal(value_nodes: Iterable[float]) -> PiecewiseLinearFn:
    """Chords of ``ln(1 + y)`` through ``value_nodes``; the tail is the tangent at the last node."""
    nodes = sorted(set([0.0] + [float(v) for v in value_nodes]))
    last = nodes[-1]
    return PiecewiseLinearFn.chordal(math.log1p, nodes, tail_slope=1.0 / (1.0 + last))


def log_value_nodes(f: PiecewiseLinearFn, node_count: int, span: float | None = None) -> list[float]:
    if node_count < 1:
        raise ValueError("node_count must be positive")
    if span is None:
        span = max(float(f.ys[-1]), 1.0)
    top = math.log1p(span)
    extra = [math.expm1(top * j / node_count) for j in range(1, node_count + 1)]
    return sorted(set(float(y) for y in f.ys) | set(extra))


def log_correct(f: PiecewiseLinearFn, node_count: int, span: float | None = None) -> PiecewiseLinearFn:
    """Piecewise-linear version of ``ln(f(r) + 1)``.

    The nodes are the breakpoints of ``f`` plus ``node_count`` points whose
    images are evenly spaced on the log scale up to the value ``span``.  The
    result is exact at every node and lies on chords in between.  Two
    functions with the same breakpoint values, ``node_count`` and ``span``
    get the same outer chordal logarithm, which keeps differences between
    them 1-Lipschitz.
    """
    return compose(log1p_chordal(log_value_nodes(f, node_count, span)), f)


def log_chord_gap(y0: float, y1: float) -> float:
    """Max of ``ln(1+y)`` minus its chord over ``[y0, y1]``."""
    if y1 <= y0:
        return 0.0
    m = (math.log1p(y1) - math.log1p(y0)) / (y1 - y0)
    y_star = min(max(1.0 / m - 1.0, y0), y1)
    return math.log1p(y_star) - (math.log1p(y0) + m * (y_star - y0))


def log_chord_error(h: PiecewiseLinearFn) -> float:
    """Largest gap between ``h`` and the exact log it interpolates, over the node range."""
    vals = [math.expm1(y) for y in h.ys]
    return max((log_chord_gap(a, b) for a, b in zip(vals, vals[1:])), default=0.0)


def scale(f: PiecewiseLinearFn, eps: float) -> PiecewiseLinearFn:
    if not eps > 0:
        raise DomainError(f"scale factor must be positive, got {eps}")
    return PiecewiseLinearFn(tuple((x, eps * y) for x, y in f.breakpoints), eps * f.tail_slope)
