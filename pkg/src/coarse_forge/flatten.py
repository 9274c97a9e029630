"""Concave flattening functions built from control functions.

Given a nondecreasing control function D, the breakpoints

    a_{-1} = 0,  a_0 = 1,  a_k = max(D(a_{k-1}), 2 a_{k-1} - a_{k-2})

define a concave piecewise-affine c with c(a_{k-1}) = k.  In the metric
c o d the pushed-forward control function satisfies D~(r') <= r' + 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .covers import CoverReport, brick_cover, verify_cover
from .plfun import (
    TOL,
    PiecewiseLinearFn,
    analyze,
    inverse_or_zero,
    log_chord_error,
    log_correct,
    round_sig,
)
from .spaces import Lattice, PreconditionError, Transformed

LN3 = math.log(3.0)


def _c_from_breakpoints(a: Sequence[float]) -> PiecewiseLinearFn:
    xs = [0.0] + list(a)
    ys = [float(k) for k in range(len(xs))]
    tail = 1.0 / (xs[-1] - xs[-2])
    return PiecewiseLinearFn.from_points(xs, ys, tail)


def _advance(Ds, a: list[float], steps: int) -> list[float]:
    a = list(a)
    for _ in range(steps):
        prev = a[-1]
        prev2 = a[-2] if len(a) > 1 else 0.0
        a.append(max(max(D(prev) for D in Ds), 2.0 * prev - prev2))
    return a


@dataclass(frozen=True)
class FlatteningSchedule:
    """Breakpoints ``a = (a_0, ..., a_K)`` (a_{-1} = 0 implicit) and ``c``."""

    a: tuple[float, ...]
    c: PiecewiseLinearFn
    source: str = ""

    @property
    def K(self) -> int:
        return len(self.a) - 1

    def extended(self, Ds, steps: int) -> "FlatteningSchedule":
        Ds = [Ds] if isinstance(Ds, PiecewiseLinearFn) else list(Ds)
        a = _advance(Ds, self.a, steps)
        return FlatteningSchedule(tuple(a), _c_from_breakpoints(a), self.source)

    def covering_value(self, Ds, value: float) -> "FlatteningSchedule":
        """Extend until c reaches at least ``value`` on its built range."""
        need = max(0, math.ceil(value) - 1 - self.K)
        return self.extended(Ds, need) if need else self

    def to_dict(self, digits: int | None = 12) -> dict:
        fmt = (lambda v: v) if digits is None else (lambda v: round_sig(v, digits))
        return {"a": [fmt(v) for v in self.a], "c": self.c.to_dict(digits), "source": self.source}

    @classmethod
    def from_dict(cls, data: dict) -> "FlatteningSchedule":
        return cls(tuple(float(v) for v in data["a"]),
                   PiecewiseLinearFn.from_dict(data["c"]), data.get("source", ""))


def _check_controls(Ds):
    for D in Ds:
        if not analyze(D).is_nondecreasing:
            raise ValueError("control functions must be nondecreasing")


def build_schedule_multi(Ds: Sequence[PiecewiseLinearFn], steps: int,
                         source: str = "") -> FlatteningSchedule:
    """One schedule dominating every control function in ``Ds`` at once.

    Used for a product and its factors: the shared c flattens all of them.
    """
    Ds = list(Ds)
    if not Ds:
        raise ValueError("need at least one control function")
    if steps < 1:
        raise ValueError("steps must be positive")
    _check_controls(Ds)
    a = _advance(Ds, [1.0], steps)
    return FlatteningSchedule(tuple(a), _c_from_breakpoints(a), source)


def build_schedule(D: PiecewiseLinearFn, steps: int, source: str = "") -> FlatteningSchedule:
    return build_schedule_multi([D], steps, source)


@dataclass(frozen=True)
class AffineBound:
    A: float
    B: float

    def __post_init__(self):
        if self.A < 1 or self.B < 0:
            raise ValueError("affine control needs A >= 1 and B >= 0")

    def __call__(self, r):
        return self.A * r + self.B


def transformed_control_bound(bound: AffineBound, c: PiecewiseLinearFn) -> AffineBound:
    """Affine control ``A r' + c(B)`` for ``c o d`` from ``A r + B`` for ``d``.

    The slope survives; the intercept is pushed through c.  The equivalent
    "D(r) + C" form has ``C = c(B) - B``.
    """
    info = analyze(c)
    if not (info.is_concave and info.is_nondecreasing and info.vanishes_only_at_zero
            and info.is_unbounded):
        raise PreconditionError("c must be concave, nondecreasing, unbounded, zero only at 0")
    return AffineBound(bound.A, float(c(bound.B)))


def pushed_control(c: PiecewiseLinearFn, D: PiecewiseLinearFn, r_prime):
    """``c(D(c^{-1}(r')))``, the control function of ``c o d`` induced by D."""
    return c(D(inverse_or_zero(c, r_prime)))


@dataclass
class FlatteningReport:
    r_prime: np.ndarray
    D_tilde: np.ndarray
    max_excess: float
    passed: bool
    r_log: np.ndarray = field(default_factory=lambda: np.empty(0))
    D_log: np.ndarray = field(default_factory=lambda: np.empty(0))
    max_log_excess: float | None = None
    log_bound: float | None = None
    chord_error: float | None = None
    schedule: FlatteningSchedule | None = None

    @property
    def excess(self) -> np.ndarray:
        return self.D_tilde - self.r_prime

    def rows(self):
        yield from zip(self.r_prime.tolist(), self.D_tilde.tolist(), self.excess.tolist())


def verify_flattening(schedule: FlatteningSchedule, D: PiecewiseLinearFn, samples,
                      log_samples=None, node_count: int = 64, tol: float = TOL) -> FlatteningReport:
    """Measure ``D~(r') - r'`` and, optionally, the excess after ln-correction.

    The schedule is extended with D as far as the samples need.  The point
    r' = 0 is reported but not asserted.  The ln-corrected check passes when
    every excess is at most ``ln 3`` plus the chord error of the corrected
    function.
    """
    r = np.asarray(samples, dtype=float)
    r_max = float(r.max(initial=0.0))
    if log_samples is not None:
        r_log = np.asarray(log_samples, dtype=float)
        # c'' must reach e^{r''} + 2 with room for the chord error
        top = 1.1 * math.exp(float(r_log.max(initial=0.0))) + 4.0
    else:
        r_log, top = np.empty(0), 0.0
    schedule = schedule.covering_value(D, max(r_max + 2.0, top) + 1.0)

    c = schedule.c
    D_t = pushed_control(c, D, r)
    positive = r > 0
    max_excess = float(np.max(D_t[positive] - r[positive], initial=-math.inf))
    passed = max_excess <= 2.0 + tol
    report = FlatteningReport(r, D_t, max_excess, passed, schedule=schedule)

    if len(r_log):
        c2 = log_correct(c, node_count, span=top)
        err = log_chord_error(c2)
        D2 = pushed_control(c2, D, r_log)
        ok = r_log > 0
        report.r_log, report.D_log = r_log, D2
        report.max_log_excess = float(np.max(D2[ok] - r_log[ok], initial=-math.inf))
        report.chord_error = err
        report.log_bound = LN3 + err
        report.passed = passed and report.max_log_excess <= LN3 + err + tol
    return report


def verify_pushforward_cover(schedule: FlatteningSchedule, n: int, r_prime: float,
                             box_radius: int | None = None) -> CoverReport:
    """Check a brick cover of Z^n as a witness at scale r' in ``c o d`` with bound r' + 2.

    The base scale is the integer ceiling of ``c^{-1}(r')``, so same-colour
    cells stay r'-disjoint after the transform.  The schedule must have
    been built from a control function dominating ``2(n+1) r``.
    """
    c = schedule.c
    rho = float(inverse_or_zero(c, r_prime))
    r_base = max(1, math.ceil(rho - TOL))
    cover = brick_cover(n, r_base)
    R = box_radius if box_radius is not None else cover.period
    return verify_cover(Transformed(Lattice(n, R), c), cover, r_prime, r_prime + 2.0)
