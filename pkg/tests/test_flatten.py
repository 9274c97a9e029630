import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarse_forge.flatten import (
    LN3,
    AffineBound,
    FlatteningSchedule,
    build_schedule,
    build_schedule_multi,
    pushed_control,
    transformed_control_bound,
    verify_flattening,
    verify_pushforward_cover,
)
from coarse_forge.plfun import PiecewiseLinearFn, analyze
from coarse_forge.spaces import PreconditionError

from _support import random_superlinear

P = PiecewiseLinearFn
C = P(((0, 0), (1, 1), (3, 2), (7, 3), (15, 4)), 1 / 8)


def bisect_inverse(c, y, hi=1e12):
    """Least r with c(r) >= y, by plain bisection on the function values."""
    if y <= c(0.0):
        return 0.0
    lo, top = 0.0, hi
    for _ in range(200):
        mid = (lo + top) / 2
        if c(mid) >= y:
            top = mid
        else:
            lo = mid
    return top


def test_schedule_examples():
    assert build_schedule(P.affine(2, 1), 3).a == (1.0, 3.0, 7.0, 15.0)
    assert build_schedule(P.linear(6), 3).a == (1.0, 6.0, 36.0, 216.0)
    multi = build_schedule_multi([P.linear(3), P.affine(2, 1)], 2)
    assert multi.a == (1.0, 3.0, 9.0)


def test_schedule_c_hits_levels():
    s = build_schedule(P.affine(2, 1), 3)
    assert s.c == C
    assert [s.c(a) for a in s.a] == [1, 2, 3, 4]


def test_schedule_growth_from_doubling_term():
    # a slow control function: the 2a_{k-1} - a_{k-2} term keeps gaps nondecreasing
    s = build_schedule(P.affine(1, 0.5), 6)
    gaps = np.diff((0.0,) + s.a)
    assert np.all(np.diff(gaps) >= -1e-12)


def test_non_monotone_control_rejected():
    with pytest.raises(ValueError):
        build_schedule(P(((0, 1), (1, 0)), 1.0), 3)


def test_schedule_dict_round_trip():
    s = build_schedule(P.affine(2, 1), 12, source="affine:2,1")
    assert FlatteningSchedule.from_dict(s.to_dict(digits=None)) == s
    assert FlatteningSchedule.from_dict(s.to_dict()).a == s.a


def test_schedule_invariants_on_random_controls():
    rng = np.random.default_rng(21)
    for _ in range(30):
        D = random_superlinear(rng)
        s = build_schedule(D, 12)
        a = np.array((0.0,) + s.a)
        assert np.all(np.diff(a) > 0)
        assert np.all(np.diff(np.diff(a)) >= -1e-9 * a[2:])
        for k in range(1, len(s.a)):
            assert s.a[k] >= D(s.a[k - 1])
        info = analyze(s.c)
        assert info.is_concave and info.is_nondecreasing
        assert info.vanishes_only_at_zero and info.is_unbounded


def test_transformed_control_bound_example():
    assert transformed_control_bound(AffineBound(2, 3), C) == AffineBound(2, 2.0)
    with pytest.raises(PreconditionError):
        transformed_control_bound(AffineBound(2, 3), P(((0, 0), (1, 1), (2, 4)), 3))
    with pytest.raises(ValueError):
        AffineBound(0.5, 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 10.0), st.floats(0.0, 20.0), st.floats(0.0, 40.0))
def test_transformed_bound_majorizes_pushed_affine(A, B, r_prime):
    # for d-distances r with c(r) = r', c(A r + B) <= A c(r) + c(B)
    c = build_schedule(P.affine(2, 1), 20).c
    r = bisect_inverse(c, r_prime)
    bound = transformed_control_bound(AffineBound(A, B), c)
    assert c(A * r + B) <= bound(c(r)) + 1e-9


def test_pushed_control_matches_bisection_oracle():
    s = build_schedule(P.affine(2, 1), 20)
    for rp in np.linspace(0.01, 15, 37):
        expect = s.c(P.affine(2, 1)(bisect_inverse(s.c, rp)))
        assert pushed_control(s.c, P.affine(2, 1), rp) == pytest.approx(expect, abs=1e-9)


def test_verify_flattening_affine_example():
    D = P.affine(2, 1)
    rep = verify_flattening(build_schedule(D, 4), D, np.linspace(0, 30, 3001))
    assert rep.passed
    assert rep.max_excess == pytest.approx(1.0, abs=1e-9)
    assert rep.schedule.c(rep.schedule.a[-1]) >= 32


def test_flattening_near_breakpoints():
    rng = np.random.default_rng(22)
    for _ in range(20):
        D = random_superlinear(rng)
        s = build_schedule(D, 40)
        levels = np.arange(1.0, 30.0)
        r = np.concatenate([levels - 1e-7, levels, levels + 1e-7])
        rep = verify_flattening(s, D, r)
        assert rep.passed, rep.max_excess


def test_flattening_random_superlinear_with_log():
    rng = np.random.default_rng(23)
    for _ in range(10):
        D = random_superlinear(rng)
        rep = verify_flattening(build_schedule(D, 10), D, rng.uniform(0, 30, 2000),
                                log_samples=rng.uniform(0, 5, 2000))
        assert rep.passed
        assert rep.max_excess <= 2 + 1e-9
        assert rep.max_log_excess <= LN3 + rep.chord_error + 1e-9


def test_log_corrected_at_ln2():
    D = P.affine(2, 1)
    rep = verify_flattening(build_schedule(D, 10), D, [1.0], log_samples=[math.log(2)])
    assert rep.max_log_excess <= LN3 + rep.chord_error + 1e-9


def test_zero_is_reported():
    D = P.affine(2, 5)
    rep = verify_flattening(build_schedule(D, 10), D, [0.0, 1.0])
    r0, d0, e0 = next(rep.rows())
    assert r0 == 0.0 and d0 == pytest.approx(rep.schedule.c(5.0)) and e0 == d0


@pytest.mark.parametrize("r_prime", [0.5, 1.0, 2.0, 2.5])
def test_pushforward_cover_z1(r_prime):
    s = build_schedule(P.linear(4), 10)
    rep = verify_pushforward_cover(s, 1, r_prime)
    assert rep.passed
    assert rep.max_diameter <= r_prime + 2 + 1e-9
