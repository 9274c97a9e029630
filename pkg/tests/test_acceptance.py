"""End-to-end acceptance criteria with their tolerances and time budgets."""

import math
import time

import numpy as np
import pytest

from coarse_forge.covers import brick_cover, verify_cover
from coarse_forge.flatten import (
    LN3,
    build_schedule,
    build_schedule_multi,
    verify_flattening,
    verify_pushforward_cover,
)
from coarse_forge.hyperbolicity import diamond_quadruple, four_point_delta, quadruple_delta
from coarse_forge.plfun import PiecewiseLinearFn, analyze
from coarse_forge.qirepair import (
    CoarseProfile,
    SampledMap,
    build_lsl_schedule,
    log_corrected_pair,
    lsl_excess,
    qi_steps_for,
    scaled_pair,
    verify_qi_additive,
)
from coarse_forge.spaces import (
    DEFAULT_SEED,
    EnumerationPlan,
    Lattice,
    Log1p,
    SupProduct,
    Transformed,
    verify_metric_axioms,
)

from _support import grid_subadditive, random_concave, random_pl, random_superlinear, record

P = PiecewiseLinearFn
EPS = 1e-9


def controls():
    rng = np.random.default_rng(DEFAULT_SEED)
    return [P.affine(2, 1)] + [random_superlinear(rng) for _ in range(10)]


def uniform_open(rng, hi, n):
    return hi * (1.0 - rng.random(n))  # (0, hi]


def test_1_flattening_bound():
    Ds = controls()
    rng = np.random.default_rng(DEFAULT_SEED + 1)
    r = uniform_open(rng, 30.0, 10_000)
    t0 = time.perf_counter()
    worst = max(verify_flattening(build_schedule(D, 8), D, r).max_excess for D in Ds)
    elapsed = time.perf_counter() - t0
    ok = worst <= 2 + EPS and elapsed < 1.0
    record(1, "flattening bound", ok, f"max excess {worst:.6g} <= 2, {elapsed:.2f}s < 1s")
    assert worst <= 2 + EPS
    assert elapsed < 1.0


def test_2_post_log_control():
    Ds = controls()
    rng = np.random.default_rng(DEFAULT_SEED + 2)
    r = uniform_open(rng, 30.0, 100)
    r_log = uniform_open(rng, 5.0, 10_000)
    t0 = time.perf_counter()
    margins = []
    for D in Ds:
        rep = verify_flattening(build_schedule(D, 8), D, r, log_samples=r_log)
        margins.append((rep.max_log_excess - LN3 - rep.chord_error, rep.chord_error))
    elapsed = time.perf_counter() - t0
    worst, err = max(margins)
    ok = worst <= EPS and elapsed < 1.0
    record(2, "post-log control", ok,
           f"max excess - (ln3 + chord error) = {worst:.4g} (chord error {err:.2g}), {elapsed:.2f}s < 1s")
    assert worst <= EPS
    assert elapsed < 1.0


def test_3_brick_covers():
    cases = ([(1, r, 200) for r in range(1, 21)] + [(2, r, 60) for r in range(1, 9)]
             + [(3, r, 30) for r in range(1, 4)])
    t0 = time.perf_counter()
    failed = []
    for n, r, box in cases:
        cover = brick_cover(n, r)
        rep = verify_cover(Lattice(n, box), cover, r, 2 * (n + 1) * r)
        if not (rep.passed and rep.points_checked == (2 * box + 1) ** n):
            failed.append((n, r))
    elapsed = time.perf_counter() - t0
    ok = not failed and elapsed < 30
    record(3, "brick covers", ok, f"{len(cases) - len(failed)}/{len(cases)} cases, {elapsed:.2f}s < 30s")
    assert not failed
    assert elapsed < 30


def test_4_metric_axioms():
    t0 = time.perf_counter()
    c = build_schedule(P.affine(2, 1), 10).c
    good = verify_metric_axioms(Transformed(Lattice(2, 8), c), EnumerationPlan(True))
    convex = P.chordal(lambda x: x * x, range(0, 40))
    bad = verify_metric_axioms(Transformed(Lattice(2, 8), convex), EnumerationPlan(True))
    elapsed = time.perf_counter() - t0
    witness_ok = bool(bad.violations)
    if witness_ok:
        x, y, z, defect = bad.violations[0]
        d = lambda p, q: max(abs(a - b) for a, b in zip(p, q)) ** 2
        witness_ok = abs(d(x, z) - d(x, y) - d(y, z) - defect) < 1e-9 and defect > 0
    ok = good.passed and good.violation_count == 0 and witness_ok and elapsed < 60
    record(4, "metric axioms", ok,
           f"{good.violation_count} violations under c, {bad.violation_count} under convex control, "
           f"{elapsed:.2f}s < 60s")
    assert good.passed and good.triples_checked == 289 ** 3
    assert witness_ok
    assert elapsed < 60


def test_5_pushforward_witness():
    sched = build_schedule(P.linear(6), 10)
    rng = np.random.default_rng(DEFAULT_SEED + 5)
    scales = np.sort(uniform_open(rng, 3.0, 20))
    t0 = time.perf_counter()
    failed = [float(s) for s in scales if not verify_pushforward_cover(sched, 2, float(s)).passed]
    elapsed = time.perf_counter() - t0
    ok = not failed and elapsed < 60
    record(5, "pushforward cover witness", ok,
           f"{20 - len(failed)}/20 scales with bound r'+2, {elapsed:.2f}s < 60s")
    assert not failed
    assert elapsed < 60


def test_6_qi_repair():
    sqrt = P.chordal(math.sqrt, range(0, 4001))
    t0 = time.perf_counter()
    pair = qi_steps_for(CoarseProfile(sqrt, sqrt), 4000)
    fmap = SampledMap(Lattice(1, 2000), Transformed(Lattice(1, 2000), sqrt), lambda p: p)
    plan = EnumerationPlan(True)
    lx, ly = log_corrected_pair(pair)
    sx, sy = scaled_pair(lx, ly, 0.1)
    reps = [verify_qi_additive(fmap, pair.c_X, pair.c_Y, plan, -2, 1),
            verify_qi_additive(fmap, lx, ly, plan, -2, 1),
            verify_qi_additive(fmap, sx, sy, plan, -0.2, 0.1)]
    elapsed = time.perf_counter() - t0
    ranges = ", ".join(f"[{r.min_diff:.4g}, {r.max_diff:.4g}]" for r in reps)
    ok = all(r.passed for r in reps) and elapsed < 30
    record(6, "QI repair", ok, f"diffs {ranges}, {elapsed:.2f}s < 30s")
    assert all(r.pairs_checked == 4001 ** 2 for r in reps)
    assert reps[0].min_diff >= -2 - EPS and reps[0].max_diff <= 1 + EPS
    assert reps[1].min_diff >= -2 - EPS and reps[1].max_diff <= 1 + EPS
    assert reps[2].min_diff >= -0.2 - EPS and reps[2].max_diff <= 0.1 + EPS
    assert elapsed < 30


def test_7_lsl_repair():
    rng = np.random.default_rng(DEFAULT_SEED + 7)
    Phis = [P.chordal(lambda x: x * x, range(0, 61))] + [random_superlinear(rng) for _ in range(10)]
    r = np.linspace(0.0, 50.0, 10_001)
    t0 = time.perf_counter()
    worst = max(float(lsl_excess(build_lsl_schedule(Phi, 51), Phi, r).max()) for Phi in Phis)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1 + EPS and elapsed < 1.0
    record(7, "large-scale Lipschitz repair", ok, f"max excess {worst:.6g} <= 1, {elapsed:.2f}s < 1s")
    assert worst <= 1 + EPS
    assert elapsed < 1.0


def test_8_hyperbolicity_contrast():
    t0 = time.perf_counter()
    raw = {m: quadruple_delta(Lattice(2, m), diamond_quadruple(m)) for m in (4, 8, 16)}
    plan = EnumerationPlan.sampled(1_000_000, seed=DEFAULT_SEED)
    logd = {m: four_point_delta(Transformed(Lattice(2, m), Log1p()), plan) for m in (4, 8, 16)}
    elapsed = time.perf_counter() - t0
    d4, d8, d16 = (logd[m].delta for m in (4, 8, 16))
    raw_ok = all(raw[m] >= m for m in raw)
    saturation = d16 - d8 <= d8 - d4 + EPS
    ok = raw_ok and saturation and elapsed < 120
    record(8, "hyperbolicity contrast", ok,
           f"raw delta {[raw[m] for m in (4, 8, 16)]}, log delta {d4:.4f} {d8:.4f} {d16:.4f} "
           f"(lower bounds), {d16 - d8:.4f} <= {d8 - d4:.4f}, {elapsed:.1f}s < 120s")
    assert raw_ok
    assert all(r.is_lower_bound and r.quadruples_checked == 1_000_000 for r in logd.values())
    assert saturation
    assert elapsed < 120


def test_9_analyzer_oracle_agreement():
    rng = np.random.default_rng(DEFAULT_SEED + 9)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(100):
        f = random_pl(rng)
        oracle, _ = grid_subadditive(f, 0.5, 2 * float(f.xs[-1]) + 2)
        mismatches += analyze(f, 0.5).is_subadditive != oracle
    counterexamples = 0
    for _ in range(100):
        f = random_concave(rng, integer=True)
        info = analyze(f)
        assert info.is_concave and info.vanishes_only_at_zero
        oracle, _ = grid_subadditive(f, 0.5, 2 * float(f.xs[-1]) + 2)
        counterexamples += not oracle
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and counterexamples == 0 and elapsed < 10
    record(9, "analyzer-oracle agreement", ok,
           f"{mismatches} mismatches, {counterexamples} concave counterexamples, {elapsed:.2f}s < 10s")
    assert mismatches == 0
    assert counterexamples == 0
    assert elapsed < 10


def test_10_product_demo():
    Ds = [P.linear(6), P.linear(4), P.linear(4)]
    t0 = time.perf_counter()
    sched = build_schedule_multi(Ds, 8)
    rng = np.random.default_rng(DEFAULT_SEED + 10)
    r = uniform_open(rng, 30.0, 10_000)
    excess = [verify_flattening(sched, D, r).max_excess for D in Ds]
    c = sched.c
    line = Lattice(1, 10)
    lhs = Transformed(SupProduct([line, line]), c).distance_matrix()
    rhs = SupProduct([Transformed(line, c), Transformed(line, c)]).distance_matrix()
    direct = Transformed(Lattice(2, 10), c).distance_matrix()
    gap = float(max(np.abs(lhs - rhs).max(), np.abs(direct - rhs).max()))
    elapsed = time.perf_counter() - t0
    ok = max(excess) <= 2 + EPS and gap <= EPS and elapsed < 30
    record(10, "shared c for product and factors", ok,
           f"excess {', '.join(f'{e:.4g}' for e in excess)} <= 2, |c o sup - sup c| = {gap:.2g}, "
           f"{elapsed:.2f}s < 30s")
    assert max(excess) <= 2 + EPS
    assert gap <= EPS
    assert elapsed < 30
