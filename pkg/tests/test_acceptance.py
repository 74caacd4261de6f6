"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""

import json
import time

import numpy as np
import pytest

from crashsim.brakes import AEB_STAGE, V2X_STAGE, brake_preset
from crashsim.causes import classify, theoretical_ttb_time
from crashsim.engine import Replay, run
from crashsim.generator import generate_corpus
from crashsim.geometry import OrientedBox, obb_overlap
from crashsim.harness import ExperimentConfig, run_experiment
from crashsim.kinematics import stopping_distance
from crashsim.perception import sensor_set
from crashsim.targeted import DESIGN_SENSOR_SET, DESIGNS, observed_label
from oracles import integrate_stopping_distance, point_oracle, separation

pytestmark = pytest.mark.acceptance
SETS = ("1V", "1R1V", "5R1V")


@pytest.fixture(scope="module")
def cv_corpus():
    return generate_corpus(200, "constant-velocity", 0)


def test_1_stopping_distance_oracle(criterion):
    t0 = time.perf_counter()
    v0, decel, mu, delay = np.meshgrid(np.arange(1.0, 31.0), [4.0, 9.0], np.round(np.arange(0.2, 1.01, 0.1), 1), [0.0, 0.12], indexing="ij")
    v0, decel, mu, delay = (a.ravel() for a in (v0, decel, mu, delay))
    closed = np.array([stopping_distance(v, d, AEB_STAGE.jerk, dl, m).distance for v, d, dl, m in zip(v0, decel, delay, mu)])
    ref = integrate_stopping_distance(v0, decel, AEB_STAGE.jerk, delay, mu, dt=1e-3)
    err = float(np.max(np.abs(closed - ref) / ref))
    elapsed = time.perf_counter() - t0
    ok = criterion(1, "stopping distance vs 1 ms integration", err < 1e-3 and elapsed < 5.0, f"{v0.size} points, max rel err {err:.2e}, {elapsed:.2f} s")
    assert ok


def _first_fire_tick(outcome):
    tr = outcome.trace
    t_fire = min(t for _, t in outcome.trigger_events)
    return int(round((t_fire - tr.t[0]) / 0.01))


def test_2_ttb_fidelity(criterion, cv_corpus):
    """Avoided runs triggered by TTB stop at the safety distance up to tick quantization."""
    checked = bad = 0
    ttb_limited = {}
    worst = 0.0
    for s in cv_corpus:
        rp = Replay(s)
        for name, thr in (("aeb", None), ("v2x", 2.0), ("v2x", 1.5), ("v2x", 1.25), ("two-stage", 2.0), ("two-stage", 1.5), ("two-stage", 1.25)):
            o = run(s, brake_preset(name, thr), "1R1V", replay=rp)
            if o.crashed:
                continue
            k = _first_fire_tick(o)
            stage = o.trigger_events[0][0]
            ttb_ok = o.trace.ledgers[stage]["ttb_elapsed"]
            limited = bool(ttb_ok[k]) and (k == 0 or not ttb_ok[k - 1])
            ttb_limited.setdefault((name, thr), []).append(limited)
            if not limited:
                continue
            gap = -s.opponent.width / 2 - (o.trace.ego_x[-1] + s.ego.length / 2)
            tol = o.trace.ego_v[k] * 0.01 + 0.05
            checked += 1
            worst = max(worst, abs(gap - 0.5))
            bad += abs(gap - 0.5) > tol + 1e-9
    full = all(all(ttb_limited[c]) and len(ttb_limited[c]) == len(cv_corpus) for c in (("aeb", None), ("v2x", 2.0), ("two-stage", 2.0)))
    ok = criterion(2, "TTB stop gap within 0.5 m +- quantization", bad == 0 and full and checked >= 600, f"{checked} TTB-triggered stops, {bad} outside, max |gap - 0.5| {worst:.3f} m")
    assert ok


def test_3_v2x_sensor_set_invariance(criterion):
    corpus = generate_corpus(150, "mixed", 5)
    cfg = ExperimentConfig(generator={"n": 150}, brake_types=("v2x",), classify=False)
    rep = run_experiment(cfg, corpus)
    same = all(len({rep.cell("v2x", ss, thr).avoided_ids for ss in SETS}) == 1 for thr in cfg.ttc_thresholds)
    aeb_rep = run_experiment(ExperimentConfig(generator={"n": 150}, brake_types=("aeb",), classify=False), corpus)
    aeb_differs = len({aeb_rep.cell("aeb", ss).avoided_ids for ss in SETS}) > 1
    pct = ", ".join(f"{thr:g} s {rep.cell('v2x', '1V', thr).avoided_pct:.1f}%" for thr in cfg.ttc_thresholds)
    ok = criterion(3, "V2X avoided sets identical across sensor sets", same and aeb_differs, pct)
    assert ok


def test_4_threshold_monotonicity(criterion, cv_corpus):
    avoided = {}
    for thr in (2.0, 1.5, 1.25):
        brake = brake_preset("v2x", thr)
        avoided[thr] = {s.id for s in cv_corpus if not run(s, brake, "1R1V", record_trace=False).crashed}
    chain = avoided[1.25] <= avoided[1.5] <= avoided[2.0]
    sizes = " >= ".join(str(len(avoided[t])) for t in (2.0, 1.5, 1.25))
    ok = criterion(4, "avoided(1.25 s) <= avoided(1.5 s) <= avoided(2 s)", chain and avoided[1.25] != avoided[2.0], sizes)
    assert ok


def test_5_two_stage_baseline(criterion, cv_corpus):
    v2x = sensor_set("1R1V").v2x
    brake = brake_preset("two-stage", 2.0)
    eligible = avoided = 0
    for s in cv_corpus:
        rp = Replay(s)
        det = rp.detections(v2x, rp.rec)
        t_star = theoretical_ttb_time(s, V2X_STAGE, rp)
        if s.friction_mu != 1.0 or t_star is None or not det.any() or rp.t[np.argmax(det)] > t_star:
            continue
        eligible += 1
        avoided += not run(s, brake, "1R1V", record_trace=False, replay=rp).crashed
    ok = criterion(5, "2-stage at 2 s avoids every eligible crossing", eligible >= 150 and avoided == eligible, f"{avoided}/{eligible}")
    assert ok


def test_6_known_friction_ablation(criterion):
    corpus = generate_corpus(100, "low-friction", 0)
    brake = brake_preset("aeb")
    stats = {}
    for known in (False, True):
        avoided = friction = 0
        for s in corpus:
            o = run(s, brake, "1R1V", known, record_trace=False)
            if not o.crashed:
                avoided += 1
            else:
                friction += classify(o, s, brake).stages[0].resolved_label.value == "Friction"
        stats[known] = (avoided, friction)
    ok = stats[True][0] > stats[False][0] and stats[True][1] == 0
    detail = f"avoided {stats[False][0]} -> {stats[True][0]}, Friction {stats[False][1]} -> {stats[True][1]}"
    assert criterion(6, "known friction raises AEB avoidance, Friction count 0", ok, detail)


def test_7_cause_classifier_oracle(criterion):
    n = 20
    misses = {}
    for key, design in DESIGNS.items():
        brake = brake_preset(design.brake, design.ttc_threshold)
        wrong = 0
        for s in generate_corpus(n, f"cause-targeted:{key}", 11):
            rp = Replay(s)
            o = run(s, brake, DESIGN_SENSOR_SET, record_trace=False, replay=rp)
            wrong += (observed_label(classify(o, s, brake, replay=rp)) if o.crashed else "avoided") != design.expected
        if wrong:
            misses[key] = wrong
    detail = f"{len(DESIGNS)} designs x {n}" + (f", misses {misses}" if misses else ", 100% agreement")
    assert criterion(7, "cause-targeted scenarios classified as designed", not misses, detail)


def test_8_collision_predicate(criterion):
    rng = np.random.default_rng(2024)
    checked = wrong = hits = 0
    while checked < 1000:
        a, b = (
            OrientedBox((rng.uniform(-3, 3), rng.uniform(-3, 3)), rng.uniform(-np.pi, np.pi), rng.uniform(0.5, 5), rng.uniform(0.5, 3))
            for _ in range(2)
        )
        if abs(separation(a, b)) < 1e-6:
            continue
        got = obb_overlap(a, b)
        wrong += got != point_oracle(a, b, n=800, rng=rng)
        hits += got
        checked += 1
    assert criterion(8, "OBB overlap agrees with point sampling", wrong == 0, f"{checked} pairs, {hits} overlapping, {wrong} disagreements")


@pytest.mark.slow
def test_9_determinism_and_performance(criterion):
    corpus = generate_corpus(1000, "mixed", 9)
    out, times = {}, {}
    for jobs in (1, 8):
        cfg = ExperimentConfig(generator={"n": 1000, "seed": 9}, sensor_sets=("1R1V",), ttc_thresholds=(2.0,), jobs=jobs)
        t0 = time.perf_counter()
        out[jobs] = json.dumps(run_experiment(cfg, corpus).to_dict())
        times[jobs] = time.perf_counter() - t0
    ok = out[1] == out[8] and max(times.values()) < 60.0
    detail = f"jobs=1 {times[1]:.1f} s, jobs=8 {times[8]:.1f} s, reports {'identical' if out[1] == out[8] else 'differ'}"
    assert criterion(9, "1000 x 3 sweep bit-identical across jobs, < 60 s", ok, detail)
