import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashsim.brakes import AEB_STAGE, V2X_STAGE, brake_preset
from crashsim.causes import (
    CauseConfig,
    CrashCause,
    classify,
    pair_label,
    theoretical_ttb_time,
)
from crashsim.engine import Replay, run
from crashsim.generator import CrossingSpec, Turn, front_crash_window, generate, generate_corpus
from crashsim.scenario import DT
from crashsim.targeted import CAUSE_DESIGNS, DESIGN_SENSOR_SET, DESIGNS, PAIR_DESIGNS, deadline, observed_label, resolve_design


@pytest.mark.parametrize("ve,vo,sync", [(10.0, 7.5, 0.0), (8.0, 5.0, -0.2), (15.0, 10.0, 0.0), (6.0, 4.0, -0.1)])
@pytest.mark.parametrize("stage", [AEB_STAGE, V2X_STAGE], ids=["aeb", "v2x"])
def test_t_star_matches_closed_form_deadline(ve, vo, sync, stage):
    # stopping short is the only escape here, so t* is the last tick before the deadline
    t_star = theoretical_ttb_time(generate(CrossingSpec(ve, vo, approach_sync=sync)), stage)
    t_closed = deadline(stage, ve, 4.0)
    assert t_closed - DT - 1e-6 <= t_star <= t_closed + 1e-6


@given(st.floats(5.0, 20.0), st.floats(3.0, 15.0), st.floats(0.2, 0.8), st.sampled_from([AEB_STAGE, V2X_STAGE]))
@settings(max_examples=25)
def test_t_star_never_before_stopping_deadline(ve, vo, frac, stage):
    # a brake that lets the opponent clear the corridor may start later than a full stop needs
    lo, hi = front_crash_window(ve, vo)
    s = generate(CrossingSpec(ve, vo, approach_sync=lo + frac * (hi - lo)))
    t_star = theoretical_ttb_time(s, stage)
    t_closed = deadline(stage, ve, 4.0)
    if t_star is None:
        assert t_closed < DT
    else:
        assert t_star >= t_closed - DT - 1e-6


def test_unavoidable_gives_no_t_star():
    s = generate(CrossingSpec(30.0, 10.0, ego_arrival=1.0, duration=3.0))
    assert theoretical_ttb_time(s, V2X_STAGE) is None
    o = run(s, brake_preset("v2x"), record_trace=False)
    stage = classify(o, s, brake_preset("v2x")).stages[0]
    assert stage.t_star is None and stage.primary_trigger_cause is None


def test_t_star_requires_unbraked_crash():
    s = generate(CrossingSpec(10.0, 7.5, approach_sync=10.0, duration=6.0))
    with pytest.raises(ValueError):
        theoretical_ttb_time(s, AEB_STAGE)


def test_classify_rejects_avoided_outcome():
    s = generate(CrossingSpec(10.0, 7.5))
    o = run(s, brake_preset("two-stage"), record_trace=False)
    assert not o.crashed
    with pytest.raises(ValueError):
        classify(o, s, brake_preset("two-stage"))


def _classified(key, n=6, seed=5):
    d = DESIGNS[key]
    brake = brake_preset(d.brake, d.ttc_threshold)
    out = []
    for s in generate_corpus(n, f"cause-targeted:{key}", seed):
        rp = Replay(s)
        o = run(s, brake, DESIGN_SENSOR_SET, record_trace=False, replay=rp)
        assert o.crashed, s.id
        out.append((s, o, classify(o, s, brake, replay=rp)))
    return d, out


@pytest.mark.parametrize("key", CAUSE_DESIGNS + PAIR_DESIGNS)
def test_designs_classify_as_designed(key):
    d, rows = _classified(key)
    assert [observed_label(r) for _, _, r in rows] == [d.expected] * len(rows)


def test_trigger_cause_is_latest_condition():
    _, rows = _classified("TTE")
    for _, _, rep in rows:
        sc = rep.stages[0]
        late = {k: v - sc.t_star for k, v in sc.condition_times.items()}
        assert max(late, key=late.get) == "TTE"
        assert sc.primary_trigger_cause is CrashCause.TTE


def test_known_friction_clears_friction_flag():
    brake = brake_preset("aeb")
    for s in generate_corpus(6, "cause-targeted:Friction", 5):
        unknown = run(s, brake, DESIGN_SENSOR_SET, record_trace=False)
        assert classify(unknown, s, brake).stages[0].friction_flag
        known = run(s, brake, DESIGN_SENSOR_SET, friction_known=True, record_trace=False)
        if known.crashed:
            assert not classify(known, s, brake).stages[0].friction_flag


def test_steering_threshold_is_configurable():
    _, rows = _classified("Steering", n=3)
    brake = brake_preset("v2x", 2.0)
    for s, o, rep in rows:
        assert rep.stages[0].steering_flag
        loose = classify(o, s, brake, CauseConfig(steering_threshold_deg=179.0))
        assert not loose.stages[0].steering_flag
        assert loose.stages[0].resolved_label is not CrashCause.STEERING


def test_not_classified_when_nothing_applies():
    # straight, constant, full friction, and too close to stop: no t*, no flags
    s = generate(CrossingSpec(30.0, 10.0, ego_arrival=1.0, duration=3.0))
    o = run(s, brake_preset("aeb"), record_trace=False)
    assert classify(o, s, brake_preset("aeb")).stages[0].resolved_label is CrashCause.NOT_CLASSIFIED


def test_crash_without_unbraked_crash_is_not_classified():
    # a crash record on an approach whose unbraked replay is clear has no cause in the taxonomy
    s = generate(CrossingSpec(10.0, 7.5, approach_sync=10.0, duration=6.0))
    o = replace(run(s, brake_preset("two-stage"), record_trace=False), result="crash")
    rep = classify(o, s, brake_preset("two-stage"))
    assert [sc.resolved_label for sc in rep.stages] == [CrashCause.NOT_CLASSIFIED] * 2
    assert rep.label == "n.c. x2"


def test_pair_labels():
    assert pair_label(CrashCause.EGO_ACCELERATION, CrashCause.EGO_ACCELERATION) == "Ego a x2"
    assert pair_label(CrashCause.FRICTION, CrashCause.TTC) == "Fri & TTC"
    assert pair_label(CrashCause.DETECTION, CrashCause.TTC) == "Det & TTC"
    assert CrashCause.parse("fri") is CrashCause.FRICTION
    assert CrashCause.parse("Opponent_Acceleration") is CrashCause.OPPONENT_ACCELERATION
    assert resolve_design("fri & ttc") == "Fri & TTC" and resolve_design("friction") == "Friction"


def test_two_stage_report_orders_aeb_first():
    _, rows = _classified("Fri & TTC", n=2)
    for _, _, rep in rows:
        assert [sc.stage for sc in rep.stages] == ["AEB", "V2X_PARTIAL"] or rep.resolved_pair[0] is CrashCause.FRICTION
        rec = rep.to_record()
        assert rec["resolved_pair"] == ["Friction", "TTC"] and rec["label"] == "Fri & TTC"


def test_classify_is_pure():
    s, o, rep = _classified("Detection", n=1)[1][0]
    again = classify(o, s, brake_preset("aeb"))
    assert again == rep
    assert again.to_record() == rep.to_record()
    for v in rep.to_record()["stage_causes"][0]["condition_times"].values():
        assert v is None or math.isfinite(v)
