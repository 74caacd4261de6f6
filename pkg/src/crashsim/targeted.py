"""Scenario designs in which one named crash cause blocks the brake.

Each design fixes the brake it targets and draws the free parameters from ranges in
which the designed cause is the only blocker. Activation deadlines are estimated in
closed form for constant-velocity approaches so specs stay pure functions of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .brakes import AEB_STAGE, V2X_STAGE, BrakeStageConfig
from .causes import SHORT_LABELS, CrashCause, pair_label
from .generator import CAR_DIMS, Accelerate, CornerObstruction, CrossingSpec, GeneratorError, Turn, front_crash_window
from .kinematics import stopping_distance
from .perception import sensor_set

DESIGN_SENSOR_SET = "1R1V"


@dataclass(frozen=True)
class Design:
    key: str
    brake: str
    ttc_threshold: Optional[float]
    expected: str  # resolved label (single stage) or pair label "AEB & V2X"
    sampler: Callable


def deadline(stage: BrakeStageConfig, spec_ego_speed: float, ego_arrival: float, ego_dims=CAR_DIMS, opp_width: float = CAR_DIMS[1]) -> float:
    """Closed-form activation deadline of ``stage`` for a constant-speed ego (90 degrees)."""
    d = stopping_distance(spec_ego_speed, stage.max_decel, stage.jerk, stage.application_delay, stage.mu_assumed).distance
    return ego_arrival - (d + stage.safety_dist + ego_dims[0] / 2 + opp_width / 2) / spec_ego_speed


# opponent enters the ego corridor shortly before the ego front reaches it, so a late
# brake that merely delays the ego still ends in contact
LATE = (0.75, 0.95)


def _sync(rng, v_e, v_o, lo_frac=0.2, hi_frac=0.8) -> float:
    lo, hi = front_crash_window(v_e, v_o)
    return lo + (hi - lo) * rng.uniform(lo_frac, hi_frac)


def _spec(key: str, design_brake: str, ttc, expected: str, seed: int, i: int, **kw) -> CrossingSpec:
    meta = {"profile": "cause-targeted", "designed_cause": expected, "designed_brake": design_brake, "designed_sensor_set": DESIGN_SENSOR_SET}
    if ttc is not None:
        meta["designed_ttc"] = repr(float(ttc))
    return CrossingSpec(seed=seed, id=f"ct-{key}-{seed}-{i:05d}", meta=meta, **kw)


def _occlusion(v_e: float, v_o: float, sync: float, t_clear: float, frac: float, ego_arrival: float = 4.0) -> CornerObstruction:
    """Corner square whose edge just stops blocking the onboard line of sight at ``t_clear``.

    ``frac`` places the corner's ego-side setback as a fraction of the opponent distance.

    With the sensor ``a`` m and the opponent's recognition point ``b`` m from the crossing,
    the sight line passes the near corner once setback_opp/a + setback_ego/b > 1.
    """
    mount = sensor_set(DESIGN_SENSOR_SET).onboard.mount_from_front
    a = v_e * (ego_arrival - t_clear) - (CAR_DIMS[0] / 2 - mount)
    b = v_o * (ego_arrival + sync - t_clear)
    setback_ego = max(frac * b, 1.2)
    if a <= 0 or b <= setback_ego:
        raise GeneratorError("occlusion design infeasible for these speeds")
    so = a * (1 - setback_ego / b)
    return CornerObstruction(setback_ego=setback_ego, setback_opp=so, size=12.0)


def _detection(rng, i, seed, key="Detection", brake="aeb", ttc=None, expected="Detection", v_range=(6.0, 10.0), lag=(0.1, 0.3), sync_frac=(0.65, 0.95), opp_frac=(0.6, 0.85)):
    v_e = rng.uniform(*v_range)
    v_o = rng.uniform(*opp_frac) * v_e
    # late opponent arrival keeps it far enough from the corner for a sight line to open
    sync = _sync(rng, v_e, v_o, *sync_frac)
    t_star = deadline(AEB_STAGE, v_e, 4.0)
    t_clear = t_star + rng.uniform(*lag)
    ob = _occlusion(v_e, v_o, sync, t_clear, rng.uniform(0.35, 0.6))
    return _spec(key, brake, ttc, expected, seed, i, ego_speed=v_e, opp_speed=v_o, approach_sync=sync, obstruction=ob)


def _tte(rng, i, seed):
    v_e = rng.uniform(15.0, 20.0)
    v_o = rng.uniform(0.5, 0.85) * v_e
    return _spec("TTE", "aeb", None, "TTE", seed, i, ego_speed=v_e, opp_speed=v_o, approach_sync=_sync(rng, v_e, v_o, *LATE), duration=6.0)


def _ttc(rng, i, seed):
    v_e = rng.uniform(10.0, 14.0)
    v_o = rng.uniform(0.5, 0.85) * v_e
    return _spec("TTC", "v2x", 1.25, "TTC", seed, i, ego_speed=v_e, opp_speed=v_o, approach_sync=_sync(rng, v_e, v_o, *LATE))


def _ego_accel(rng, i, seed, key="EgoAcceleration", brake="aeb", ttc=None, expected="EgoAcceleration"):
    v0 = rng.uniform(5.0, 8.0)
    a = rng.uniform(1.5, 2.5)
    v_arr = v0 + a * 4.0
    v_o = rng.uniform(0.5, 0.8) * v_arr
    sync = _sync(rng, v_arr, v_o)
    return _spec(key, brake, ttc, expected, seed, i, ego_speed=v0, opp_speed=v_o, approach_sync=sync, ego_behavior=Accelerate(a, 0.0))


def _friction(rng, i, seed, key="Friction", brake="aeb", ttc=None, expected="Friction", v_range=(6.0, 10.0)):
    v_e = rng.uniform(*v_range)
    v_o = rng.uniform(0.5, 0.85) * v_e
    return _spec(key, brake, ttc, expected, seed, i, ego_speed=v_e, opp_speed=v_o, approach_sync=_sync(rng, v_e, v_o, *LATE), friction_mu=0.3)


def _left_turn(rng, turn_end: float, radius_range=(8.0, 12.0), min_yaw: float = 0.0):
    """Oncoming opponent turning left across the ego path, straight again from ``turn_end``."""
    v_o = rng.uniform(5.0, 7.0)
    radius = rng.uniform(*radius_range)
    yaw = max(v_o / radius, min_yaw)
    t_turn = (math.pi / 2) / yaw
    # the opponent reaches the crossing heading -y with its front just past the ego lane
    sync = rng.uniform(-0.1, 0.15)
    return v_o, sync, Turn(yaw, turn_end - t_turn, angle=math.pi / 2)


def _steering(rng, i, seed, key="Steering", brake="v2x", ttc=2.0, expected="Steering", mu=1.0):
    if brake == "two-stage":
        # still turning at the V2X deadline, straight shortly before the AEB deadline
        v_e = rng.uniform(10.0, 12.0)
        turn_end = deadline(AEB_STAGE, v_e, 4.0) - rng.uniform(0.15, 0.25)
        # at least 0.7 rad of heading change left at the V2X deadline
        min_yaw = 0.7 / (turn_end - deadline(V2X_STAGE, v_e, 4.0))
        v_o, sync, beh = _left_turn(rng, turn_end, (6.0, 8.0), min_yaw)
    else:
        v_e = rng.uniform(8.0, 12.0)
        v_o, sync, beh = _left_turn(rng, 4.0 - rng.uniform(0.3, 0.6))
    return _spec(key, brake, ttc, expected, seed, i, ego_speed=v_e, opp_speed=v_o, crossing_angle=math.pi, approach_sync=sync, opp_behavior=beh, friction_mu=mu)


def _opp_accel(rng, i, seed):
    v_e = rng.uniform(8.0, 12.0)
    v0 = rng.uniform(1.5, 3.0)
    a = rng.uniform(2.5, 3.5)
    t_star = deadline(V2X_STAGE, v_e, 4.0)
    t_a = t_star - rng.uniform(0.0, 0.3)
    # sync from the opponent's speed at the crossing, so the unbraked run collides
    t_arr_guess = 4.0
    v_arr = v0 + a * max(t_arr_guess - t_a, 0.0)
    sync = _sync(rng, v_e, v_arr, *LATE)
    return _spec("OpponentAcceleration", "v2x", 2.0, "OpponentAcceleration", seed, i, ego_speed=v_e, opp_speed=v0, approach_sync=sync, opp_behavior=Accelerate(a, t_a))


def _pair_ego_accel(rng, i, seed):
    return _ego_accel(rng, i, seed, key="EgoAx2", brake="two-stage", ttc=2.0, expected=pair_label(CrashCause.EGO_ACCELERATION, CrashCause.EGO_ACCELERATION))


def _pair_fri_ttc(rng, i, seed):
    return _friction(rng, i, seed, key="FriTTC", brake="two-stage", ttc=1.25, expected=pair_label(CrashCause.FRICTION, CrashCause.TTC), v_range=(9.0, 11.0))


def _pair_fri_ste(rng, i, seed):
    return _steering(rng, i, seed, key="FriSte", brake="two-stage", ttc=2.0, expected=pair_label(CrashCause.FRICTION, CrashCause.STEERING), mu=0.3)


def _pair_det_ttc(rng, i, seed):
    return _detection(rng, i, seed, key="DetTTC", brake="two-stage", ttc=1.25, expected=pair_label(CrashCause.DETECTION, CrashCause.TTC), v_range=(11.0, 12.5), lag=(0.6, 0.9), sync_frac=(0.85, 0.97), opp_frac=(0.45, 0.6))


DESIGNS = {
    "Detection": Design("Detection", "aeb", None, "Detection", _detection),
    "TTE": Design("TTE", "aeb", None, "TTE", _tte),
    "TTC": Design("TTC", "v2x", 1.25, "TTC", _ttc),
    "EgoAcceleration": Design("EgoAcceleration", "aeb", None, "EgoAcceleration", _ego_accel),
    "Friction": Design("Friction", "aeb", None, "Friction", _friction),
    "Steering": Design("Steering", "v2x", 2.0, "Steering", _steering),
    "OpponentAcceleration": Design("OpponentAcceleration", "v2x", 2.0, "OpponentAcceleration", _opp_accel),
    "Ego a x2": Design("Ego a x2", "two-stage", 2.0, "Ego a x2", _pair_ego_accel),
    "Fri & TTC": Design("Fri & TTC", "two-stage", 1.25, "Fri & TTC", _pair_fri_ttc),
    "Fri & Ste": Design("Fri & Ste", "two-stage", 2.0, "Fri & Ste", _pair_fri_ste),
    "Det & TTC": Design("Det & TTC", "two-stage", 1.25, "Det & TTC", _pair_det_ttc),
}
CAUSE_DESIGNS = tuple(k for k in DESIGNS if " " not in k)
PAIR_DESIGNS = tuple(k for k in DESIGNS if " " in k)


def resolve_design(name: str) -> str:
    """Map a cause name (``Friction``, ``fri``) or pair label (``Fri & TTC``) to a design key."""
    key = name.strip()
    if key in DESIGNS:
        return key
    norm = key.replace(" ", "").lower()
    for k in DESIGNS:
        if k.replace(" ", "").lower() == norm:
            return k
    try:
        return CrashCause.parse(key).value if CrashCause.parse(key).value in DESIGNS else _unknown(name)
    except ValueError:
        return _unknown(name)


def _unknown(name):
    raise GeneratorError(f"unknown cause design {name!r}; choose from {sorted(DESIGNS)}")


def observed_label(report) -> str:
    """Label of a :class:`CrashCauseReport` in the form used by ``Design.expected``."""
    if report.resolved_pair is None:
        return report.stages[0].resolved_label.value
    return report.label


def sample_design(key: str, rng: np.random.Generator, i: int, seed: int) -> CrossingSpec:
    return DESIGNS[key].sampler(rng, i, seed)


__all__ = ["CAUSE_DESIGNS", "DESIGNS", "Design", "PAIR_DESIGNS", "SHORT_LABELS", "deadline", "observed_label", "resolve_design", "sample_design"]
