"""Crash-cause classification for brake stages that failed to avoid a crash.

Every stage is analysed on the unbraked replay. The reference instant ``t_star`` is the
latest tick at which a forced activation of the stage (all trigger conditions ignored)
still stops the ego short of the opponent by the safety distance. Each trigger condition
gets the first time at or after ``t_star`` at which it holds; the condition that comes
latest is the primary trigger cause. Friction, steering and opponent
acceleration are reported as flags and used when no trigger condition was late.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .brakes import AEB, V2X_PARTIAL, BrakeConfig, BrakeStageConfig, stage_ledger_batch
from .engine import Replay, SimulationOutcome, _stage_avail, resolve_brake
from .geometry import obb_overlap_batch
from .kinematics import G
from .perception import SensorSet, sensor_set
from .scenario import DT, Scenario


class CrashCause(str, enum.Enum):
    DETECTION = "Detection"
    TTE = "TTE"
    TTC = "TTC"
    EGO_ACCELERATION = "EgoAcceleration"
    FRICTION = "Friction"
    STEERING = "Steering"
    OPPONENT_ACCELERATION = "OpponentAcceleration"
    NOT_CLASSIFIED = "NotClassified"

    @classmethod
    def parse(cls, name: str) -> "CrashCause":
        key = name.replace(" ", "").replace("_", "").lower()
        for c in cls:
            if c.value.lower() == key or c.name.replace("_", "").lower() == key or SHORT_LABELS[c].replace(" ", "").lower() == key:
                return c
        raise ValueError(f"unknown crash cause {name!r}")


TRIGGER_CAUSES = (CrashCause.DETECTION, CrashCause.TTE, CrashCause.TTC, CrashCause.EGO_ACCELERATION)
SHORT_LABELS = {
    CrashCause.DETECTION: "Det",
    CrashCause.TTE: "TTE",
    CrashCause.TTC: "TTC",
    CrashCause.EGO_ACCELERATION: "Ego a",
    CrashCause.FRICTION: "Fri",
    CrashCause.STEERING: "Ste",
    CrashCause.OPPONENT_ACCELERATION: "Opp a",
    CrashCause.NOT_CLASSIFIED: "n.c.",
}


@dataclass(frozen=True)
class CauseConfig:
    steering_threshold_deg: float = 10.0
    opp_accel_threshold: float = 1.0
    # fallback order when no trigger condition was late
    precedence: tuple = (CrashCause.FRICTION, CrashCause.STEERING, CrashCause.OPPONENT_ACCELERATION)


@dataclass(frozen=True)
class StageCause:
    stage: str
    t_star: Optional[float]  # None: not avoidable even when braking at the first tick
    t_crash: float
    primary_trigger_cause: Optional[CrashCause]
    friction_flag: bool
    steering_flag: bool
    opp_accel_flag: bool
    resolved_label: CrashCause
    condition_times: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "stage": self.stage,
            "t_star": self.t_star,
            "t_crash": self.t_crash,
            "primary_trigger_cause": self.primary_trigger_cause.value if self.primary_trigger_cause else None,
            "friction_flag": self.friction_flag,
            "steering_flag": self.steering_flag,
            "opp_accel_flag": self.opp_accel_flag,
            "resolved_label": self.resolved_label.value,
            "condition_times": {k: (None if math.isinf(v) else v) for k, v in self.condition_times.items()},
        }


@dataclass(frozen=True)
class CrashCauseReport:
    scenario_id: str
    brake: str
    sensor_set: str
    ttc_threshold: Optional[float]
    stages: tuple[StageCause, ...]

    def stage(self, name: str) -> StageCause:
        for s in self.stages:
            if s.stage == name:
                return s
        raise KeyError(name)

    @property
    def resolved_pair(self) -> Optional[tuple[CrashCause, CrashCause]]:
        """(AEB cause, V2X cause) for the cascade, None for single-stage brakes."""
        if len(self.stages) < 2:
            return None
        return self.stage(AEB).resolved_label, self.stage(V2X_PARTIAL).resolved_label

    @property
    def label(self) -> str:
        pair = self.resolved_pair
        if pair is None:
            return SHORT_LABELS[self.stages[0].resolved_label]
        return pair_label(*pair)

    def to_record(self) -> dict:
        pair = self.resolved_pair
        return {
            "scenario_id": self.scenario_id,
            "brake": self.brake,
            "sensor_set": self.sensor_set,
            "ttc_threshold": self.ttc_threshold,
            "result": "crash",
            "stage_causes": [s.to_record() for s in self.stages],
            "resolved_pair": [c.value for c in pair] if pair else None,
            "label": self.label,
        }


def pair_label(aeb: CrashCause, v2x: CrashCause) -> str:
    if aeb == v2x:
        return f"{SHORT_LABELS[aeb]} x2"
    return f"{SHORT_LABELS[aeb]} & {SHORT_LABELS[v2x]}"


def _forced_avoid(rp: Replay, cfg: BrakeStageConfig, k: int) -> bool:
    """Forced activation at tick ``k`` keeps the ego clear of the safety-inflated opponent.

    Clear means no contact with the inflated opponent at any tick and a final ego pose
    outside the opponent's whole inflated swept path, i.e. the ego stops short of the
    tube as the brake's own deadline intends.
    """
    t_apply = float(rp.t[k]) + cfg.application_delay
    ego = rp.ego_trajectory([(t_apply, cfg.max_decel, cfg.jerk)], cfg.mu_assumed)
    m = 2 * cfg.safety_dist
    ol, ow = rp.opp_dims[0] + m, rp.opp_dims[1] + m
    ox, oy, oh = rp.opp["x"], rp.opp["y"], rp.opp["h"]
    if obb_overlap_batch(ego["x"], ego["y"], ego["h"], *rp.ego_dims, ox, oy, oh, ol, ow).any():
        return False
    n = ox.size
    ex, ey, eh = (np.full(n, ego[c][-1]) for c in ("x", "y", "h"))
    return not obb_overlap_batch(ex, ey, eh, *rp.ego_dims, ox, oy, oh, ol, ow).any()


def unbraked_crash_index(rp: Replay) -> Optional[int]:
    hits = np.flatnonzero(rp.collisions(rp.rec))
    return int(hits[0]) if hits.size else None


def theoretical_ttb_time(scenario: Scenario, stage_cfg: BrakeStageConfig, replay: Optional[Replay] = None) -> Optional[float]:
    """Latest tick at which forcing ``stage_cfg`` on still avoids the crash, or None.

    The counterfactual brakes with the stage's assumed friction, so the result is the
    activation deadline the function itself could have met. Bisection over the ticks
    before the unbraked crash; earlier activation is assumed never to do worse.
    """
    rp = replay or Replay(scenario)
    k_crash = unbraked_crash_index(rp)
    if k_crash is None:
        raise ValueError("the unbraked replay does not crash")
    if not _forced_avoid(rp, stage_cfg, 0):
        return None
    lo, hi = 0, k_crash
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _forced_avoid(rp, stage_cfg, mid):
            lo = mid
        else:
            hi = mid
    return float(rp.t[lo])


def _ready_time(t: np.ndarray, ok: np.ndarray, t_ref: float) -> float:
    """First time at or after ``t_ref`` at which ``ok`` holds (inf if never)."""
    i0 = int(np.searchsorted(t, t_ref - 1e-9))
    idx = np.flatnonzero(ok[i0:])
    return float(t[i0 + idx[0]]) if idx.size else math.inf


def _heading_range(h: np.ndarray) -> float:
    if h.size == 0:
        return 0.0
    u = np.unwrap(h)
    return float(u.max() - u.min())


def classify_stage(
    rp: Replay,
    stage_cfg: BrakeStageConfig,
    sensors: SensorSet,
    mu_actual: float,
    t_star: Optional[float],
    cause_cfg: CauseConfig = CauseConfig(),
) -> StageCause:
    """Cause fields for one stage from the unbraked replay."""
    k_crash = unbraked_crash_index(rp)
    if k_crash is None:
        raise ValueError("the unbraked replay does not crash")
    ego = rp.rec
    avail = {ch: rp.detections(sensors.channel(ch), ego) for ch in ("onboard", "v2x") if ch in _needed(stage_cfg)}
    detected = _stage_avail(stage_cfg, avail)
    led = stage_ledger_batch(stage_cfg, detected, ego, rp.ego_dims, rp.opp, rp.opp_dims, mask=False)
    sl = slice(0, k_crash)
    t = rp.t[sl]
    pred = led["crash_predicted"][sl]
    conds = {
        CrashCause.DETECTION: detected[sl],
        CrashCause.TTE: ~pred | led["tte_elapsed"][sl],
        CrashCause.TTC: ~pred | led["below_ttc_threshold"][sl],
        CrashCause.EGO_ACCELERATION: led["no_ego_accel"][sl],
    }
    if not stage_cfg.use_tte_condition:
        del conds[CrashCause.TTE]
    t_crash = float(rp.t[k_crash])
    t_ref = t_star if t_star is not None else float(rp.t[0])
    times = {c.value: _ready_time(t, ok, t_ref) for c, ok in conds.items()}
    primary = None
    if t_star is not None:
        best = 0.0
        for c in TRIGGER_CAUSES:
            tc = times.get(c.value)
            if tc is None:
                continue
            lateness = tc - t_star
            if lateness > 1e-9 and lateness > best + 1e-9:
                primary, best = c, lateness
    # friction: fired on time by its own estimate, yet the road could not deliver the command
    fire = led["fire"][sl] & detected[sl]
    first_fire = float(t[np.argmax(fire)]) if fire.any() else math.inf
    reduced = min(stage_cfg.max_decel, stage_cfg.mu_assumed * G) > min(stage_cfg.max_decel, mu_actual * G) + 1e-12
    friction = bool(reduced and t_star is not None and first_fire <= t_star + DT + 1e-9)
    # steering: heading change of either vehicle inside the admissible activation window
    w0 = min(t_ref, t_crash - stage_cfg.ttc_threshold)
    win = (rp.t >= w0 - 1e-9) & (rp.t <= t_crash + 1e-9)
    limit = math.radians(cause_cfg.steering_threshold_deg)
    steering = _heading_range(ego["h"][win]) > limit or _heading_range(rp.opp["h"][win]) > limit
    opp_acc = bool(np.any((np.abs(rp.opp["a"][sl]) > cause_cfg.opp_accel_threshold) & detected[sl]))
    flags = {CrashCause.FRICTION: friction, CrashCause.STEERING: steering, CrashCause.OPPONENT_ACCELERATION: opp_acc}
    if primary is not None:
        resolved = primary
    else:
        resolved = next((c for c in cause_cfg.precedence if flags[c]), CrashCause.NOT_CLASSIFIED)
    return StageCause(
        stage=stage_cfg.name,
        t_star=t_star,
        t_crash=t_crash,
        primary_trigger_cause=primary,
        friction_flag=friction,
        steering_flag=bool(steering),
        opp_accel_flag=opp_acc,
        resolved_label=resolved,
        condition_times=times,
    )


def _needed(cfg: BrakeStageConfig) -> set:
    return {cfg.source_channel} | ({"onboard"} if cfg.fuse_onboard else set())


def classify(
    outcome: SimulationOutcome,
    scenario: Scenario,
    brake: BrakeConfig,
    cause_cfg: CauseConfig = CauseConfig(),
    replay: Optional[Replay] = None,
    sensors: Optional[SensorSet] = None,
) -> CrashCauseReport:
    """Classify a crashed ``outcome`` of ``brake`` on ``scenario`` stage by stage.

    ``sensors`` defaults to the named set recorded in the outcome.
    """
    if not outcome.crashed:
        raise ValueError("classify needs a crash outcome")
    rp = replay or Replay(scenario)
    cfg = resolve_brake(brake, scenario, outcome.friction_known)
    sensors = sensors or sensor_set(outcome.sensor_set)
    if unbraked_crash_index(rp) is None:
        # the brake itself turned a non-crash into a crash; nothing in the taxonomy applies
        stages = tuple(
            StageCause(st.name, None, outcome.t_end, None, False, False, False, CrashCause.NOT_CLASSIFIED) for st in cfg.stages
        )
    else:
        stages = tuple(
            classify_stage(rp, st, sensors, scenario.friction_mu, theoretical_ttb_time(scenario, st, rp), cause_cfg) for st in cfg.stages
        )
    return CrashCauseReport(outcome.scenario_id, outcome.brake, outcome.sensor_set, outcome.ttc_threshold, stages)


def cause_counts(labels: Sequence[CrashCause]) -> dict:
    out = {c.value: 0 for c in CrashCause}
    for c in labels:
        out[c.value] += 1
    return out
