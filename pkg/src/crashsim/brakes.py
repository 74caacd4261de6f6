"""Brake stage parametrisation, per-tick trigger evaluation and cascade composition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .kinematics import stopping_distance, stopping_distance_batch
from .perception import DetectionState
from .prediction import HORIZON, CrashPrediction, NO_CRASH, evasion_time, predict_crash, predict_crash_batch, time_to_brake

AEB = "AEB"
V2X_PARTIAL = "V2X_PARTIAL"


@dataclass(frozen=True)
class BrakeStageConfig:
    name: str
    source_channel: str
    max_decel: float
    ttc_threshold: float
    use_tte_condition: bool
    jerk: float = 45.0
    application_delay: float = 0.12
    ego_accel_threshold: float = 1.0
    safety_dist: float = 0.5
    mu_assumed: float = 1.0
    a_lat_max: float = 5.0
    tte_margin: float = 0.5
    horizon: float = HORIZON
    fuse_onboard: bool = False  # V2X stage may also use onboard detections

    def __post_init__(self):
        if self.ttc_threshold <= 0:
            raise ValueError("ttc_threshold must be > 0")
        if self.max_decel <= 0 or self.jerk <= 0:
            raise ValueError("max_decel and jerk must be > 0")
        if self.source_channel not in ("onboard", "v2x"):
            raise ValueError(f"unknown source channel {self.source_channel!r}")
        if self.mu_assumed <= 0:
            raise ValueError("mu_assumed must be > 0")


AEB_STAGE = BrakeStageConfig(AEB, "onboard", max_decel=9.0, ttc_threshold=1.25, use_tte_condition=True)
V2X_STAGE = BrakeStageConfig(V2X_PARTIAL, "v2x", max_decel=4.0, ttc_threshold=2.0, use_tte_condition=False)


@dataclass(frozen=True)
class BrakeConfig:
    """A named cascade: stages in order (stage 1 first)."""

    name: str
    stages: tuple[BrakeStageConfig, ...]

    def __post_init__(self):
        if not 1 <= len(self.stages) <= 2:
            raise ValueError("a cascade has one or two stages")

    def stage(self, name: str) -> BrakeStageConfig:
        for st in self.stages:
            if st.name == name:
                return st
        raise KeyError(name)

    @property
    def channels(self) -> set[str]:
        out = set()
        for st in self.stages:
            out.add(st.source_channel)
            if st.fuse_onboard:
                out.add("onboard")
        return out

    def with_mu(self, mu: float) -> "BrakeConfig":
        return replace(self, stages=tuple(replace(st, mu_assumed=mu) for st in self.stages))

    @property
    def ttc_threshold(self) -> float:
        """Threshold of the V2X stage when present (the swept parameter), else the first stage's."""
        for st in self.stages:
            if st.name == V2X_PARTIAL:
                return st.ttc_threshold
        return self.stages[0].ttc_threshold


BRAKE_TYPES = ("aeb", "v2x", "two-stage")
_STAGE_FIELDS = {f.name for f in fields(BrakeStageConfig)}


def apply_overrides(stage: BrakeStageConfig, overrides: Optional[Mapping]) -> BrakeStageConfig:
    """Apply ``{"field": v}`` or ``{"AEB.field": v}`` style overrides to one stage."""
    if not overrides:
        return stage
    changes = {}
    for key, value in overrides.items():
        target, _, name = key.rpartition(".")
        if target and target.upper() not in (stage.name, stage.name.split("_")[0]):
            continue
        if name not in _STAGE_FIELDS or name == "name":
            raise ValueError(f"invalid override {key!r}")
        changes[name] = value
    return replace(stage, **changes)


def brake_preset(name: str, ttc_threshold: Optional[float] = None, overrides: Optional[Mapping] = None) -> BrakeConfig:
    """``aeb``, ``v2x`` or ``two-stage``; ``ttc_threshold`` sets the V2X stage window.

    The AEB keeps its fixed window regardless of ``ttc_threshold``.
    """
    key = name.lower().replace("_", "-")
    v2x = V2X_STAGE if ttc_threshold is None else replace(V2X_STAGE, ttc_threshold=float(ttc_threshold))
    v2x = apply_overrides(v2x, overrides)
    aeb = apply_overrides(AEB_STAGE, overrides)
    if key == "aeb":
        return BrakeConfig("aeb", (aeb,))
    if key == "v2x":
        return BrakeConfig("v2x", (v2x,))
    if key in ("two-stage", "2-stage", "twostage"):
        return BrakeConfig("two-stage", (v2x, aeb))
    raise ValueError(f"unknown brake type {name!r}; choose from {BRAKE_TYPES}")


@dataclass(frozen=True)
class ConditionLedger:
    detected: bool = False
    crash_predicted: bool = False
    below_ttc_threshold: bool = False
    ttb_elapsed: bool = False
    no_ego_accel: bool = False
    tte_elapsed: Optional[bool] = None  # None when the stage has no TTE condition
    ttc: float = math.nan
    ttc_entry: float = math.nan
    ttb: float = math.nan
    tte: float = math.nan

    def all_true(self) -> bool:
        conds = [self.detected, self.crash_predicted, self.below_ttc_threshold, self.ttb_elapsed, self.no_ego_accel]
        if self.tte_elapsed is not None:
            conds.append(self.tte_elapsed)
        return all(conds)


@dataclass(frozen=True)
class TriggerDecision:
    stage: str
    fire: bool
    t: float
    ledger: ConditionLedger


def _stage_detection(cfg: BrakeStageConfig, detection) -> tuple[Mapping, list]:
    states = detection if isinstance(detection, Mapping) else {cfg.source_channel: detection}
    kinds = [cfg.source_channel] + (["onboard"] if cfg.fuse_onboard and cfg.source_channel != "onboard" else [])
    return states, kinds


def evaluate_stage(
    cfg: BrakeStageConfig,
    detection,
    ego,
    ego_dims,
    opp_dims,
    t: float,
    ego_decel: float = 0.0,
) -> TriggerDecision:
    """Evaluate one stage's trigger conditions at time ``t``.

    :param detection: the stage's :class:`DetectionState`, or a mapping channel -> state.
    :param ego: current ego state (``accel`` is the longitudinal acceleration).
    :param ego_decel: deceleration currently applied by the brakes, used in the
        stopping-distance estimate.
    """
    states, kinds = _stage_detection(cfg, detection)
    opp = None
    for kind in kinds:
        st: DetectionState = states.get(kind)
        if st is not None and st.available(t):
            opp = st.last_known
            break
    no_accel = ego.accel < cfg.ego_accel_threshold
    if opp is None:
        ledger = ConditionLedger(no_ego_accel=no_accel, tte_elapsed=False if cfg.use_tte_condition else None)
        return TriggerDecision(cfg.name, False, t, ledger)
    pred = predict_crash(ego, ego_dims, opp, opp_dims, cfg.safety_dist, cfg.horizon)
    if not pred.predicted:
        ledger = ConditionLedger(detected=True, no_ego_accel=no_accel, tte_elapsed=False if cfg.use_tte_condition else None)
        return TriggerDecision(cfg.name, False, t, ledger)
    prof = stopping_distance(ego.speed, cfg.max_decel, cfg.jerk, cfg.application_delay, cfg.mu_assumed, ego_decel)
    ttb = time_to_brake(pred, prof)
    tte = pred.ttc_entry - evasion_time(ego_dims[1], opp_dims[1], cfg.a_lat_max, cfg.tte_margin)
    ledger = ConditionLedger(
        detected=True,
        crash_predicted=True,
        below_ttc_threshold=pred.ttc_entry <= cfg.ttc_threshold,
        ttb_elapsed=ttb <= 0,
        no_ego_accel=no_accel,
        tte_elapsed=(tte <= 0) if cfg.use_tte_condition else None,
        ttc=pred.ttc,
        ttc_entry=pred.ttc_entry,
        ttb=ttb,
        tte=tte,
    )
    return TriggerDecision(cfg.name, ledger.all_true(), t, ledger)


def evaluate_cascade(stages: Sequence[BrakeStageConfig], detections: Mapping[str, DetectionState], ego, ego_dims, opp_dims, t: float, ego_decel: float = 0.0) -> list[TriggerDecision]:
    """Evaluate every stage independently at the same instant."""
    if not 1 <= len(stages) <= 2:
        raise ValueError("a cascade has one or two stages")
    return [evaluate_stage(st, detections, ego, ego_dims, opp_dims, t, ego_decel) for st in stages]


def commanded_decel(stages: Sequence[BrakeStageConfig], fire_times: Mapping[str, float], t: float, mu: float = math.inf) -> float:
    """Deceleration requested at ``t``: maximum over latched stages whose delay has elapsed."""
    out = 0.0
    for st in stages:
        tf = fire_times.get(st.name)
        if tf is not None and t >= tf + st.application_delay - 1e-12:
            out = max(out, st.max_decel)
    return min(out, mu * 9.81)


def stage_ledger_batch(cfg: BrakeStageConfig, detected, ego: Mapping[str, np.ndarray], ego_dims, opp: Mapping[str, np.ndarray], opp_dims, mask: bool = True) -> dict:
    """Vectorised ledger over a run.

    ``ego`` holds arrays x, y, h, v, accel, decel and ``opp`` arrays x, y, h, v. With
    ``mask=False`` the prediction-based conditions are evaluated on ground truth for every
    tick regardless of detection (used by the cause analysis).
    """
    pred = predict_crash_batch(ego["x"], ego["y"], ego["h"], ego["v"], ego_dims, opp["x"], opp["y"], opp["h"], opp["v"], opp_dims, cfg.safety_dist, cfg.horizon)
    predicted = pred["predicted"] & detected if mask else pred["predicted"]
    dist = stopping_distance_batch(ego["v"], cfg.max_decel, cfg.jerk, cfg.application_delay, cfg.mu_assumed, ego["decel"])
    with np.errstate(divide="ignore", invalid="ignore"):
        ttb = np.where(ego["v"] > 0, (pred["x_crash"] - dist) / ego["v"], np.inf)
    tte = pred["ttc_entry"] - evasion_time(ego_dims[1], opp_dims[1], cfg.a_lat_max, cfg.tte_margin)
    nan = np.nan
    out = {
        "detected": np.asarray(detected, bool),
        "crash_predicted": predicted,
        "below_ttc_threshold": predicted & (pred["ttc_entry"] <= cfg.ttc_threshold),
        "ttb_elapsed": predicted & (ttb <= 0),
        "no_ego_accel": ego["accel"] < cfg.ego_accel_threshold,
        "tte_elapsed": (predicted & (tte <= 0)) if cfg.use_tte_condition else np.ones_like(predicted),
        "ttc": np.where(predicted, pred["ttc"], nan),
        "ttc_entry": np.where(predicted, pred["ttc_entry"], nan),
        "ttb": np.where(predicted, ttb, nan),
        "tte": np.where(predicted, tte, nan),
    }
    fire = out["crash_predicted"] & out["below_ttc_threshold"] & out["ttb_elapsed"] & out["no_ego_accel"] & out["tte_elapsed"]
    if mask:
        fire &= out["detected"]
    out["fire"] = fire
    return out
