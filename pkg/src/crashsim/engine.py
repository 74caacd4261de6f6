"""Closed-loop 10 ms simulation of a scenario under a brake cascade.

Two implementations share the same semantics:

* :func:`run` is event driven. Between brake triggers the ego motion is known in closed
  form, so detections, ledgers and collisions are evaluated for all ticks at once and
  the run is only re-planned when a stage fires.
* :func:`run_stepwise` walks the ticks one by one with the scalar building blocks
  (:func:`~crashsim.perception.update_detection`, :func:`~crashsim.brakes.evaluate_cascade`,
  :func:`apply_actuation`). It is slow and serves as the reference for :func:`run`.

Per tick: detections are updated, the cascade is evaluated, actuation is applied, both
vehicles advance and the footprints are tested for overlap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .brakes import BrakeConfig, BrakeStageConfig, evaluate_cascade, stage_ledger_batch
from .geometry import OrientedBox, obb_overlap, obb_overlap_batch
from .kinematics import G, BrakePlan, advance
from .perception import (
    DetectionState,
    SensorSet,
    availability_batch,
    in_field_of_view,
    sensor_set,
    update_detection,
    visibility_batch,
)
from .scenario import DT, Scenario, TrajectorySample, time_grid

CHANNELS = ("onboard", "v2x")
TRACE_COLUMNS = ("t", "ego_x", "ego_y", "ego_v", "ego_a", "opp_x", "opp_y", "det_onboard", "det_v2x", "stage_flags")


def _on_grid(track, dt: float) -> bool:
    t = track.t
    return abs(t[0] / dt - round(t[0] / dt)) < 1e-6 and np.allclose(np.diff(t), dt, rtol=0, atol=1e-9)


class Replay:
    """Scenario tracks aligned on the simulation grid, plus the ego path geometry.

    The grid runs from the later track start to the end of the opponent track; the ego
    recording is extrapolated along its last heading at its last speed if it ends first.
    """

    def __init__(self, scenario: Scenario, dt: float = DT):
        if not (_on_grid(scenario.ego, dt) and _on_grid(scenario.opponent, dt)):
            scenario = scenario.resampled()
        self.scenario = scenario
        ego, opp = scenario.ego, scenario.opponent
        self.t = time_grid(scenario.t_start, opp.t_end, dt)
        n = self.t.size
        i_opp = np.searchsorted(opp.t, self.t[0] - 1e-9)
        self.opp = {
            "x": opp.x[i_opp : i_opp + n],
            "y": opp.y[i_opp : i_opp + n],
            "h": opp.heading[i_opp : i_opp + n],
            "v": opp.speed[i_opp : i_opp + n],
            "a": opp.accel[i_opp : i_opp + n],
        }
        self.opp_dims = (opp.length, opp.width)
        self.ego_dims = (ego.length, ego.width)
        # ego path: cumulative arc over the full recording
        seg = np.hypot(np.diff(ego.x), np.diff(ego.y))
        self.path_s = np.concatenate(([0.0], np.cumsum(seg)))
        self.path_x, self.path_y, self.path_h = ego.x, ego.y, ego.heading
        i0 = int(np.searchsorted(ego.t, self.t[0] - 1e-9))
        m = min(n, len(ego) - i0)
        rec = {
            "x": np.empty(n),
            "y": np.empty(n),
            "h": np.empty(n),
            "v": np.empty(n),
            "accel": np.empty(n),
            "s": np.empty(n),
        }
        rec["x"][:m], rec["y"][:m], rec["h"][:m] = ego.x[i0 : i0 + m], ego.y[i0 : i0 + m], ego.heading[i0 : i0 + m]
        rec["v"][:m], rec["accel"][:m], rec["s"][:m] = ego.speed[i0 : i0 + m], ego.accel[i0 : i0 + m], self.path_s[i0 : i0 + m]
        if m < n:
            extra = self.t[m:] - ego.t_end
            v_last = ego.speed[-1]
            s_ext = self.path_s[-1] + v_last * extra
            rec["s"][m:] = s_ext
            rec["v"][m:] = v_last
            rec["accel"][m:] = 0.0
            rec["x"][m:], rec["y"][m:], rec["h"][m:] = self.pose_at_arc(s_ext)
        rec["decel"] = np.zeros(n)
        self.rec = rec

    def __len__(self):
        return self.t.size

    def pose_at_arc(self, s):
        """Position and heading along the recorded ego path at arc length ``s``."""
        s = np.asarray(s, float)
        ps = self.path_s
        i = np.clip(np.searchsorted(ps, s, side="right") - 1, 0, ps.size - 2)
        seg = ps[i + 1] - ps[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(seg > 0, (s - ps[i]) / np.where(seg > 0, seg, 1.0), 0.0)
        f = np.minimum(f, 1.0)
        x = self.path_x[i] + f * (self.path_x[i + 1] - self.path_x[i])
        y = self.path_y[i] + f * (self.path_y[i + 1] - self.path_y[i])
        h = self.path_h[i] + f * (self.path_h[i + 1] - self.path_h[i])
        beyond = s > ps[-1]
        if np.any(beyond):
            hl = self.path_h[-1]
            d = s - ps[-1]
            x = np.where(beyond, self.path_x[-1] + d * math.cos(hl), x)
            y = np.where(beyond, self.path_y[-1] + d * math.sin(hl), y)
            h = np.where(beyond, hl, h)
        return x, y, h

    def recorded_at(self, t: float) -> tuple[float, float]:
        """Recorded (arc, speed) at an arbitrary time on the grid span."""
        return float(np.interp(t, self.t, self.rec["s"])), float(np.interp(t, self.t, self.rec["v"]))

    def ego_trajectory(self, applications, mu: float) -> dict:
        """Ego arrays on the grid for a set of (t_apply, decel, jerk) brake applications."""
        if not applications:
            return self.rec
        t_b = min(a[0] for a in applications)
        s_b, v_b = self.recorded_at(t_b)
        plan = BrakePlan(t_b, s_b, v_b, [(t, min(d, mu * G), j) for t, d, j in applications])
        k_b = int(np.searchsorted(self.t, t_b - 1e-9))
        out = {key: val.copy() for key, val in self.rec.items()}
        s, v, a = plan.evaluate(self.t[k_b:])
        x, y, h = self.pose_at_arc(s)
        out["s"][k_b:], out["v"][k_b:], out["decel"][k_b:] = s, v, a
        out["x"][k_b:], out["y"][k_b:], out["h"][k_b:] = x, y, h
        out["accel"][k_b:] = np.where(v > 0, -a, 0.0)
        return out

    def detections(self, channel, ego: dict) -> np.ndarray:
        opp = self.scenario.opponent
        vis = visibility_batch(
            channel, ego["x"], ego["y"], ego["h"], self.ego_dims[0],
            self.opp["x"], self.opp["y"], self.opp["h"], opp.length, opp.vehicle_type,
            self.scenario.obstructions,
        )
        return availability_batch(self.t, vis, channel.detection_delay)

    def collisions(self, ego: dict) -> np.ndarray:
        return obb_overlap_batch(ego["x"], ego["y"], ego["h"], *self.ego_dims, self.opp["x"], self.opp["y"], self.opp["h"], *self.opp_dims)


@dataclass
class Trace:
    t: np.ndarray
    ego_x: np.ndarray
    ego_y: np.ndarray
    ego_h: np.ndarray
    ego_v: np.ndarray
    ego_a: np.ndarray
    opp_x: np.ndarray
    opp_y: np.ndarray
    opp_h: np.ndarray
    det_onboard: np.ndarray
    det_v2x: np.ndarray
    stage_flags: np.ndarray  # bit i set once stage i (cascade order) has fired
    ledgers: dict = field(default_factory=dict)


@dataclass
class SimulationOutcome:
    scenario_id: str
    brake: str
    sensor_set: str
    ttc_threshold: Optional[float]
    friction_known: bool
    result: str  # "avoided" | "crash"
    t_end: float
    impact_speed_ego: float = 0.0
    impact_relative_speed: float = 0.0
    trigger_events: tuple = ()
    trace: Optional[Trace] = None

    @property
    def crashed(self) -> bool:
        return self.result == "crash"

    def trigger_time(self, stage: str) -> Optional[float]:
        for name, t in self.trigger_events:
            if name == stage:
                return t
        return None

    def to_record(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "brake": self.brake,
            "sensor_set": self.sensor_set,
            "ttc_threshold": self.ttc_threshold,
            "friction_known": self.friction_known,
            "result": self.result,
            "t_end": self.t_end,
            "impact_speed_ego": self.impact_speed_ego,
            "impact_relative_speed": self.impact_relative_speed,
            "trigger_events": [list(e) for e in self.trigger_events],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SimulationOutcome":
        return cls(
            scenario_id=rec["scenario_id"],
            brake=rec["brake"],
            sensor_set=rec["sensor_set"],
            ttc_threshold=rec.get("ttc_threshold"),
            friction_known=bool(rec.get("friction_known", False)),
            result=rec["result"],
            t_end=float(rec["t_end"]),
            impact_speed_ego=float(rec.get("impact_speed_ego", 0.0)),
            impact_relative_speed=float(rec.get("impact_relative_speed", 0.0)),
            trigger_events=tuple((str(s), float(t)) for s, t in rec.get("trigger_events", [])),
        )


def resolve_brake(brake: Optional[BrakeConfig], scenario: Scenario, friction_known: bool) -> Optional[BrakeConfig]:
    if brake is None:
        return None
    return brake.with_mu(scenario.friction_mu) if friction_known else brake


def _impact(ego: dict, opp: dict, k: int) -> tuple[float, float]:
    ve, vo = float(ego["v"][k]), float(opp["v"][k])
    rx = ve * math.cos(ego["h"][k]) - vo * math.cos(opp["h"][k])
    ry = ve * math.sin(ego["h"][k]) - vo * math.sin(opp["h"][k])
    return ve, math.hypot(rx, ry)


def run(
    scenario: Scenario,
    brake: Optional[BrakeConfig],
    sensors="1R1V",
    friction_known: bool = False,
    record_trace: bool = True,
    replay: Optional[Replay] = None,
) -> SimulationOutcome:
    """Simulate ``scenario`` with the given cascade (``None`` replays the recording).

    :param sensors: a :class:`SensorSet` or its name.
    :param friction_known: the brakes plan with the scenario's friction instead of mu = 1.
    :param replay: pre-built :class:`Replay` for the scenario, reused across runs.
    """
    sensors = sensor_set(sensors) if isinstance(sensors, str) else sensors
    rp = replay or Replay(scenario)
    cfg = resolve_brake(brake, scenario, friction_known)
    stages = cfg.stages if cfg else ()
    mu = scenario.friction_mu
    n = len(rp)
    applications: list = []
    fired: dict[str, int] = {}
    k_from = 0
    while True:
        ego = rp.ego_trajectory(applications, mu)
        hits = rp.collisions(ego)
        hit_idx = np.flatnonzero(hits[k_from:])
        k_crash = k_from + int(hit_idx[0]) if hit_idx.size else n
        pending = [st for st in stages if st.name not in fired]
        k_fire, firing = n, []
        if pending and k_crash > k_from:
            avail = {ch: rp.detections(sensors.channel(ch), ego) for ch in _channels(pending)}
            for st in pending:
                led = stage_ledger_batch(st, _stage_avail(st, avail), ego, rp.ego_dims, rp.opp, rp.opp_dims)
                idx = np.flatnonzero(led["fire"][k_from:k_crash])
                if idx.size:
                    k = k_from + int(idx[0])
                    if k < k_fire:
                        k_fire, firing = k, [st]
                    elif k == k_fire:
                        firing.append(st)
        if not firing:
            break
        for st in firing:
            fired[st.name] = k_fire
            applications.append((float(rp.t[k_fire]) + st.application_delay, st.max_decel, st.jerk))
        k_from = k_fire + 1
    crashed = k_crash < n
    k_end = k_crash if crashed else n - 1
    events = tuple(sorted(((name, float(rp.t[k])) for name, k in fired.items()), key=lambda e: (e[1], e[0])))
    ve, vrel = _impact(ego, rp.opp, k_end) if crashed else (0.0, 0.0)
    trace = _build_trace(rp, ego, stages, fired, sensors, k_end) if record_trace else None
    return SimulationOutcome(
        scenario_id=scenario.id,
        brake=cfg.name if cfg else "none",
        sensor_set=sensors.name,
        ttc_threshold=cfg.ttc_threshold if cfg else None,
        friction_known=friction_known,
        result="crash" if crashed else "avoided",
        t_end=float(rp.t[k_end]),
        impact_speed_ego=ve,
        impact_relative_speed=vrel,
        trigger_events=events,
        trace=trace,
    )


def _channels(stages) -> set:
    out = set()
    for st in stages:
        out.add(st.source_channel)
        if st.fuse_onboard:
            out.add("onboard")
    return out


def _stage_avail(st: BrakeStageConfig, avail: dict) -> np.ndarray:
    det = avail[st.source_channel]
    if st.fuse_onboard and st.source_channel != "onboard":
        det = det | avail["onboard"]
    return det


def _build_trace(rp: Replay, ego: dict, stages, fired: dict, sensors: SensorSet, k_end: int) -> Trace:
    sl = slice(0, k_end + 1)
    avail = {ch: rp.detections(sensors.channel(ch), ego) for ch in CHANNELS}
    flags = np.zeros(len(rp), dtype=np.int64)
    ledgers = {}
    for i, st in enumerate(stages):
        if st.name in fired:
            flags[fired[st.name] :] |= 1 << i
        led = stage_ledger_batch(st, _stage_avail(st, avail), ego, rp.ego_dims, rp.opp, rp.opp_dims)
        ledgers[st.name] = {k: v[sl] for k, v in led.items()}
    return Trace(
        t=rp.t[sl],
        ego_x=ego["x"][sl],
        ego_y=ego["y"][sl],
        ego_h=ego["h"][sl],
        ego_v=ego["v"][sl],
        ego_a=ego["accel"][sl],
        opp_x=rp.opp["x"][sl],
        opp_y=rp.opp["y"][sl],
        opp_h=rp.opp["h"][sl],
        det_onboard=avail["onboard"][sl],
        det_v2x=avail["v2x"][sl],
        stage_flags=flags[sl],
        ledgers=ledgers,
    )


def write_trace_csv(trace: Trace, path) -> None:
    """One row per tick; ``stage_flags`` is a bitmask of latched stages in cascade order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for i in range(trace.t.size):
            w.writerow(
                [
                    f"{trace.t[i]:.2f}",
                    repr(float(trace.ego_x[i])),
                    repr(float(trace.ego_y[i])),
                    repr(float(trace.ego_v[i])),
                    repr(float(trace.ego_a[i])),
                    repr(float(trace.opp_x[i])),
                    repr(float(trace.opp_y[i])),
                    int(trace.det_onboard[i]),
                    int(trace.det_v2x[i]),
                    int(trace.stage_flags[i]),
                ]
            )


def detect_collision(ego_box: OrientedBox, opp_box: OrientedBox) -> bool:
    return obb_overlap(ego_box, opp_box)


# --------------------------------------------------------------------------- stepwise


@dataclass(frozen=True)
class EgoActuationState:
    """Longitudinal state of the ego along its recorded path.

    ``pending`` holds (t_apply, decel, jerk) brake applications; until the first one is
    reached the ego follows the recording.
    """

    arc_pos: float
    speed: float
    current_decel: float = 0.0
    command: float = 0.0
    command_since: Optional[float] = None
    braking: bool = False
    pending: tuple = ()

    def request(self, t_apply: float, decel: float, jerk: float) -> "EgoActuationState":
        return replace(self, pending=tuple(sorted(self.pending + ((t_apply, decel, jerk),))))


def apply_actuation(state: EgoActuationState, t: float, dt: float, mu_actual: float, recorded) -> EgoActuationState:
    """Advance the ego by one tick.

    :param recorded: callable mapping a time to the recorded (arc, speed) of the ego.

    Before the first application time the ego follows the recording; from then on the
    deceleration slews at the stage jerk toward min(command, mu_actual * g) and the
    recording is never resumed.
    """
    t1 = t + dt
    tol = 1e-9
    if not state.braking:
        starts = [p[0] for p in state.pending]
        t_b = min(starts) if starts else math.inf
        if t_b > t1 + tol:
            s, v = recorded(t1)
            return replace(state, arc_pos=s, speed=v)
        s, v = recorded(t_b)
        state = replace(state, arc_pos=s, speed=v, braking=True)
        t_cur = t_b
    else:
        t_cur = t
    s, v, a = state.arc_pos, state.speed, state.current_decel
    command, since = state.command, state.command_since
    jerk = 45.0
    for tp, d, j in state.pending:
        if tp <= t_cur + tol and d > command:
            command, since = d, tp
    for tp, d, j in state.pending:
        if tp <= t_cur + tol and d == command:
            jerk = j
    for tp, d, j in [p for p in state.pending if t_cur + tol < p[0] < t1 - tol] + [(t1, None, None)]:
        s, v, a = advance(s, v, a, min(command, mu_actual * G), jerk, tp - t_cur)
        t_cur = tp
        if d is not None and d > command:
            command, since, jerk = d, tp, j
    for tp, d, j in state.pending:
        if abs(tp - t1) <= tol and d > command:
            command, since, jerk = d, tp, j
    return replace(state, arc_pos=s, speed=v, current_decel=a, command=command, command_since=since)


def run_stepwise(scenario: Scenario, brake: Optional[BrakeConfig], sensors="1R1V", friction_known: bool = False) -> SimulationOutcome:
    """Reference tick-by-tick implementation of :func:`run` (no trace)."""
    sensors = sensor_set(sensors) if isinstance(sensors, str) else sensors
    rp = Replay(scenario)
    cfg = resolve_brake(brake, scenario, friction_known)
    stages = cfg.stages if cfg else ()
    opp_track = scenario.opponent
    mu = scenario.friction_mu
    state = EgoActuationState(arc_pos=float(rp.rec["s"][0]), speed=float(rp.rec["v"][0]))
    det = {ch: DetectionState() for ch in CHANNELS}
    fired: dict[str, float] = {}
    recorded = rp.recorded_at
    crashed, k_end, ve, vrel = False, len(rp) - 1, 0.0, 0.0
    for k in range(len(rp)):
        t = float(rp.t[k])
        if state.braking:
            x, y, h = (float(v[0]) for v in rp.pose_at_arc([state.arc_pos]))
            v, accel = state.speed, (-state.current_decel if state.speed > 0 else 0.0)
            decel = state.current_decel
        else:
            x, y, h = (float(rp.rec[c][k]) for c in ("x", "y", "h"))
            v, accel, decel = float(rp.rec["v"][k]), float(rp.rec["accel"][k]), 0.0
        ego = TrajectorySample(t, x, y, h, v, accel)
        opp = TrajectorySample(t, *(float(rp.opp[c][k]) for c in ("x", "y", "h", "v", "a")))
        if obb_overlap(OrientedBox((x, y), h, *rp.ego_dims), OrientedBox((opp.x, opp.y), opp.heading, *rp.opp_dims)):
            crashed, k_end = True, k
            ve = v
            vrel = math.hypot(v * math.cos(h) - opp.speed * math.cos(opp.heading), v * math.sin(h) - opp.speed * math.sin(opp.heading))
            break
        for ch in CHANNELS:
            chan = sensors.channel(ch)
            frac = 0.5 if (ch == "v2x" and opp_track.vehicle_type == "bicycle") else chan.recognition_point_fraction
            off = opp_track.length / 2 - frac * opp_track.length
            point = (opp.x + off * math.cos(opp.heading), opp.y + off * math.sin(opp.heading))
            visible = in_field_of_view(chan, ego, rp.ego_dims[0], point, scenario.obstructions)
            det[ch] = update_detection(det[ch], visible, t, opp, chan.detection_delay)
        pending = [st for st in stages if st.name not in fired]
        if pending:
            for st, dec in zip(pending, evaluate_cascade(pending, det, ego, rp.ego_dims, rp.opp_dims, t, decel)):
                if dec.fire:
                    fired[st.name] = t
                    state = state.request(t + st.application_delay, st.max_decel, st.jerk)
        if k < len(rp) - 1:
            state = apply_actuation(state, t, float(rp.t[k + 1]) - t, mu, recorded)
    events = tuple(sorted(fired.items(), key=lambda e: (e[1], e[0])))
    return SimulationOutcome(
        scenario_id=scenario.id,
        brake=cfg.name if cfg else "none",
        sensor_set=sensors.name,
        ttc_threshold=cfg.ttc_threshold if cfg else None,
        friction_known=friction_known,
        result="crash" if crashed else "avoided",
        t_end=float(rp.t[k_end]),
        impact_speed_ego=ve,
        impact_relative_speed=vrel,
        trigger_events=events,
    )
