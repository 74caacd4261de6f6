"""Sensor cones, the V2X pseudo-sensor and per-channel detection state."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import segment_intersects_polygon, segments_blocked_batch
from .scenario import TrajectorySample, VehicleTrack

EPS_T = 1e-9


@dataclass(frozen=True)
class SensorChannelConfig:
    """One detection channel.

    ``mount_from_front`` is measured along the vehicle axis from the front bumper;
    ``recognition_point_fraction`` locates the detected point on the opponent, measured
    from its front as a fraction of its length.
    """

    kind: str  # "onboard" | "v2x"
    half_angle: float
    range: float
    mount_from_front: float
    recognition_point_fraction: float
    detection_delay: float
    occludable: bool
    mount_is_fraction: bool = False  # mount_from_front given as a fraction of ego length

    def __post_init__(self):
        if self.kind not in ("onboard", "v2x"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not self.range > 0:
            raise ValueError("range must be > 0")
        if not 0 < self.half_angle <= math.pi:
            raise ValueError("half_angle must lie in (0, pi]")
        if not 0 <= self.recognition_point_fraction <= 1:
            raise ValueError("recognition_point_fraction must lie in [0, 1]")
        if self.detection_delay < 0:
            raise ValueError("detection_delay must be >= 0")

    def mount_offset(self, ego_length: float) -> float:
        """Signed offset of the mount point ahead of the ego centre along its axis."""
        d = self.mount_from_front * ego_length if self.mount_is_fraction else self.mount_from_front
        return ego_length / 2 - d


V2X_CHANNEL = SensorChannelConfig(
    kind="v2x",
    half_angle=math.pi,
    range=56.0,
    mount_from_front=0.75,
    recognition_point_fraction=0.75,
    detection_delay=0.3,
    occludable=False,
    mount_is_fraction=True,
)


def onboard_channel(angle_deg: float, mount: float, range_m: float = 120.0) -> SensorChannelConfig:
    return SensorChannelConfig("onboard", math.radians(angle_deg) / 2, range_m, mount, 0.5, 0.2, True)


@dataclass(frozen=True)
class SensorSet:
    name: str
    onboard: SensorChannelConfig
    v2x: Optional[SensorChannelConfig] = V2X_CHANNEL

    def channel(self, kind: str) -> SensorChannelConfig:
        if kind == "onboard":
            return self.onboard
        if self.v2x is None:
            raise ValueError(f"sensor set {self.name} has no v2x channel")
        return self.v2x


SENSOR_SETS = {
    "1V": SensorSet("1V", onboard_channel(100.0, 1.40)),
    "1R1V": SensorSet("1R1V", onboard_channel(120.0, 0.25)),
    "5R1V": SensorSet("5R1V", onboard_channel(240.0, 0.25)),
}


def sensor_set(name: str) -> SensorSet:
    key = name.upper().replace("/", "").replace(" ", "")
    try:
        return SENSOR_SETS[key]
    except KeyError:
        raise ValueError(f"unknown sensor set {name!r}; choose from {sorted(SENSOR_SETS)}") from None


def _point_fraction(channel: SensorChannelConfig, vehicle_type: str) -> float:
    # bicycles carry their V2X antenna at half length
    if channel.kind == "v2x" and vehicle_type == "bicycle":
        return 0.5
    return channel.recognition_point_fraction


def recognition_point(opponent: VehicleTrack, t: float, fraction: float, channel: SensorChannelConfig | None = None) -> tuple[float, float]:
    s = opponent.at(t)
    if channel is not None:
        fraction = _point_fraction(channel, opponent.vehicle_type)
    off = opponent.length / 2 - fraction * opponent.length
    return s.x + off * math.cos(s.heading), s.y + off * math.sin(s.heading)


def mount_point(channel: SensorChannelConfig, ego: TrajectorySample, ego_length: float) -> tuple[float, float]:
    off = channel.mount_offset(ego_length)
    return ego.x + off * math.cos(ego.heading), ego.y + off * math.sin(ego.heading)


def in_field_of_view(channel: SensorChannelConfig, ego: TrajectorySample, ego_length: float, opp_point, obstructions: Sequence = ()) -> bool:
    """Range, cone and (for occludable channels) line-of-sight test for one opponent point."""
    mx, my = mount_point(channel, ego, ego_length)
    dx, dy = opp_point[0] - mx, opp_point[1] - my
    if math.hypot(dx, dy) > channel.range:
        return False
    if channel.half_angle < math.pi:
        bearing = math.remainder(math.atan2(dy, dx) - ego.heading, 2 * math.pi)
        if abs(bearing) > channel.half_angle:
            return False
    if channel.occludable:
        for ob in obstructions:
            if segment_intersects_polygon((mx, my), (opp_point[0], opp_point[1]), ob):
                return False
    return True


def visibility_batch(channel: SensorChannelConfig, ex, ey, eh, ego_length, ox, oy, oh, opp_length, opp_type, obstructions=()) -> np.ndarray:
    """Vectorised :func:`in_field_of_view` over aligned ego/opponent pose arrays."""
    off = channel.mount_offset(ego_length)
    mx, my = ex + off * np.cos(eh), ey + off * np.sin(eh)
    frac = _point_fraction(channel, opp_type)
    poff = opp_length / 2 - frac * opp_length
    px, py = ox + poff * np.cos(oh), oy + poff * np.sin(oh)
    dx, dy = px - mx, py - my
    vis = np.hypot(dx, dy) <= channel.range
    if channel.half_angle < math.pi:
        bearing = np.arctan2(dy, dx) - eh
        bearing = np.abs((bearing + np.pi) % (2 * np.pi) - np.pi)
        vis &= bearing <= channel.half_angle
    if channel.occludable and obstructions:
        idx = np.flatnonzero(vis)
        if idx.size:
            blocked = np.zeros(idx.size, dtype=bool)
            for ob in obstructions:
                blocked |= segments_blocked_batch(mx[idx], my[idx], px[idx], py[idx], ob)
            vis[idx[blocked]] = False
    return vis


def availability_batch(times: np.ndarray, visible: np.ndarray, delay: float) -> np.ndarray:
    """Tick-wise availability: visible without interruption for at least ``delay`` seconds."""
    n = visible.size
    starts = visible & ~np.concatenate(([False], visible[:-1]))
    start_idx = np.where(starts, np.arange(n), 0)
    start_idx = np.maximum.accumulate(start_idx)
    return visible & (times - times[start_idx] >= delay - EPS_T)


@dataclass(frozen=True)
class DetectionState:
    first_in_fov_t: Optional[float] = None
    available_from_t: Optional[float] = None
    last_known: Optional[TrajectorySample] = None
    currently_visible: bool = False
    last_t: Optional[float] = None

    def available(self, t: float) -> bool:
        return self.currently_visible and self.available_from_t is not None and t >= self.available_from_t - EPS_T


def update_detection(state: DetectionState, visible_now: bool, t: float, opp_sample: TrajectorySample, delay: float) -> DetectionState:
    """Advance one channel's detection state to time ``t``.

    A visibility gap restarts acquisition, so the delay clock runs again from the next
    tick the opponent is seen. The last known state is kept after losing sight but no
    longer counts as available.
    """
    if state.last_t is not None and t <= state.last_t:
        raise ValueError(f"non-monotone time: {t} after {state.last_t}")
    if not visible_now:
        return replace(state, currently_visible=False, last_t=t)
    if not state.currently_visible:
        state = replace(state, first_in_fov_t=t, available_from_t=t + delay, currently_visible=True)
    state = replace(state, last_t=t)
    if state.available(t):
        state = replace(state, last_known=opp_sample)
    return state
