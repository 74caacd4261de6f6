"""Deterministic synthetic crossing-path scenarios.

Both paths cross at the origin. The ego drives along +x and reaches the origin at
``ego_arrival``; the opponent travels along ``crossing_angle`` and reaches it
``approach_sync`` seconds later. A corner obstruction sits in the quadrant between the
two approach legs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .scenario import DT, Obstruction, Scenario, VehicleTrack, time_grid

CAR_DIMS = (4.5, 1.8)
BICYCLE_DIMS = (1.8, 0.6)
DEFAULT_DIMS = {"passenger_car": CAR_DIMS, "bicycle": BICYCLE_DIMS}


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    pass


@dataclass(frozen=True)
class Accelerate:
    a: float
    t_start: float = 0.0


@dataclass(frozen=True)
class Turn:
    """Constant yaw rate from ``t_start``; stops turning after ``angle`` rad if given."""

    yaw_rate: float
    t_start: float = 0.0
    angle: Optional[float] = None


Behavior = Union[Constant, Accelerate, Turn]


@dataclass(frozen=True)
class CornerObstruction:
    """Axis-aligned square; its near corner is ``setback_opp`` m from the opponent path and
    ``setback_ego`` m from the ego path (90 degree crossing geometry)."""

    setback_ego: float
    setback_opp: float
    size: float

    def polygon(self) -> tuple:
        x0, y0, s = -self.setback_opp, -self.setback_ego, self.size
        return ((x0, y0), (x0, y0 - s), (x0 - s, y0 - s), (x0 - s, y0))


@dataclass(frozen=True)
class CrossingSpec:
    ego_speed: float
    opp_speed: float
    crossing_angle: float = math.pi / 2
    approach_sync: float = 0.0
    obstruction: Optional[CornerObstruction] = None
    opp_behavior: Behavior = Constant()
    ego_behavior: Behavior = Constant()
    friction_mu: float = 1.0
    duration: float = 8.0
    seed: int = 0
    ego_arrival: float = 4.0
    opp_type: str = "passenger_car"
    ego_dims: tuple = CAR_DIMS
    opp_dims: Optional[tuple] = None
    id: Optional[str] = None
    meta: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.ego_speed < 0 or self.opp_speed < 0:
            raise GeneratorError("speeds must be >= 0")
        if self.duration <= 0:
            raise GeneratorError("duration must be > 0")
        if self.opp_type not in DEFAULT_DIMS:
            raise GeneratorError(f"unknown opponent type {self.opp_type!r}")
        if isinstance(self.ego_behavior, Turn):
            raise GeneratorError("the ego may only drive straight")

    @property
    def opponent_dims(self) -> tuple:
        return self.opp_dims or DEFAULT_DIMS[self.opp_type]

    @property
    def opp_arrival(self) -> float:
        return self.ego_arrival + self.approach_sync


def collision_window(ego_speed: float, opp_speed: float, ego_dims=CAR_DIMS, opp_dims=CAR_DIMS) -> float:
    """Largest |approach_sync| for which two constant-speed boxes on a 90 degree crossing touch."""
    if min(ego_speed, opp_speed) <= 0:
        raise GeneratorError("collision window needs positive speeds")
    a = ego_dims[0] / 2 + opp_dims[1] / 2
    b = opp_dims[0] / 2 + ego_dims[1] / 2
    return a / ego_speed + b / opp_speed


def front_crash_window(ego_speed: float, opp_speed: float, ego_dims=CAR_DIMS, opp_dims=CAR_DIMS) -> tuple[float, float]:
    """Range of approach_sync for which the ego front strikes the opponent side (90 degrees)."""
    a = ego_dims[0] / 2 + opp_dims[1] / 2
    b = opp_dims[0] / 2 + ego_dims[1] / 2
    return -a / ego_speed - b / opp_speed, b / opp_speed - a / ego_speed


def _profile(t: np.ndarray, v0: float, beh: Behavior):
    """Arc length, speed, accel and heading offset over ``t`` for one behavior."""
    s, v, a = v0 * t, np.full(t.shape, float(v0)), np.zeros(t.shape)
    dh = np.zeros(t.shape)
    if isinstance(beh, Accelerate) and beh.a != 0:
        tau = np.maximum(t - beh.t_start, 0.0)
        if beh.a < 0 and v0 > 0:
            tau = np.minimum(tau, v0 / -beh.a)
        elif beh.a < 0:
            tau = np.zeros_like(tau)
        pre = np.clip(t, None, max(beh.t_start, 0.0))
        # a decelerating vehicle stays at standstill once stopped (tau is capped above)
        s = v0 * pre + v0 * tau + beh.a * tau**2 / 2
        v = np.maximum(v0 + beh.a * tau, 0.0)  # rounding can leave -1e-15 at standstill
        active = (t > beh.t_start) & (v > 0) if beh.a < 0 else t > beh.t_start
        a = np.where(active, beh.a, 0.0)
    elif isinstance(beh, Turn):
        tau = np.maximum(t - beh.t_start, 0.0)
        if beh.angle is not None and beh.yaw_rate != 0:
            tau = np.minimum(tau, abs(beh.angle / beh.yaw_rate))
        dh = beh.yaw_rate * tau
    return s, v, a, dh


def _track(t: np.ndarray, v0: float, beh: Behavior, heading0: float, t_arrival: float, dims, vtype: str) -> VehicleTrack:
    s, v, a, dh = _profile(t, v0, beh)
    h = heading0 + dh
    if np.any(dh != 0):
        ds = np.diff(s)
        hm = (h[1:] + h[:-1]) / 2
        x = np.concatenate(([0.0], np.cumsum(ds * np.cos(hm))))
        y = np.concatenate(([0.0], np.cumsum(ds * np.sin(hm))))
        xa, ya = np.interp(t_arrival, t, x), np.interp(t_arrival, t, y)
        x, y = x - xa, y - ya
    else:
        sa = float(np.interp(t_arrival, t, s))
        x, y = (s - sa) * math.cos(heading0), (s - sa) * math.sin(heading0)
    return VehicleTrack(vtype, float(dims[0]), float(dims[1]), np.column_stack([t, x, y, h, v, a]))


def generate(spec: CrossingSpec) -> Scenario:
    """Build the scenario for ``spec``; a pure function of the spec."""
    for v, beh in ((spec.ego_speed, spec.ego_behavior), (spec.opp_speed, spec.opp_behavior)):
        if v <= 0 and not (isinstance(beh, Accelerate) and beh.a > 0):
            raise GeneratorError("a standing vehicle never reaches the crossing point")
    t = time_grid(0.0, spec.duration, DT)
    ego = _track(t, spec.ego_speed, spec.ego_behavior, 0.0, spec.ego_arrival, spec.ego_dims, "passenger_car")
    opp = _track(t, spec.opp_speed, spec.opp_behavior, spec.crossing_angle, spec.opp_arrival, spec.opponent_dims, spec.opp_type)
    obstructions = (Obstruction(spec.obstruction.polygon()),) if spec.obstruction else ()
    meta = {"generator": "crossing", "seed": str(spec.seed)}
    meta.update({str(k): str(v) for k, v in spec.meta.items()})
    sid = spec.id or f"crossing-{spec.seed}"
    return Scenario(sid, ego, opp, obstructions, float(spec.friction_mu), meta)


# ------------------------------------------------------------------------- corpora

PROFILES = ("mixed", "constant-velocity", "low-friction", "cause-targeted")


def _sample_mixed(rng: np.random.Generator, i: int, seed: int) -> CrossingSpec:
    opp_type = "bicycle" if rng.random() < 0.2 else "passenger_car"
    v_e = rng.uniform(5.0, 20.0)
    v_o = rng.uniform(3.0, 8.0) if opp_type == "bicycle" else rng.uniform(3.0, 15.0)
    odims = DEFAULT_DIMS[opp_type]
    w = collision_window(v_e, v_o, CAR_DIMS, odims)
    sync = rng.uniform(-0.8, 0.8) * w
    mu = float(rng.choice([0.3, 0.5, 0.8, 1.0]))
    obstruction = None
    if rng.random() < 0.25:
        obstruction = CornerObstruction(rng.uniform(2.0, 6.0), rng.uniform(2.0, 6.0), rng.uniform(5.0, 15.0))
    r = rng.random()
    opp_beh: Behavior = Constant()
    ego_beh: Behavior = Constant()
    if r < 0.15:
        opp_beh = Accelerate(rng.uniform(-3.0, 3.0), rng.uniform(1.0, 3.5))
    elif r < 0.25:
        opp_beh = Turn(rng.choice([-1, 1]) * rng.uniform(0.1, 0.4), rng.uniform(1.0, 3.5), angle=math.pi / 4)
    elif r < 0.40:
        ego_beh = Accelerate(rng.uniform(0.5, 2.5), rng.uniform(0.0, 3.0))
    return CrossingSpec(
        ego_speed=v_e, opp_speed=v_o, approach_sync=sync, obstruction=obstruction, opp_behavior=opp_beh,
        ego_behavior=ego_beh, friction_mu=mu, seed=seed, opp_type=opp_type, id=f"mixed-{seed}-{i:05d}",
        meta={"profile": "mixed"},
    )


def _front_sync(rng, v_e, v_o, ego_dims=CAR_DIMS, opp_dims=CAR_DIMS, margin=0.05) -> float:
    lo, hi = front_crash_window(v_e, v_o, ego_dims, opp_dims)
    return rng.uniform(lo + margin, max(hi - margin, lo + margin))


def _sample_constant(rng, i: int, seed: int) -> CrossingSpec:
    v_e = rng.uniform(5.0, 12.0)
    v_o = rng.uniform(3.0, 0.9 * v_e)
    return CrossingSpec(v_e, v_o, approach_sync=_front_sync(rng, v_e, v_o), seed=seed, id=f"cv-{seed}-{i:05d}", meta={"profile": "constant-velocity"})


def _sample_low_friction(rng, i: int, seed: int) -> CrossingSpec:
    v_e = rng.uniform(4.0, 6.5)
    v_o = rng.uniform(2.5, 0.9 * v_e)
    return CrossingSpec(
        v_e, v_o, approach_sync=_front_sync(rng, v_e, v_o), friction_mu=0.5, seed=seed,
        id=f"lowmu-{seed}-{i:05d}", meta={"profile": "low-friction"},
    )


_SAMPLERS = {"mixed": _sample_mixed, "constant-velocity": _sample_constant, "low-friction": _sample_low_friction}


def parse_profile(profile: str) -> tuple[str, Optional[str]]:
    """``"mixed"`` or ``"cause-targeted:Friction"`` style names."""
    name, _, arg = profile.partition(":")
    name = name.strip().lower()
    if name == "cause-targeted":
        from .targeted import resolve_design

        return name, resolve_design(arg)
    if name not in _SAMPLERS:
        raise GeneratorError(f"unknown profile {profile!r}; choose from {PROFILES}")
    return name, None


def generate_specs(n: int, profile: str = "mixed", seed: int = 0) -> list[CrossingSpec]:
    if n <= 0:
        raise GeneratorError("n must be > 0")
    name, design = parse_profile(profile)
    children = np.random.SeedSequence(seed).spawn(n)
    if name == "cause-targeted":
        from .targeted import sample_design

        return [sample_design(design, np.random.default_rng(c), i, seed) for i, c in enumerate(children)]
    return [_SAMPLERS[name](np.random.default_rng(c), i, seed) for i, c in enumerate(children)]


def generate_corpus(n: int, profile: str = "mixed", seed: int = 0) -> list[Scenario]:
    """``n`` scenarios of ``profile``; identical output for identical arguments."""
    return [generate(s) for s in generate_specs(n, profile, seed)]


def with_sync(spec: CrossingSpec, sync: float) -> CrossingSpec:
    return replace(spec, approach_sync=sync)
