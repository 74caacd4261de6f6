"""Scenario data model, resampling onto the 10 ms grid and the JSON interchange format.

Scenario file layout (UTF-8 JSON)::

    {
      "id": "crossing-0001",
      "friction_mu": 0.8,
      "obstructions": [[[x, y], [x, y], [x, y], ...], ...],
      "ego":      {"vehicle_type": "passenger_car", "length": 4.5, "width": 1.8,
                   "samples": [[t, x, y, heading, speed, accel], ...]},
      "opponent": {...same as ego...},
      "meta": {"key": "value"}
    }

Units are s, m, rad (counter-clockwise from +x), m/s and m/s^2.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .geometry import OrientedBox, polygon_is_simple

DT = 0.01
VEHICLE_TYPES = ("passenger_car", "bicycle")
TOP_KEYS = {"id", "friction_mu", "obstructions", "ego", "opponent", "meta"}
TRACK_KEYS = {"vehicle_type", "length", "width", "samples"}
_T, _X, _Y, _H, _V, _A = range(6)


class ScenarioError(ValueError):
    """Base class for scenario loading problems."""


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    """An invariant of the scenario model is violated; ``field`` holds the offending path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ScenarioWarning(UserWarning):
    pass


def time_grid(t0: float, t1: float, dt: float = DT) -> np.ndarray:
    """Absolute grid points k*dt covering [t0, t1], with a 1e-6 step tolerance at both ends."""
    k0 = math.ceil(t0 / dt - 1e-6)
    k1 = math.floor(t1 / dt + 1e-6)
    return np.round(np.arange(k0, k1 + 1) * dt, 9)


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    x: float
    y: float
    heading: float
    speed: float
    accel: float


@dataclass(frozen=True, eq=False)
class VehicleTrack:
    """Timestamped states of one vehicle.

    ``samples`` is an (N, 6) array with columns t, x, y, heading, speed, accel. Positions
    refer to the geometric centre of the vehicle footprint.
    """

    vehicle_type: str
    length: float
    width: float
    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[1] != 6:
            raise ScenarioValidationError("samples", "expected rows of [t, x, y, heading, speed, accel]")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    # column views
    @property
    def t(self) -> np.ndarray:
        return self.samples[:, _T]

    @property
    def x(self) -> np.ndarray:
        return self.samples[:, _X]

    @property
    def y(self) -> np.ndarray:
        return self.samples[:, _Y]

    @property
    def heading(self) -> np.ndarray:
        return self.samples[:, _H]

    @property
    def speed(self) -> np.ndarray:
        return self.samples[:, _V]

    @property
    def accel(self) -> np.ndarray:
        return self.samples[:, _A]

    @property
    def t_start(self) -> float:
        return float(self.samples[0, _T])

    @property
    def t_end(self) -> float:
        return float(self.samples[-1, _T])

    def __len__(self):
        return len(self.samples)

    def sample(self, i: int) -> TrajectorySample:
        return TrajectorySample(*map(float, self.samples[i]))

    def at(self, t: float) -> TrajectorySample:
        """State at time ``t``; linear in position/speed/accel, shortest-arc in heading."""
        ts = self.t
        if t < ts[0] - 1e-9 or t > ts[-1] + 1e-9:
            raise ValueError(f"t={t} outside track range [{ts[0]}, {ts[-1]}]")
        i = int(np.searchsorted(ts, t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 2)
        t0, t1 = ts[i], ts[i + 1]
        f = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        a, b = self.samples[i], self.samples[i + 1]
        dh = math.remainder(b[_H] - a[_H], 2 * math.pi)
        return TrajectorySample(
            t=float(t),
            x=float(a[_X] + f * (b[_X] - a[_X])),
            y=float(a[_Y] + f * (b[_Y] - a[_Y])),
            heading=float(a[_H] + f * dh),
            speed=float(a[_V] + f * (b[_V] - a[_V])),
            accel=float(a[_A] + f * (b[_A] - a[_A])),
        )

    def validate(self, name: str = "track") -> None:
        if self.vehicle_type not in VEHICLE_TYPES:
            raise ScenarioValidationError(f"{name}.vehicle_type", f"unknown type {self.vehicle_type!r}")
        if not (self.length > 0):
            raise ScenarioValidationError(f"{name}.length", "must be > 0")
        if not (self.width > 0):
            raise ScenarioValidationError(f"{name}.width", "must be > 0")
        if len(self.samples) < 2:
            raise ScenarioValidationError(f"{name}.samples", "need at least 2 samples")
        if not np.all(np.isfinite(self.samples)):
            raise ScenarioValidationError(f"{name}.samples", "non-finite value")
        if np.any(np.diff(self.t) <= 0):
            raise ScenarioValidationError(f"{name}.samples", "timestamps must be strictly increasing")
        if np.any(self.speed < 0):
            raise ScenarioValidationError(f"{name}.samples", "speed must be >= 0")
        step = np.hypot(np.diff(self.x), np.diff(self.y))
        expected = 0.5 * (self.speed[1:] + self.speed[:-1]) * np.diff(self.t)
        bad = np.flatnonzero(np.abs(step - expected) > 0.5)
        if bad.size:
            warnings.warn(
                f"{name}: displacement inconsistent with speed*dt at {bad.size} steps (first at t={self.t[bad[0]]:.2f})",
                ScenarioWarning,
                stacklevel=2,
            )


def resample_track(track: VehicleTrack, dt: float = DT) -> VehicleTrack:
    """Resample onto absolute multiples of ``dt``.

    Position, speed and accel are interpolated linearly, heading along the shortest arc
    (headings come out unwrapped). Grid-aligned input is returned unchanged.
    """
    ts = track.t
    grid = time_grid(ts[0], ts[-1], dt)
    if grid.size < 2:
        raise ScenarioValidationError("samples", "track shorter than one simulation step")
    heading = np.unwrap(track.heading)
    cols = [grid]
    for col in (track.x, track.y, heading, track.speed, track.accel):
        cols.append(np.interp(grid, ts, col))
    return VehicleTrack(track.vehicle_type, track.length, track.width, np.column_stack(cols))


@dataclass(frozen=True)
class Obstruction:
    polygon: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "polygon", tuple((float(x), float(y)) for x, y in self.polygon))


@dataclass(frozen=True, eq=False)
class Scenario:
    id: str
    ego: VehicleTrack
    opponent: VehicleTrack
    obstructions: tuple[Obstruction, ...] = ()
    friction_mu: float = 1.0
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "obstructions", tuple(self.obstructions))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def __reduce__(self):
        # read-only proxies do not pickle; rebuild from a plain dict
        return (Scenario, (self.id, self.ego, self.opponent, self.obstructions, self.friction_mu, dict(self.meta)))

    @property
    def t_start(self) -> float:
        return max(self.ego.t_start, self.opponent.t_start)

    @property
    def t_end(self) -> float:
        return min(self.ego.t_end, self.opponent.t_end)

    def validate(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ScenarioValidationError("id", "must be a non-empty string")
        if not (isinstance(self.friction_mu, (int, float)) and 0 < self.friction_mu <= 1.5):
            raise ScenarioValidationError("friction_mu", f"must lie in (0, 1.5], got {self.friction_mu!r}")
        self.ego.validate("ego")
        self.opponent.validate("opponent")
        if self.t_end - self.t_start < DT - 1e-9:
            raise ScenarioValidationError("opponent.samples", "ego and opponent tracks share no common time interval")
        for i, ob in enumerate(self.obstructions):
            if not polygon_is_simple(ob.polygon):
                raise ScenarioValidationError(f"obstructions[{i}]", "polygon must have >= 3 vertices and be simple")
        for k, v in self.meta.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise ScenarioValidationError("meta", "keys and values must be strings")

    def resampled(self) -> "Scenario":
        return Scenario(self.id, resample_track(self.ego), resample_track(self.opponent), self.obstructions, self.friction_mu, dict(self.meta))


def footprint(track: VehicleTrack, t: float) -> OrientedBox:
    s = track.at(t)
    return OrientedBox((s.x, s.y), s.heading, track.length, track.width)


# ---------------------------------------------------------------------------- JSON


def _check_keys(obj: Mapping, allowed: set, where: str, strict: bool) -> None:
    extra = sorted(set(obj) - allowed)
    if not extra:
        return
    msg = f"unknown keys {extra}"
    if strict:
        raise ScenarioValidationError(where or "<root>", msg)
    warnings.warn(f"{where or '<root>'}: {msg}", ScenarioWarning, stacklevel=3)


def _track_from_json(obj, name: str, strict: bool) -> VehicleTrack:
    if not isinstance(obj, dict):
        raise ScenarioValidationError(name, "must be an object")
    _check_keys(obj, TRACK_KEYS, name, strict)
    for key in TRACK_KEYS:
        if key not in obj:
            raise ScenarioValidationError(f"{name}.{key}", "missing")
    samples = obj["samples"]
    if not isinstance(samples, list) or any(not isinstance(r, list) or len(r) != 6 for r in samples):
        raise ScenarioValidationError(f"{name}.samples", "expected a list of [t, x, y, heading, speed, accel]")
    try:
        arr = np.array(samples, dtype=float).reshape(-1, 6)
        length, width = float(obj["length"]), float(obj["width"])
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(name, f"non-numeric value ({exc})") from None
    return VehicleTrack(str(obj["vehicle_type"]), length, width, arr)


def scenario_from_dict(obj, strict: bool = True) -> Scenario:
    """Build and validate a scenario from the parsed JSON document, resampled to 10 ms."""
    if not isinstance(obj, dict):
        raise ScenarioValidationError("<root>", "top level must be an object")
    _check_keys(obj, TOP_KEYS, "", strict)
    for key in ("id", "friction_mu", "ego", "opponent"):
        if key not in obj:
            raise ScenarioValidationError(key, "missing")
    obstructions = []
    for i, poly in enumerate(obj.get("obstructions", [])):
        try:
            pts = [(float(p[0]), float(p[1])) for p in poly]
        except (TypeError, ValueError, IndexError):
            raise ScenarioValidationError(f"obstructions[{i}]", "expected a list of [x, y] vertices") from None
        obstructions.append(Obstruction(tuple(pts)))
    mu = obj["friction_mu"]
    if isinstance(mu, bool) or not isinstance(mu, (int, float)):
        raise ScenarioValidationError("friction_mu", "must be a number")
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise ScenarioValidationError("meta", "must be an object")
    scen = Scenario(
        id=obj["id"],
        ego=_track_from_json(obj["ego"], "ego", strict),
        opponent=_track_from_json(obj["opponent"], "opponent", strict),
        obstructions=tuple(obstructions),
        friction_mu=float(mu),
        meta=meta,
    )
    scen.validate()
    return scen.resampled()


def scenario_to_dict(s: Scenario) -> dict:
    def track(tr: VehicleTrack) -> dict:
        return {
            "vehicle_type": tr.vehicle_type,
            "length": tr.length,
            "width": tr.width,
            "samples": tr.samples.tolist(),
        }

    return {
        "id": s.id,
        "friction_mu": s.friction_mu,
        "obstructions": [[list(p) for p in ob.polygon] for ob in s.obstructions],
        "ego": track(s.ego),
        "opponent": track(s.opponent),
        "meta": dict(s.meta),
    }


def load_scenario(path, strict: bool = True) -> Scenario:
    """Read, validate and resample a scenario file.

    :param path: scenario JSON file.
    :param strict: reject unknown keys instead of warning about them.
    :raises ScenarioParseError: the file is not valid JSON.
    :raises ScenarioValidationError: a model invariant is violated.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None
    return scenario_from_dict(obj, strict=strict)


def save_scenario(s: Scenario, path) -> None:
    s.validate()
    Path(path).write_text(json.dumps(scenario_to_dict(s)), encoding="utf-8")
