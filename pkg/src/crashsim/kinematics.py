"""Jerk-limited longitudinal braking: closed-form stopping distance and exact integration.

Deceleration values are positive numbers (m/s^2 of speed reduction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

G = 9.81


def effective_decel(commanded: float, mu: float) -> float:
    return min(commanded, mu * G)


@dataclass(frozen=True)
class StoppingProfile:
    v0: float
    commanded_decel: float
    jerk: float
    application_delay: float
    effective_decel: float
    distance: float
    time_to_stop: float


def _time_to_zero(v: float, a: float, j: float) -> float:
    """Smallest tau >= 0 with v - a*tau - j*tau^2/2 == 0, or inf."""
    if v <= 0:
        return 0.0
    if j == 0:
        return v / a if a > 0 else math.inf
    disc = a * a + 2 * j * v
    if disc < 0:
        return math.inf
    root = math.sqrt(disc)
    if a + root <= 0:
        return math.inf
    return 2 * v / (a + root)


def stopping_distance(
    v0: float,
    commanded_decel: float,
    jerk: float,
    application_delay: float,
    mu_assumed: float = 1.0,
    current_decel: float = 0.0,
) -> StoppingProfile:
    """Distance to standstill when a brake is requested now.

    Three phases: ``application_delay`` at the current deceleration (zero when not yet
    braking), a ramp at ``jerk`` to the friction-capped target, then constant
    deceleration. If the vehicle stops inside the ramp the jerk-limited closed form is
    used. A vehicle already braking harder than the target keeps its current level.
    """
    if v0 < 0:
        raise ValueError("v0 must be >= 0")
    if commanded_decel <= 0 or jerk <= 0:
        raise ValueError("commanded_decel and jerk must be positive")
    if mu_assumed <= 0 or application_delay < 0 or current_decel < 0:
        raise ValueError("mu_assumed must be positive, delay and current_decel non-negative")
    a_eff = effective_decel(commanded_decel, mu_assumed)
    target = max(a_eff, current_decel)
    dist, t, v, a = 0.0, 0.0, float(v0), float(current_decel)
    # delay at the current level
    tau = _time_to_zero(v, a, 0.0)
    if tau <= application_delay:
        return StoppingProfile(v0, commanded_decel, jerk, application_delay, a_eff, v * v / (2 * a) if v > 0 else 0.0, tau)
    dist += v * application_delay - a * application_delay**2 / 2
    v -= a * application_delay
    t += application_delay
    # ramp
    tr = (target - a) / jerk
    tau = _time_to_zero(v, a, jerk)
    if tau <= tr:
        dist += v * tau - a * tau**2 / 2 - jerk * tau**3 / 6
        return StoppingProfile(v0, commanded_decel, jerk, application_delay, a_eff, dist, t + tau)
    dist += v * tr - a * tr**2 / 2 - jerk * tr**3 / 6
    v -= a * tr + jerk * tr**2 / 2
    t += tr
    # constant deceleration
    dist += v * v / (2 * target)
    t += v / target
    return StoppingProfile(v0, commanded_decel, jerk, application_delay, a_eff, dist, t)


def stopping_distance_batch(v0, commanded_decel, jerk, application_delay, mu_assumed, current_decel=0.0) -> np.ndarray:
    """Vectorised :func:`stopping_distance` distance over arrays of ``v0``/``current_decel``."""
    v0 = np.asarray(v0, float)
    a0 = np.broadcast_to(np.asarray(current_decel, float), v0.shape)
    a_eff = effective_decel(commanded_decel, mu_assumed)
    target = np.maximum(a_eff, a0)
    td = application_delay
    with np.errstate(divide="ignore", invalid="ignore"):
        # stop during delay
        stop_in_delay = (a0 > 0) & (v0 - a0 * td <= 0)
        d_delay_stop = np.where(a0 > 0, v0 * v0 / (2 * a0), 0.0)
        d1 = v0 * td - a0 * td * td / 2
        v1 = v0 - a0 * td
        tr = (target - a0) / jerk
        v_ramp_end = v1 - a0 * tr - jerk * tr * tr / 2
        root = np.sqrt(a0 * a0 + 2 * jerk * np.maximum(v1, 0.0))
        tau = np.where(v1 > 0, 2 * v1 / (a0 + root), 0.0)
        d_ramp_stop = v1 * tau - a0 * tau**2 / 2 - jerk * tau**3 / 6
        d_ramp = v1 * tr - a0 * tr**2 / 2 - jerk * tr**3 / 6
        d_const = v_ramp_end**2 / (2 * target)
        full = np.where(v_ramp_end > 0, d1 + d_ramp + d_const, d1 + d_ramp_stop)
        out = np.where(stop_in_delay, d_delay_stop, full)
    return np.where(v0 <= 0, 0.0, out)


def advance(s: float, v: float, a: float, target: float, jerk: float, tau: float) -> tuple[float, float, float]:
    """Integrate exactly over ``tau`` seconds while deceleration ``a`` slews toward ``target``.

    Splits the interval at ramp completion and at standstill. Returns (s, v, a).
    """
    while tau > 0 and v > 0:
        if a < target:
            j, t_ramp = jerk, (target - a) / jerk
        elif a > target:
            j, t_ramp = -jerk, (a - target) / jerk
        else:
            j, t_ramp = 0.0, math.inf
        h = min(tau, t_ramp)
        t_stop = _time_to_zero(v, a, j)
        if t_stop <= h:
            s += v * t_stop - a * t_stop**2 / 2 - j * t_stop**3 / 6
            return s, 0.0, a + j * t_stop
        s += v * h - a * h * h / 2 - j * h**3 / 6
        v -= a * h + j * h * h / 2
        a = target if h == t_ramp else a + j * h
        tau -= h
    return s, max(v, 0.0), a


@dataclass(frozen=True)
class BrakeSegment:
    t0: float
    s0: float
    v0: float
    a0: float
    jerk: float


class BrakePlan:
    """Piecewise-polynomial motion from brake application to standstill.

    ``events`` are (time, target_decel, jerk) triples, already friction-capped; the target
    at any instant is the largest one seen so far.
    """

    def __init__(self, t_start: float, s_start: float, v_start: float, events):
        events = sorted(events)
        if not events or events[0][0] < t_start - 1e-12:
            raise ValueError("first event must coincide with the plan start")
        segs: list[BrakeSegment] = []
        t, s, v, a = t_start, s_start, v_start, 0.0
        target, jerk = 0.0, 1.0
        i = 0
        while v > 0:
            while i < len(events) and events[i][0] <= t + 1e-12:
                if events[i][1] > target:
                    target, jerk = events[i][1], events[i][2]
                i += 1
            t_next = events[i][0] if i < len(events) else math.inf
            if a < target:
                j, t_ramp = jerk, (target - a) / jerk
            elif a > target:
                j, t_ramp = -jerk, (a - target) / jerk
            else:
                j, t_ramp = 0.0, math.inf
            h = min(t_ramp, t_next - t)
            t_stop = _time_to_zero(v, a, j)
            segs.append(BrakeSegment(t, s, v, a, j))
            if t_stop <= h:
                s += v * t_stop - a * t_stop**2 / 2 - j * t_stop**3 / 6
                t += t_stop
                a += j * t_stop
                v = 0.0
                break
            if math.isinf(h):
                raise RuntimeError("brake plan never reaches standstill")
            s += v * h - a * h * h / 2 - j * h**3 / 6
            v -= a * h + j * h * h / 2
            a = target if h == t_ramp else a + j * h
            t += h
        self.t_start = t_start
        self.t_stop = t
        self.s_stop = s
        self.a_stop = a
        self.segments = segs
        self._t0 = np.array([g.t0 for g in segs])

    def evaluate(self, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arc position, speed and deceleration at ``times`` (all >= t_start)."""
        times = np.asarray(times, float)
        if not self.segments:
            n = times.shape
            return np.full(n, self.s_stop), np.zeros(n), np.full(n, self.a_stop)
        idx = np.clip(np.searchsorted(self._t0, times, side="right") - 1, 0, len(self.segments) - 1)
        t0 = self._t0[idx]
        s0 = np.array([g.s0 for g in self.segments])[idx]
        v0 = np.array([g.v0 for g in self.segments])[idx]
        a0 = np.array([g.a0 for g in self.segments])[idx]
        j = np.array([g.jerk for g in self.segments])[idx]
        tau = times - t0
        s = s0 + v0 * tau - a0 * tau**2 / 2 - j * tau**3 / 6
        v = v0 - a0 * tau - j * tau**2 / 2
        a = a0 + j * tau
        stopped = times >= self.t_stop
        s = np.where(stopped, self.s_stop, s)
        v = np.where(stopped, 0.0, np.maximum(v, 0.0))
        a = np.where(stopped, self.a_stop, a)
        return s, v, a
