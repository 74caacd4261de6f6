"""Constant-velocity crash prediction and the TTC / TTB / TTE criticality measures.

The opponent tube is the band of the opponent's width around its straight predicted
path. Ego distances are measured from the ego front face (its two front corners) along
the ego heading, so ``tube_entry`` is how far the ego may still travel before any part
of its front enters the tube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import StoppingProfile, stopping_distance, stopping_distance_batch  # noqa: F401

HORIZON = 5.0
PARALLEL_EPS = 1e-9


@dataclass(frozen=True)
class CrashPrediction:
    """Result of one prediction.

    ``ttc`` is the time for the ego reference point to reach the crossing of the two
    centre lines (``crash_point``); ``ttc_entry`` is the time for the ego front to reach
    the tube, which is what the brake time windows are measured against.
    """

    predicted: bool
    crash_point: tuple[float, float] = (math.nan, math.nan)
    ttc: float = math.nan
    ttc_entry: float = math.nan
    x_crash: float = math.nan
    tube_entry: float = math.nan
    tube_exit: float = math.nan


NO_CRASH = CrashPrediction(False)


def _band_interval(q1: float, q2: float, rate: float, half: float) -> tuple[float, float]:
    # travel range over which either of two corners (lateral offsets q1, q2) lies in |q| <= half
    lo1, hi1 = sorted(((-half - q1) / rate, (half - q1) / rate))
    lo2, hi2 = sorted(((-half - q2) / rate, (half - q2) / rate))
    return min(lo1, lo2), max(hi1, hi2)


def predict_crash(ego, ego_dims, opp, opp_dims, safety_dist: float = 0.5, horizon: float = HORIZON) -> CrashPrediction:
    """Predict a front crash of the ego into the opponent's tube.

    ``ego`` and ``opp`` are :class:`~crashsim.scenario.TrajectorySample`-like states, the
    dims are (length, width). Both vehicles keep speed and heading. A crash is predicted
    when the ego front enters the tube within ``horizon`` while the opponent already
    occupies the ego's corridor at that crossing.
    """
    le, we = ego_dims
    lo, wo = opp_dims
    ce, se_ = math.cos(ego.heading), math.sin(ego.heading)
    co, so = math.cos(opp.heading), math.sin(opp.heading)
    k = -so * ce + co * se_  # lateral drift wrt the opponent line per metre of ego travel
    if abs(k) < PARALLEL_EPS or ego.speed <= 0:
        return NO_CRASH
    # ego front corners, lateral offsets from the opponent centre line
    fx, fy = ego.x + le / 2 * ce, ego.y + le / 2 * se_
    q = [-so * (fx + sgn * we / 2 * -se_ - opp.x) + co * (fy + sgn * we / 2 * ce - opp.y) for sgn in (1, -1)]
    s_in, s_out = _band_interval(q[0], q[1], k, wo / 2)
    s_out += le
    # opponent front corners, lateral offsets from the ego centre line
    gx, gy = opp.x + lo / 2 * co, opp.y + lo / 2 * so
    m = -k
    r = [-se_ * (gx + sgn * wo / 2 * -so - ego.x) + ce * (gy + sgn * wo / 2 * co - ego.y) for sgn in (1, -1)]
    u_in, u_out = _band_interval(r[0], r[1], m, we / 2)
    u_out += lo

    t_e_in, t_e_out = s_in / ego.speed, s_out / ego.speed
    if opp.speed > 0:
        t_o_in, t_o_out = u_in / opp.speed, u_out / opp.speed
    elif u_in <= 0 <= u_out:
        t_o_in, t_o_out = -math.inf, math.inf
    else:
        t_o_in = t_o_out = math.inf

    # centre-line crossing
    cross = ce * so - se_ * co
    a = ((opp.x - ego.x) * so - (opp.y - ego.y) * co) / cross
    point = (ego.x + a * ce, ego.y + a * se_)
    predicted = t_o_in <= t_e_in <= t_o_out and t_e_in <= horizon and t_e_out >= 0
    return CrashPrediction(
        predicted=bool(predicted),
        crash_point=point,
        ttc=max(a, 0.0) / ego.speed,
        ttc_entry=max(s_in, 0.0) / ego.speed,
        x_crash=max(s_in - safety_dist, 0.0),
        tube_entry=s_in,
        tube_exit=s_out,
    )


def predict_crash_batch(ex, ey, eh, ev, ego_dims, ox, oy, oh, ov, opp_dims, safety_dist=0.5, horizon=HORIZON) -> dict:
    """Vectorised :func:`predict_crash`. Returns arrays keyed like the dataclass fields.

    Non-predicted entries still carry their geometric values where defined (NaN for
    parallel paths or a standing ego).
    """
    le, we = ego_dims
    lo, wo = opp_dims
    ce, se_ = np.cos(eh), np.sin(eh)
    co, so = np.cos(oh), np.sin(oh)
    k = -so * ce + co * se_
    valid = (np.abs(k) >= PARALLEL_EPS) & (ev > 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ks = np.where(valid, k, np.nan)
        fx, fy = ex + le / 2 * ce, ey + le / 2 * se_
        q1 = -so * (fx - we / 2 * se_ - ox) + co * (fy + we / 2 * ce - oy)
        q2 = -so * (fx + we / 2 * se_ - ox) + co * (fy - we / 2 * ce - oy)
        a1, b1 = (-wo / 2 - q1) / ks, (wo / 2 - q1) / ks
        a2, b2 = (-wo / 2 - q2) / ks, (wo / 2 - q2) / ks
        s_in = np.minimum(np.minimum(a1, b1), np.minimum(a2, b2))
        s_out = np.maximum(np.maximum(a1, b1), np.maximum(a2, b2)) + le
        gx, gy = ox + lo / 2 * co, oy + lo / 2 * so
        ms = -ks
        r1 = -se_ * (gx - wo / 2 * so - ex) + ce * (gy + wo / 2 * co - ey)
        r2 = -se_ * (gx + wo / 2 * so - ex) + ce * (gy - wo / 2 * co - ey)
        c1, d1 = (-we / 2 - r1) / ms, (we / 2 - r1) / ms
        c2, d2 = (-we / 2 - r2) / ms, (we / 2 - r2) / ms
        u_in = np.minimum(np.minimum(c1, d1), np.minimum(c2, d2))
        u_out = np.maximum(np.maximum(c1, d1), np.maximum(c2, d2)) + lo
        evs = np.where(valid, ev, np.nan)
        t_e_in, t_e_out = s_in / evs, s_out / evs
        moving = ov > 0
        inside = (u_in <= 0) & (u_out >= 0)
        t_o_in = np.where(moving, u_in / np.where(moving, ov, 1.0), np.where(inside, -np.inf, np.inf))
        t_o_out = np.where(moving, u_out / np.where(moving, ov, 1.0), np.inf)
        cross = ce * so - se_ * co
        a = ((ox - ex) * so - (oy - ey) * co) / np.where(valid, cross, np.nan)
        predicted = valid & (t_o_in <= t_e_in) & (t_e_in <= t_o_out) & (t_e_in <= horizon) & (t_e_out >= 0)
        return {
            "predicted": predicted,
            "crash_x": ex + a * ce,
            "crash_y": ey + a * se_,
            "ttc": np.maximum(a, 0.0) / evs,
            "ttc_entry": np.maximum(s_in, 0.0) / evs,
            "x_crash": np.maximum(s_in - safety_dist, 0.0),
            "tube_entry": s_in,
            "tube_exit": s_out,
        }


def time_to_brake(pred: CrashPrediction, profile: StoppingProfile) -> float:
    """Seconds left before the brake must fire; <= 0 means fire now.

    The ego is assumed to hold its current speed until activation, so the deadline is
    where the distance to the tube (net of the safety distance) equals the stopping
    distance. A standing ego never reaches the tube and gets +inf.
    """
    if not pred.predicted:
        raise ValueError("time_to_brake needs a predicted crash")
    if profile.v0 <= 0:
        return math.inf
    return (pred.x_crash - profile.distance) / profile.v0


def evasion_time(ego_width: float, tube_width: float, a_lat_max: float, margin: float = 0.5) -> float:
    if a_lat_max <= 0:
        raise ValueError("a_lat_max must be positive")
    y_req = (ego_width + tube_width) / 2 + margin
    return math.sqrt(2 * y_req / a_lat_max)


def time_to_evade(pred: CrashPrediction, ego_width: float, opp_width: float, a_lat_max: float = 5.0, margin: float = 0.5) -> float:
    """Time left for a swerve at ``a_lat_max`` to clear the tube; <= 0 means too late to evade."""
    if not pred.predicted:
        raise ValueError("time_to_evade needs a predicted crash")
    return pred.ttc_entry - evasion_time(ego_width, opp_width, a_lat_max, margin)
