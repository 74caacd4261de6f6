"""Independent reference computations used by the tests."""

import math

import numpy as np

G = 9.81


def integrate_stopping_distance(v0, decel, jerk, delay, mu, dt=1e-3):
    """Stopping distance by fixed-step trapezoidal integration of the jerk-limited profile.

    All arguments broadcast; the deceleration is 0 during ``delay``, then ramps at ``jerk``
    to min(decel, mu * g).
    """
    v0, decel, jerk, delay, mu = np.broadcast_arrays(*(np.asarray(a, float) for a in (v0, decel, jerk, delay, mu)))
    target = np.minimum(decel, mu * G)
    v = v0.copy()
    s = np.zeros_like(v)
    done = v <= 0
    t = 0.0

    def accel(t):
        return np.where(t < delay, 0.0, np.minimum(target, jerk * (t - delay)))

    a = accel(t)
    while not done.all():
        a1 = accel(t + dt)
        v1 = v - (a + a1) / 2 * dt
        stop = (~done) & (v1 <= 0)
        go = (~done) & ~stop
        s = np.where(go, s + (v + v1) / 2 * dt, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(stop, v / (v - v1), 0.0)
        s = np.where(stop, s + v * f * dt / 2, s)
        done = done | stop
        v, a, t = np.where(go, v1, v), a1, t + dt
    return s


def _inside(box, px, py, tol=0.0):
    c, s = math.cos(box.heading), math.sin(box.heading)
    dx, dy = px - box.center[0], py - box.center[1]
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= box.length / 2 + tol) & (np.abs(v) <= box.width / 2 + tol)


def _sample_points(box, n: int, rng):
    """Interior samples plus dense boundary samples of ``box`` in world coordinates."""
    u = rng.uniform(-0.5, 0.5, n) * box.length
    v = rng.uniform(-0.5, 0.5, n) * box.width
    k = n // 4
    edge = np.linspace(-0.5, 0.5, k)
    u = np.concatenate([u, edge * box.length, edge * box.length, np.full(k, box.length / 2), np.full(k, -box.length / 2)])
    v = np.concatenate([v, np.full(k, box.width / 2), np.full(k, -box.width / 2), edge * box.width, edge * box.width])
    c, s = math.cos(box.heading), math.sin(box.heading)
    return box.center[0] + u * c - v * s, box.center[1] + u * s + v * c


def point_oracle(a, b, n=4000, rng=None) -> bool:
    rng = rng or np.random.default_rng(0)
    bx, by = _sample_points(b, n, rng)
    if _inside(a, bx, by).any():
        return True
    ax, ay = _sample_points(a, n, rng)
    return bool(_inside(b, ax, ay).any())


def separation(a, b) -> float:
    """Signed SAT gap: > 0 separated, < 0 penetrating."""
    best = -math.inf
    for box in (a, b):
        c, s = math.cos(box.heading), math.sin(box.heading)
        for ax, ay in ((c, s), (-s, c)):
            proj = []
            for bb in (a, b):
                cb, sb = math.cos(bb.heading), math.sin(bb.heading)
                mid = bb.center[0] * ax + bb.center[1] * ay
                ext = bb.length / 2 * abs(cb * ax + sb * ay) + bb.width / 2 * abs(-sb * ax + cb * ay)
                proj.append((mid - ext, mid + ext))
            gap = max(proj[1][0] - proj[0][1], proj[0][0] - proj[1][1])
            best = max(best, gap)
    return best
