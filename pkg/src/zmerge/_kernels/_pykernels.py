"""Pure-Python simulator kernels.

Reference implementation and import-time fallback for ``_ckernels``. Both
modules must return bitwise-identical results; the test-suite checks this.
Vehicles are passed as parallel sequences (numpy arrays or lists) indexed by
slot; ``-1`` means "no vehicle".
"""

import math

INF = math.inf


def _seq(a):
    return a.tolist() if hasattr(a, "tolist") else a


def _order(lane, pos):
    return sorted(range(len(pos)), key=lambda i: (lane[i], pos[i], i))


def lane_neighbors(lane, pos):
    """Per-slot index of the same-lane leader and follower.

    Vehicles are ordered by ``(pos, slot)`` within a lane, so coincident
    positions still get a well-defined leader.
    """
    lane, pos = _seq(lane), _seq(pos)
    n = len(pos)
    leader = [-1] * n
    follower = [-1] * n
    order = _order(lane, pos)
    for a, b in zip(order, order[1:]):
        if lane[a] == lane[b]:
            leader[a] = b
            follower[b] = a
    return leader, follower


def leader_follower_at(lane, pos, target_lane, x, exclude):
    """Nearest vehicle at-or-ahead of ``x`` and strictly behind it on ``target_lane``.

    ``exclude`` (a slot index or -1) is ignored, which lets a vehicle query its
    own lane without seeing itself.
    """
    lane, pos = _seq(lane), _seq(pos)
    lead = -1
    foll = -1
    for j in range(len(pos)):
        if j == exclude or lane[j] != target_lane:
            continue
        p = pos[j]
        if p >= x:
            if lead < 0 or p < pos[lead]:
                lead = j
        else:
            if foll < 0 or p > pos[foll]:
                foll = j
    return lead, foll


def idm_scalar(v, gap, v_lead, v0, T, a, b, s0, delta, a_min, a_max):
    """IDM acceleration, clipped to ``[a_min, a_max]``; ``gap=inf`` means free road."""
    free = 1.0 - (v / v0) ** delta
    if gap == INF:
        acc = a * free
    elif gap <= 0.0:
        acc = a_min
    else:
        dyn = v * T + v * (v - v_lead) / (2.0 * math.sqrt(a * b))
        if dyn < 0.0:
            dyn = 0.0
        s_star = s0 + dyn
        ratio = s_star / gap
        acc = a * (free - ratio * ratio)
    if acc < a_min:
        return a_min
    if acc > a_max:
        return a_max
    return acc


def idm_batch(speed, gap, v_lead, v0, T, a, b, s0, delta, a_min, a_max):
    speed, gap, v_lead = _seq(speed), _seq(gap), _seq(v_lead)
    return [idm_scalar(speed[i], gap[i], v_lead[i], v0, T, a, b, s0, delta, a_min, a_max)
            for i in range(len(speed))]


def euler_step(pos, speed, accel, dt, v_max):
    """Advance one tick in place; a vehicle that would reverse stops instead."""
    for i in range(len(pos)):
        v = float(speed[i])
        acc = float(accel[i])
        v_new = v + acc * dt
        if v_new < 0.0:
            # stop within the tick: travel v^2 / (2|a|)
            pos[i] = float(pos[i]) + v * v / (-2.0 * acc)
            speed[i] = 0.0
        else:
            pos[i] = float(pos[i]) + v * dt + 0.5 * acc * dt * dt
            speed[i] = v_max if v_new > v_max else v_new


def collision_pairs(lane, pos, length):
    """Sorted ``(follower, leader)`` slot pairs on one lane whose bumper gap is negative."""
    lane, pos, length = _seq(lane), _seq(pos), _seq(length)
    order = _order(lane, pos)
    pairs = []
    n = len(order)
    for a in range(n):
        i = order[a]
        for c in range(a + 1, n):
            j = order[c]
            if lane[j] != lane[i]:
                break
            if pos[j] - length[j] - pos[i] < 0.0:
                pairs.append((i, j))
    pairs.sort()
    return pairs


def longest_slow_run(pos, speed, v_thresh, headway):
    """Longest run of position-consecutive vehicles, all slower than ``v_thresh``,
    with successive front-to-front spacing below ``headway``."""
    pos, speed = _seq(pos), _seq(speed)
    order = sorted(range(len(pos)), key=lambda i: (-pos[i], i))
    best = 0
    run = 0
    prev = -1
    for i in order:
        if speed[i] < v_thresh:
            if run > 0 and pos[prev] - pos[i] < headway:
                run += 1
            else:
                run = 1
            if run > best:
                best = run
        else:
            run = 0
        prev = i
    return best


def nearest_within(xs, ys, ids, ego, radius, k):
    """Slots of up to ``k`` vehicles within ``radius`` of slot ``ego``.

    Sorted by (distance, id); the ego slot is never returned.
    """
    xs, ys, ids = _seq(xs), _seq(ys), _seq(ids)
    ex = xs[ego]
    ey = ys[ego]
    cand = []
    for j in range(len(xs)):
        if j == ego:
            continue
        d = math.sqrt((xs[j] - ex) * (xs[j] - ex) + (ys[j] - ey) * (ys[j] - ey))
        if d <= radius:
            cand.append((d, ids[j], j))
    cand.sort()
    cand = cand[:k]
    return [c[2] for c in cand], [c[0] for c in cand]
