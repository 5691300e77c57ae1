# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulator kernels; same API and results as ``_pykernels``."""

from libc.math cimport sqrt, pow, INFINITY
from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free


cdef inline bint _ahead(double pj, Py_ssize_t j, double pi, Py_ssize_t i) nogil:
    return pj > pi or (pj == pi and j > i)


def lane_neighbors(const int64_t[:] lane, const double[:] pos):
    cdef Py_ssize_t n = pos.shape[0], i, j, best
    leader = [-1] * n
    follower = [-1] * n
    for i in range(n):
        best = -1
        for j in range(n):
            if j == i or lane[j] != lane[i] or not _ahead(pos[j], j, pos[i], i):
                continue
            if best < 0 or _ahead(pos[best], best, pos[j], j):
                best = j
        if best >= 0:
            leader[i] = best
            follower[best] = i
    return leader, follower


def leader_follower_at(const int64_t[:] lane, const double[:] pos, int64_t target_lane,
                       double x, Py_ssize_t exclude):
    cdef Py_ssize_t n = pos.shape[0], j
    cdef Py_ssize_t lead = -1, foll = -1
    cdef double p
    for j in range(n):
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


cpdef double idm_scalar(double v, double gap, double v_lead, double v0, double T, double a,
                        double b, double s0, double delta, double a_min, double a_max):
    cdef double free_term = 1.0 - pow(v / v0, delta)
    cdef double acc, dyn, ratio
    if gap == INFINITY:
        acc = a * free_term
    elif gap <= 0.0:
        acc = a_min
    else:
        dyn = v * T + v * (v - v_lead) / (2.0 * sqrt(a * b))
        if dyn < 0.0:
            dyn = 0.0
        ratio = (s0 + dyn) / gap
        acc = a * (free_term - ratio * ratio)
    if acc < a_min:
        return a_min
    if acc > a_max:
        return a_max
    return acc


def idm_batch(const double[:] speed, const double[:] gap, const double[:] v_lead,
              double v0, double T, double a, double b, double s0, double delta,
              double a_min, double a_max):
    cdef Py_ssize_t n = speed.shape[0], i
    out = [0.0] * n
    for i in range(n):
        out[i] = idm_scalar(speed[i], gap[i], v_lead[i], v0, T, a, b, s0, delta, a_min, a_max)
    return out


def euler_step(double[::1] pos, double[::1] speed, const double[:] accel, double dt, double v_max):
    cdef Py_ssize_t n = pos.shape[0], i
    cdef double v, acc, v_new
    for i in range(n):
        v = speed[i]
        acc = accel[i]
        v_new = v + acc * dt
        if v_new < 0.0:
            pos[i] = pos[i] + v * v / (-2.0 * acc)
            speed[i] = 0.0
        else:
            pos[i] = pos[i] + v * dt + 0.5 * acc * dt * dt
            speed[i] = v_max if v_new > v_max else v_new


def collision_pairs(const int64_t[:] lane, const double[:] pos, const double[:] length):
    cdef Py_ssize_t n = pos.shape[0], i, j
    pairs = []
    for i in range(n):
        for j in range(n):
            if j == i or lane[j] != lane[i] or not _ahead(pos[j], j, pos[i], i):
                continue
            if pos[j] - length[j] - pos[i] < 0.0:
                pairs.append((i, j))
    pairs.sort()
    return pairs


def longest_slow_run(const double[:] pos, const double[:] speed, double v_thresh, double headway):
    cdef Py_ssize_t n = pos.shape[0], a, c, i, prev = -1, tmp
    cdef long best = 0, run = 0
    if n == 0:
        return 0
    cdef Py_ssize_t *order = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    if order == NULL:
        raise MemoryError()
    try:
        for a in range(n):
            order[a] = a
        # insertion sort, downstream first; ties by slot
        for a in range(1, n):
            tmp = order[a]
            c = a - 1
            while c >= 0 and (pos[order[c]] < pos[tmp] or (pos[order[c]] == pos[tmp] and order[c] > tmp)):
                order[c + 1] = order[c]
                c -= 1
            order[c + 1] = tmp
        for a in range(n):
            i = order[a]
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
    finally:
        free(order)
    return best


def nearest_within(const double[:] xs, const double[:] ys, const int64_t[:] ids,
                   Py_ssize_t ego, double radius, Py_ssize_t k):
    cdef Py_ssize_t n = xs.shape[0], j
    cdef double ex = xs[ego], ey = ys[ego], d, dx, dy
    cand = []
    for j in range(n):
        if j == ego:
            continue
        dx = xs[j] - ex
        dy = ys[j] - ey
        d = sqrt(dx * dx + dy * dy)
        if d <= radius:
            cand.append((d, ids[j], j))
    cand.sort()
    del cand[k:]
    return [c[2] for c in cand], [c[0] for c in cand]
