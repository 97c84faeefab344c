"""Compiled inner loops for the semi-Lagrangian steps.

Positions are handled in index units: a foot point ``s`` means the abscissa
``s * spacing``.  Keeping the node index exact makes the zero-velocity foot land
exactly on its node and makes mirrored velocity grids produce bitwise-identical
feet, which the forward/backward duality relies on.
"""

import math

import numpy as np
from numba import njit

@njit(cache=True)
def interp_index(u, s):
    """Periodic linear interpolation of ``u`` at fractional index ``s``."""
    n = u.shape[0]
    k = math.floor(s)
    th = s - k
    i0 = int(k) % n
    i1 = i0 + 1
    if i1 == n:
        i1 = 0
    return (1.0 - th) * u[i0] + th * u[i1]


@njit(cache=True)
def _local_quadratic(vel, row, j, v):
    # Quadratic through the three table entries centred on j (uniform spacing).
    t = (v - vel[j]) / (vel[j + 1] - vel[j])
    l0 = row[j - 1]
    l1 = row[j]
    l2 = row[j + 1]
    return l1 + 0.5 * t * (l2 - l0) + 0.5 * t * t * (l2 - 2.0 * l1 + l0)


@njit(cache=True)
def _piece_min(w, i, feet_sign, r, dt, vel, row, jc, p, q, ip, iq, best, vbest):
    # On [p, q] the interpolant term is linear in v and dt * L is a convex
    # quadratic, so the minimiser is an endpoint or the stationary point.
    width = q - p
    if width <= 0.0:
        return best, vbest
    dv = vel[jc + 1] - vel[jc]
    curv = row[jc + 1] - 2.0 * row[jc] + row[jc - 1]
    if curv <= 0.0:
        return best, vbest
    slope = (iq - ip) / width
    t = -(slope * dv / dt + 0.5 * (row[jc + 1] - row[jc - 1])) / curv
    v = vel[jc] + t * dv
    if p < v < q:
        f = interp_index(w, i + feet_sign * (v * r)) + dt * _local_quadratic(vel, row, jc, v)
        if f < best:
            best = f
            vbest = v
    return best, vbest


@njit(cache=True)
def _interval_min(w, i, feet_sign, r, dt, vel, row, j, ij, ij1, best, vbest):
    # Exact minimum over [vel[j], vel[j+1]].  L is the quadratic centred on j
    # for the left half and on j + 1 for the right half; the interpolant term
    # is linear between the nodes crossed by the foot.
    m = vel.shape[0]
    n = w.shape[0]
    a = vel[j]
    b = vel[j + 1]
    mid = 0.5 * (a + b)
    sa = i + feet_sign * (a * r)
    sb = i + feet_sign * (b * r)
    if feet_sign > 0:
        k_first = math.floor(sa) + 1
        k_last = math.ceil(sb) - 1
        k_step = 1
    else:
        k_first = math.ceil(sa) - 1
        k_last = math.floor(sb) + 1
        k_step = -1
    n_kinks = max((k_last - k_first) * k_step + 1, 0)
    p = a
    ip = ij
    q_idx = 0
    mid_done = False
    while True:
        # Next breakpoint in increasing v: a crossed node, the midpoint, or b.
        q = b
        iq = ij1
        is_node = False
        while q_idx < n_kinks:
            k = k_first + q_idx * k_step
            qk = feet_sign * ((k - i) / r)
            if qk <= p:
                q_idx += 1
                continue
            if qk < b:
                q = qk
                is_node = True
            break
        if not mid_done and mid <= q:
            q = mid
            is_node = False
            iq = interp_index(w, i + feet_sign * (mid * r))
            mid_done = True
        elif is_node:
            iq = w[(k_first + q_idx * k_step) % n]
            q_idx += 1
        jc = j if q <= mid else j + 1
        jc = min(max(jc, 1), m - 2)
        best, vbest = _piece_min(w, i, feet_sign, r, dt, vel, row, jc, p, q, ip, iq, best, vbest)
        f = ip + dt * _local_quadratic(vel, row, jc, p)
        if f < best:
            best = f
            vbest = p
        f = iq + dt * _local_quadratic(vel, row, jc, q)
        if f < best:
            best = f
            vbest = q
        if q >= b:
            break
        p = q
        ip = iq
    return best, vbest


@njit(cache=True)
def relax_min(w, lam, vel, table, slack, r, dt, c, lam_sign, feet_sign, refine, out, vout):
    """One implicit semi-Lagrangian step written as a minimisation.

    For every node ``i`` computes

        best = min_v  w(i + feet_sign * v * r) + dt * L(i, v)
        out[i] = (best + dt * c) / (1 + lam_sign * dt * lam[i])

    Without ``refine`` the minimum is over the tabulated velocities.  With it,
    ``L`` is extended between table entries by local quadratics and the
    minimum is exact over the whole velocity range.  Intervals are skipped
    when a lower bound rules them out: on an interval the foot does not
    cross a node, the objective is at least the smaller endpoint value minus
    ``dt * slack[i, j]``, where ``slack`` bounds how far the extension dips
    below the chord.  The result is a minimum of one fixed function of ``v``,
    so the step stays monotone in ``w``.

    The minimising velocity of each node is written to ``vout``.  Returns the
    number of nodes whose scan minimiser sat on the edge of the velocity range.
    """
    n = w.shape[0]
    m = vel.shape[0]
    hits = 0
    fv = np.empty(m)
    iv = np.empty(m)
    sv = np.empty(m)
    for i in range(n):
        row = table[i]
        best = np.inf
        jbest = 0
        for j in range(m):
            s = i + feet_sign * (vel[j] * r)
            sv[j] = s
            iv[j] = interp_index(w, s)
            f = iv[j] + dt * row[j]
            fv[j] = f
            if f < best:
                best = f
                jbest = j
        if jbest == 0 or jbest == m - 1:
            hits += 1
        vbest = vel[jbest]
        if refine:
            srow = slack[i]
            for j in range(m - 1):
                lo = min(fv[j], fv[j + 1]) - dt * srow[j]
                if lo >= best:
                    if math.floor(sv[j]) == math.floor(sv[j + 1]) or math.ceil(sv[j]) == math.ceil(sv[j + 1]):
                        continue
                    # The foot crosses nodes: bound the interpolant by its node values.
                    k0 = min(math.ceil(sv[j]), math.ceil(sv[j + 1]))
                    k1 = max(math.floor(sv[j]), math.floor(sv[j + 1]))
                    wl = min(iv[j], iv[j + 1])
                    for k in range(k0, k1 + 1):
                        wk = w[k % n]
                        if wk < wl:
                            wl = wk
                    if wl + dt * (min(row[j], row[j + 1]) - srow[j]) >= best:
                        continue
                best, vbest = _interval_min(w, i, feet_sign, r, dt, vel, row, j, iv[j], iv[j + 1], best, vbest)
        vout[i] = vbest
        out[i] = (best + dt * c) / (1.0 + lam_sign * dt * lam[i])
    return hits


def chord_slack(table):
    """Per-interval bound on how far the quadratic extension of ``L`` dips below its chord."""
    n, m = table.shape
    d2 = np.zeros((n, m))
    d2[:, 1:-1] = table[:, 2:] - 2.0 * table[:, 1:-1] + table[:, :-2]
    d2[:, 0] = d2[:, 1]
    d2[:, -1] = d2[:, -2]
    return np.ascontiguousarray(np.maximum(np.maximum(d2[:, :-1], d2[:, 1:]), 0.0) / 8.0)


@njit(cache=True)
def interp_many(u, s, out):
    for k in range(s.shape[0]):
        out[k] = interp_index(u, s[k])
