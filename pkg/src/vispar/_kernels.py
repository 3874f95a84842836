"""Compiled march over one stored time interval.

Mirrors :func:`vispar.scheme.rhs_field` / :func:`vispar.scheme.step` node by node
on a flattened grid; tests compare the two paths. The node loop is written out
by hand: helpers that take arrays are not inlined by numba and pay a reference
count round trip per call, which dominated the run time.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# operator kind codes
PUCCI_PLUS = 0
PUCCI_MINUS = 1
LINEAR = 2
BELLMAN = 3

# gradient modes
CENTERED = 0
FORWARD = 1
UPWIND = 2

OK = 0
NONFINITE = 1
STALLED = 2


@njit(cache=True)
def _g(p, gamma, eps2):
    if gamma == 0.0:
        return 1.0
    if gamma == 1.0:
        return math.sqrt(eps2 + p * p)
    return (eps2 + p * p) ** (0.5 * gamma)


@njit(cache=True)
def _gslope(p, gamma, eps2):
    if gamma == 0.0:
        return 0.0
    if p > 0.0:
        return abs(gamma) * p * (eps2 + p * p) ** (0.5 * gamma - 1.0)
    if eps2 > 0.0 or gamma > 1.0:
        return 0.0
    if gamma == 1.0:
        return 1.0
    return np.inf


@njit(cache=True)
def _pucci_eig(m00, m11, m01, dim, hi, lo):
    if dim == 1:
        e0 = m00
        e1 = 0.0
    else:
        mean = 0.5 * (m00 + m11)
        rad = math.hypot(0.5 * (m00 - m11), m01)
        e0 = mean - rad
        e1 = mean + rad
    if abs(e0) <= 1e-14:
        e0 = 0.0
    if abs(e1) <= 1e-14:
        e1 = 0.0
    return hi * (max(e0, 0.0) + max(e1, 0.0)) + lo * (min(e0, 0.0) + min(e1, 0.0))


@njit(cache=True, nogil=True)
def march_interval(u, b0, b1, f0, f1, has_src, interior, others, span, h, dim, ax_off, off_pp, off_pm,
                   kind, wide, dirs_off, dirs_e2, is_axis, weights, mats, lam, Lam, theta, scale, offset,
                   gmode, gamma, eps2, safety, stats):
    """Advance ``u`` (flat, modified in place) across one stored interval of length ``span``.

    Boundary values and the source are interpolated linearly between the two
    stored levels. ``stats`` receives [substeps, dt_min, dt_max, g_max, grad_max].
    Returns a status code.
    """
    n_int = interior.shape[0]
    vals = np.empty(n_int)
    h2 = h * h
    sqn = math.sqrt(dim)
    cfl_coef = 2.0 * dim * Lam / h2
    n_dirs = dirs_off.shape[0]
    K = weights.shape[0] if wide else mats.shape[0]
    hi = Lam if kind == PUCCI_PLUS else lam
    lo = lam if kind == PUCCI_PLUS else Lam
    o0 = ax_off[0]
    o1 = ax_off[1] if dim == 2 else 0
    a00 = mats[0, 0, 0]
    t = 0.0
    while t < span:
        g_max = 0.0
        rate = 0.0
        p_max = 0.0
        frac = t / span
        for j in range(n_int):
            i = interior[j]
            c = u[i]
            # -- operator ------------------------------------------------------
            if wide:
                if kind == PUCCI_PLUS or kind == PUCCI_MINUS:
                    F = 0.0
                    for d in range(n_dirs):
                        if is_axis[d]:
                            o = dirs_off[d]
                            delta = (u[i + o] - 2.0 * c + u[i - o]) / (h2 * dirs_e2[d])
                            F += hi * delta if delta > 0 else lo * delta
                elif kind == LINEAR:
                    F = 0.0
                    for d in range(n_dirs):
                        o = dirs_off[d]
                        F += weights[0, d] * (u[i + o] - 2.0 * c + u[i - o]) / (h2 * dirs_e2[d])
                else:
                    top = -np.inf
                    for k in range(K):
                        acc = 0.0
                        for d in range(n_dirs):
                            o = dirs_off[d]
                            acc += weights[k, d] * (u[i + o] - 2.0 * c + u[i - o]) / (h2 * dirs_e2[d])
                        z = scale * acc / theta
                        if z > top:
                            top = z
                    tot = 0.0
                    for k in range(K):
                        acc = 0.0
                        for d in range(n_dirs):
                            o = dirs_off[d]
                            acc += weights[k, d] * (u[i + o] - 2.0 * c + u[i - o]) / (h2 * dirs_e2[d])
                        tot += math.exp(scale * acc / theta - top)
                    F = (theta * (top + math.log(tot)) - offset) / scale
            else:
                m00 = (u[i + o0] - 2.0 * c + u[i - o0]) / h2
                m11 = 0.0
                m01 = 0.0
                if dim == 2:
                    m11 = (u[i + o1] - 2.0 * c + u[i - o1]) / h2
                    m01 = (u[i + off_pp] - u[i + off_pm] - u[i - off_pm] + u[i - off_pp]) / (4.0 * h2)
                if kind == PUCCI_PLUS or kind == PUCCI_MINUS:
                    F = _pucci_eig(m00, m11, m01, dim, hi, lo)
                elif kind == LINEAR:
                    if dim == 1:
                        F = a00 * m00
                    else:
                        F = a00 * m00 + mats[0, 1, 1] * m11 + 2.0 * mats[0, 0, 1] * m01
                else:
                    top = -np.inf
                    for k in range(K):
                        tr = mats[k, 0, 0] * m00
                        if dim == 2:
                            tr += mats[k, 1, 1] * m11 + 2.0 * mats[k, 0, 1] * m01
                        z = scale * tr / theta
                        if z > top:
                            top = z
                    tot = 0.0
                    for k in range(K):
                        tr = mats[k, 0, 0] * m00
                        if dim == 2:
                            tr += mats[k, 1, 1] * m11 + 2.0 * mats[k, 0, 1] * m01
                        tot += math.exp(scale * tr / theta - top)
                    F = (theta * (top + math.log(tot)) - offset) / scale
            # -- degeneracy factor -----------------------------------------------
            slope = 0.0
            if gamma == 0.0:
                # g == 1: no gradient needed on the hot path
                value = F
                g_use = 1.0
                p = 0.0
            elif gmode == UPWIND:
                up2 = 0.0
                down2 = 0.0
                for k in range(dim):
                    o = o0 if k == 0 else o1
                    a = u[i + o] - c
                    b = u[i - o] - c
                    up = max(max(a, b), 0.0) / h
                    down = max(max(-a, -b), 0.0) / h
                    up2 += up * up
                    down2 += down * down
                if gamma >= 0:
                    p_hi = math.sqrt(up2)
                    p_lo = math.sqrt(down2)
                else:
                    p_hi = math.sqrt(down2)
                    p_lo = math.sqrt(up2)
                g_hi = _g(p_hi, gamma, eps2)
                g_lo = _g(p_lo, gamma, eps2)
                if F > 0:
                    value = g_hi * F
                    slope = _gslope(p_hi, gamma, eps2) * F
                elif F < 0:
                    value = g_lo * F
                    slope = -_gslope(p_lo, gamma, eps2) * F
                else:
                    value = 0.0
                g_use = max(g_hi, g_lo)
                p = max(p_hi, p_lo)
            else:
                p2 = 0.0
                for k in range(dim):
                    o = o0 if k == 0 else o1
                    if gmode == FORWARD:
                        q = (u[i + o] - c) / h
                    else:
                        q = (u[i + o] - u[i - o]) / (2.0 * h)
                    p2 += q * q
                p = math.sqrt(p2)
                g_use = _g(p, gamma, eps2)
                value = g_use * F
            if has_src:
                value += (1.0 - frac) * f0[i] + frac * f1[i]
            vals[j] = value
            if g_use > g_max:
                g_max = g_use
            if slope > 0.0:
                r = cfl_coef * g_use + slope * sqn / h
                if r > rate:
                    rate = r
            if p > p_max:
                p_max = p
        r = cfl_coef * g_max
        if r > rate:
            rate = r
        remaining = span - t
        if rate > 0.0:
            limit = safety / rate
        else:
            limit = np.inf
        if not limit > 0.0:
            return STALLED
        if limit >= remaining:
            nsub = 1
        else:
            nsub = max(1, math.ceil(remaining / limit * (1.0 - 1e-12)))
        if nsub == 1:
            t_next = span
        else:
            t_next = t + remaining / nsub
        step_dt = t_next - t
        bad = False
        for j in range(n_int):
            i = interior[j]
            v = u[i] + step_dt * vals[j]
            u[i] = v
            if not math.isfinite(v):
                bad = True
        if bad:
            return NONFINITE
        if t_next >= span:
            for j in range(others.shape[0]):
                u[others[j]] = b1[others[j]]
        else:
            w = t_next / span
            for j in range(others.shape[0]):
                o = others[j]
                u[o] = (1.0 - w) * b0[o] + w * b1[o]
        t = t_next
        stats[0] += 1
        if step_dt < stats[1]:
            stats[1] = step_dt
        if step_dt > stats[2]:
            stats[2] = step_dt
        if g_max > stats[3]:
            stats[3] = g_max
        if p_max > stats[4]:
            stats[4] = p_max
    return OK


@njit(cache=True, nogil=True)
def march_linear_interval(u, b0, b1, f0, f1, has_src, interior, others, span, offs, coefs, rate, safety,
                          stats):
    """Same march for g == 1 and a linear operator: a fixed stencil and a fixed stable step."""
    n_int = interior.shape[0]
    n_c = offs.shape[0]
    vals = np.empty(n_int)
    limit = safety / rate if rate > 0.0 else np.inf
    t = 0.0
    while t < span:
        frac = t / span
        for j in range(n_int):
            i = interior[j]
            acc = 0.0
            for c in range(n_c):
                acc += coefs[c] * u[i + offs[c]]
            if has_src:
                acc += (1.0 - frac) * f0[i] + frac * f1[i]
            vals[j] = acc
        remaining = span - t
        if limit >= remaining:
            t_next = span
        else:
            t_next = t + remaining / max(1, math.ceil(remaining / limit * (1.0 - 1e-12)))
        step_dt = t_next - t
        bad = False
        for j in range(n_int):
            i = interior[j]
            v = u[i] + step_dt * vals[j]
            u[i] = v
            if not math.isfinite(v):
                bad = True
        if bad:
            return NONFINITE
        if t_next >= span:
            for j in range(others.shape[0]):
                u[others[j]] = b1[others[j]]
        else:
            w = t_next / span
            for j in range(others.shape[0]):
                o = others[j]
                u[o] = (1.0 - w) * b0[o] + w * b1[o]
        t = t_next
        stats[0] += 1
        if step_dt < stats[1]:
            stats[1] = step_dt
        if step_dt > stats[2]:
            stats[2] = step_dt
        if stats[3] < 1.0:
            stats[3] = 1.0
    return OK
