"""``@njit`` loop kernels (default backend)."""
import math

import numpy as np
from numba import njit

OVERLAP_EPS = 1e-9


@njit(cache=True)
def target_drift(targets, herders, lam):
    out = np.zeros((targets.shape[0], 2))
    for a in range(targets.shape[0]):
        fx = 0.0
        fy = 0.0
        for i in range(herders.shape[0]):
            dx = targets[a, 0] - herders[i, 0]
            dy = targets[a, 1] - herders[i, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d >= OVERLAP_EPS and d <= lam:
                s = (lam - d) / d
                fx += s * dx
                fy += s * dy
        out[a, 0] = fx
        out[a, 1] = fy
    return out


@njit(cache=True)
def advance_targets(targets, herders, noise, gain, lam, noise_scale, bound):
    drift = target_drift(targets, herders, lam)
    out = np.empty_like(targets)
    for a in range(targets.shape[0]):
        for c in range(2):
            v = targets[a, c] + gain * drift[a, c] + noise_scale * noise[a, c]
            out[a, c] = min(max(v, -bound), bound)
    return out


@njit(cache=True)
def saturate(commands, vmax):
    out = commands.copy()
    for i in range(commands.shape[0]):
        ux = commands[i, 0]
        uy = commands[i, 1]
        n = math.sqrt(ux * ux + uy * uy)
        if n > vmax:
            scale = vmax / n
            out[i, 0] = ux * scale
            out[i, 1] = uy * scale
    return out


@njit(cache=True)
def advance_herders(herders, commands, dt, bound):
    out = np.empty_like(herders)
    for i in range(herders.shape[0]):
        for c in range(2):
            v = herders[i, c] + dt * commands[i, c]
            out[i, c] = min(max(v, -bound), bound)
    return out


@njit(cache=True)
def count_within(points, radius):
    n = 0
    for a in range(points.shape[0]):
        if math.sqrt(points[a, 0] * points[a, 0] + points[a, 1] * points[a, 1]) <= radius:
            n += 1
    return n


@njit(cache=True)
def heuristic_select(herders, targets, outside_radius, contain):
    n_h = herders.shape[0]
    n_t = targets.shape[0]
    owner = np.empty(n_t, dtype=np.int64)
    radius = np.empty(n_t)
    for a in range(n_t):
        best = np.inf
        for i in range(n_h):
            dx = targets[a, 0] - herders[i, 0]
            dy = targets[a, 1] - herders[i, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d < best:
                best = d
                owner[a] = i
        radius[a] = math.sqrt(targets[a, 0] * targets[a, 0] + targets[a, 1] * targets[a, 1])
    out = np.full(n_h, -1, dtype=np.int64)
    for i in range(n_h):
        best_r = -1.0
        fallback_r = -1.0
        fallback = -1
        for a in range(n_t):
            if owner[a] != i:
                continue
            if radius[a] > outside_radius and radius[a] > best_r:
                best_r = radius[a]
                out[i] = a
            if radius[a] > fallback_r:
                fallback_r = radius[a]
                fallback = a
        if out[i] < 0 and contain:
            out[i] = fallback
    return out


@njit(cache=True)
def heuristic_commands(herders, targets, selection, vmax, standoff, gain):
    u = np.zeros_like(herders)
    for i in range(herders.shape[0]):
        a = selection[i]
        if a < 0:
            continue
        tx = targets[a, 0]
        ty = targets[a, 1]
        r = math.sqrt(tx * tx + ty * ty)
        if r >= OVERLAP_EPS:
            px = tx + standoff * tx / r
            py = ty + standoff * ty / r
        else:
            px = tx
            py = ty
        u[i, 0] = gain * (px - herders[i, 0])
        u[i, 1] = gain * (py - herders[i, 1])
    return saturate(u, vmax)


@njit(cache=True)
def heuristic_episode(herders0, targets0, noise, bound, vmax, gain_t, lam, dt, noise_scale,
                      standoff, kp, buffered, contain, n_t, n_h):
    n_herders = herders0.shape[0]
    n_targets = targets0.shape[0]
    htrace = np.empty((n_h + 1, n_herders, 2))
    ttrace = np.empty((n_h + 1, n_targets, 2))
    utrace = np.empty((n_h, n_herders, 2))
    chi = np.empty(n_h + 1)
    h = herders0.copy()
    t = targets0.copy()
    htrace[0] = h
    ttrace[0] = t
    chi[0] = count_within(t, buffered) / n_targets
    run = 1 if chi[0] >= 0.99 else 0
    k = 0
    while k < n_h and run <= n_t:
        sel = heuristic_select(h, t, buffered, contain)
        u = saturate(heuristic_commands(h, t, sel, vmax, standoff, kp), vmax)
        t = advance_targets(t, h, noise[k], gain_t, lam, noise_scale, bound)
        h = advance_herders(h, u, dt, bound)
        utrace[k] = u
        k += 1
        htrace[k] = h
        ttrace[k] = t
        chi[k] = count_within(t, buffered) / n_targets
        if chi[k] >= 0.99:
            run += 1
        else:
            run = 0
    return k, chi[: k + 1].copy(), htrace[: k + 1].copy(), ttrace[: k + 1].copy(), utrace[:k].copy()
