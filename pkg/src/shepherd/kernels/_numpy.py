"""Vectorised numpy kernels (fallback backend).

Loops run over herders (never over targets) so summation order matches the
numba kernels exactly.
"""
import numpy as np

OVERLAP_EPS = 1e-9


def _norm(xy):
    return np.sqrt(xy[..., 0] * xy[..., 0] + xy[..., 1] * xy[..., 1])


def target_drift(targets, herders, lam):
    out = np.zeros_like(targets)
    for i in range(herders.shape[0]):
        diff = targets - herders[i]
        d = _norm(diff)
        active = (d >= OVERLAP_EPS) & (d <= lam)
        s = np.where(active, (lam - d) / np.where(active, d, 1.0), 0.0)
        out += s[:, None] * diff
    return out


def advance_targets(targets, herders, noise, gain, lam, noise_scale, bound):
    drift = target_drift(targets, herders, lam)
    return np.clip(targets + gain * drift + noise_scale * noise, -bound, bound)


def saturate(commands, vmax):
    n = _norm(commands)
    over = n > vmax
    scale = np.where(over, vmax / np.where(over, n, 1.0), 1.0)
    return commands * scale[:, None]


def advance_herders(herders, commands, dt, bound):
    return np.clip(herders + dt * commands, -bound, bound)


def count_within(points, radius):
    return int(np.count_nonzero(_norm(points) <= radius))


def heuristic_select(herders, targets, outside_radius, contain):
    n_h = herders.shape[0]
    dist = np.empty((n_h, targets.shape[0]))
    for i in range(n_h):
        dist[i] = _norm(targets - herders[i])
    owner = np.argmin(dist, axis=0)
    radius = _norm(targets)
    outside = radius > outside_radius
    out = np.full(n_h, -1, dtype=np.int64)
    for i in range(n_h):
        mine = owner == i
        pool = mine & outside
        if not pool.any():
            if not contain:
                continue
            pool = mine
            if not pool.any():
                continue
        out[i] = int(np.argmax(np.where(pool, radius, -1.0)))
    return out


def heuristic_commands(herders, targets, selection, vmax, standoff, gain):
    commands = np.zeros_like(herders)
    active = selection >= 0
    if not active.any():
        return commands
    t = targets[np.where(active, selection, 0)]
    r = _norm(t)
    far = r >= OVERLAP_EPS
    safe_r = np.where(far, r, 1.0)
    px = np.where(far, t[:, 0] + standoff * t[:, 0] / safe_r, t[:, 0])
    py = np.where(far, t[:, 1] + standoff * t[:, 1] / safe_r, t[:, 1])
    u = np.stack([gain * (px - herders[:, 0]), gain * (py - herders[:, 1])], axis=1)
    u = saturate(u, vmax)
    u[~active] = 0.0
    return u


def heuristic_episode(herders0, targets0, noise, bound, vmax, gain_t, lam, dt, noise_scale,
                      standoff, kp, buffered, contain, n_t, n_h):
    n_herders, n_targets = herders0.shape[0], targets0.shape[0]
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
        run = run + 1 if chi[k] >= 0.99 else 0
    return k, chi[: k + 1].copy(), htrace[: k + 1].copy(), ttrace[: k + 1].copy(), utrace[:k].copy()
