"""numba inner loops for the clique dynamics.

Random-stream contract (shared with the pure-Python step functions in
``chains`` so both paths produce identical trajectories from the same
``numpy.random.Generator``):

* Metropolis / greedy step: ``v = rng.integers(0, n)`` then ``u = rng.random()``;
  the uniform is drawn even when it is not needed.
* Simulated-tempering step: ``x = rng.random()``; if ``x < a`` a Metropolis step
  as above at the current temperature, otherwise ``d = rng.random()`` (down if
  ``d < 1/2``) and ``u = rng.random()`` for the acceptance test.
* Birth-death walks: one ``rng.random()`` per step, inverse-CDF over
  (down, up[, temp-down, temp-up]).

Targets and hit markers use -1 for "disabled" / "never".
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._bits import popcount64

CHECK_EVERY = 1 << 16


@njit(cache=True)
def _clique_ok(adj, planted, members, size, overlap):
    ov = 0
    for i in range(size):
        a = members[i]
        ov += planted[a]
        for j in range(i + 1, size):
            if not adj[a, members[j]]:
                return False
    return ov == overlap


@njit(cache=True)
def _state_mask(members, size):
    m = np.uint64(0)
    for i in range(size):
        m |= np.uint64(1) << np.uint64(members[i])
    return m


@njit(cache=True)
def _record(t, size, overlap, temp, rec_step, rec_size, rec_overlap, rec_temp, rc):
    if rc < rec_step.shape[0]:
        rec_step[rc] = t
        rec_size[rc] = size
        rec_overlap[rc] = overlap
        rec_temp[rc] = temp
        return rc + 1
    return rc


@njit(cache=True)
def _flip(adj, planted, logw, greedy, members, pos, size, overlap, v, u):
    """Apply one proposal for vertex ``v`` with uniform ``u``.

    Returns ``(size, overlap, moved, removed)``.
    """
    if pos[v] >= 0:
        if greedy:
            return size, overlap, False, False
        la = logw[size - 1] - logw[size]
        if la >= 0.0 or u < math.exp(la):
            i = pos[v]
            last = members[size - 1]
            members[i] = last
            pos[last] = i
            pos[v] = -1
            return size - 1, overlap - planted[v], True, True
        return size, overlap, False, False
    for i in range(size):
        if not adj[v, members[i]]:
            return size, overlap, False, False
    if not greedy:
        la = logw[size + 1] - logw[size]
        if not (la >= 0.0 or u < math.exp(la)):
            return size, overlap, False, False
    members[size] = v
    pos[v] = size
    return size + 1, overlap + planted[v], True, False


@njit(cache=True)
def metropolis_kernel(
    adj, planted, logw, greedy, members, pos, size, overlap, steps, rng,
    size_target, overlap_target, thin, rec_step, rec_size, rec_overlap, rec_temp,
    track, occupancy, debug,
):
    """Run up to ``steps`` single-temperature steps in place on (members, pos).

    Returns ``(size, overlap, steps_done, hit_size, hit_overlap, removals,
    records, ok)``.
    """
    n = adj.shape[0]
    hit_size = -1
    hit_overlap = -1
    removals = 0
    rc = _record(0, size, overlap, 0, rec_step, rec_size, rec_overlap, rec_temp, 0)
    if size_target >= 0 and size >= size_target:
        hit_size = 0
    if overlap_target >= 0 and overlap >= overlap_target:
        hit_overlap = 0
    if hit_size == 0 or hit_overlap == 0:
        return size, overlap, 0, hit_size, hit_overlap, removals, rc, True
    tracking = track.shape[0] > 0
    mask = _state_mask(members, size) if tracking else np.uint64(0)
    t = 0
    while t < steps:
        t += 1
        v = rng.integers(0, n)
        u = rng.random()
        size, overlap, moved, removed = _flip(adj, planted, logw, greedy, members, pos, size, overlap, v, u)
        if moved:
            if removed:
                removals += 1
            if tracking:
                mask ^= np.uint64(1) << np.uint64(v)
            stop = False
            if hit_size < 0 and size_target >= 0 and size >= size_target:
                hit_size = t
                stop = True
            if hit_overlap < 0 and overlap_target >= 0 and overlap >= overlap_target:
                hit_overlap = t
                stop = True
            if stop:
                rc = _record(t, size, overlap, 0, rec_step, rec_size, rec_overlap, rec_temp, rc)
                break
        if tracking:
            occupancy[np.searchsorted(track, mask)] += 1
        if debug or t % CHECK_EVERY == 0:
            if not _clique_ok(adj, planted, members, size, overlap):
                return size, overlap, t, hit_size, hit_overlap, removals, rc, False
        if t % thin == 0 or t == steps:
            rc = _record(t, size, overlap, 0, rec_step, rec_size, rec_overlap, rec_temp, rc)
    return size, overlap, t, hit_size, hit_overlap, removals, rc, True


@njit(cache=True)
def tempering_kernel(
    adj, planted, logw_ladder, betas, log_z_hat, h, a, members, pos, size, overlap, temp,
    steps, rng, size_target, overlap_target, thin, rec_step, rec_size, rec_overlap, rec_temp,
    track, occupancy, debug,
):
    """Simulated tempering on (clique, temperature index).

    ``logw_ladder[i]`` is ``beta_i * h``.  Occupancy (when tracking) is indexed
    ``state_index * (m + 1) + temp``.
    Returns ``(size, overlap, temp, steps_done, hit_size, hit_overlap,
    removals, records, ok)``.
    """
    n = adj.shape[0]
    m = betas.shape[0] - 1
    hit_size = -1
    hit_overlap = -1
    removals = 0
    rc = _record(0, size, overlap, temp, rec_step, rec_size, rec_overlap, rec_temp, 0)
    if size_target >= 0 and size >= size_target:
        hit_size = 0
    if overlap_target >= 0 and overlap >= overlap_target:
        hit_overlap = 0
    if hit_size == 0 or hit_overlap == 0:
        return size, overlap, temp, 0, hit_size, hit_overlap, removals, rc, True
    tracking = track.shape[0] > 0
    mask = _state_mask(members, size) if tracking else np.uint64(0)
    t = 0
    while t < steps:
        t += 1
        x = rng.random()
        if x < a:
            v = rng.integers(0, n)
            u = rng.random()
            size, overlap, moved, removed = _flip(
                adj, planted, logw_ladder[temp], False, members, pos, size, overlap, v, u
            )
            if moved:
                if removed:
                    removals += 1
                if tracking:
                    mask ^= np.uint64(1) << np.uint64(v)
                stop = False
                if hit_size < 0 and size_target >= 0 and size >= size_target:
                    hit_size = t
                    stop = True
                if hit_overlap < 0 and overlap_target >= 0 and overlap >= overlap_target:
                    hit_overlap = t
                    stop = True
                if stop:
                    rc = _record(t, size, overlap, temp, rec_step, rec_size, rec_overlap, rec_temp, rc)
                    break
        else:
            d = rng.random()
            u = rng.random()
            j = temp - 1 if d < 0.5 else temp + 1
            if 0 <= j <= m:
                la = log_z_hat[temp] - log_z_hat[j] + (betas[j] - betas[temp]) * h[size]
                if la >= 0.0 or u < math.exp(la):
                    temp = j
        if tracking:
            occupancy[np.searchsorted(track, mask) * (m + 1) + temp] += 1
        if debug or t % CHECK_EVERY == 0:
            if not _clique_ok(adj, planted, members, size, overlap):
                return size, overlap, temp, t, hit_size, hit_overlap, removals, rc, False
        if t % thin == 0 or t == steps:
            rc = _record(t, size, overlap, temp, rec_step, rec_size, rec_overlap, rec_temp, rc)
    return size, overlap, temp, t, hit_size, hit_overlap, removals, rc, True


@njit(cache=True)
def birth_death_kernel(
    p_down, p_up, p_tdown, p_tup, s, j, steps, rng, size_target, thin,
    rec_step, rec_size, rec_temp, occupancy,
):
    """Nearest-neighbour walk on [0, S] x [0, M] given per-state move probabilities.

    ``p_*[s, j]`` already include every factor of the kernel; the remainder is
    holding.  Occupancy counts states after each step.
    Returns ``(s, j, steps_done, hit_zero, hit_size, records)``.
    """
    hit_zero = 0 if s == 0 else -1
    hit_size = 0 if (size_target >= 0 and s >= size_target) else -1
    rc = 0
    rec_step[0] = 0
    rec_size[0] = s
    rec_temp[0] = j
    rc = 1
    t = 0
    while t < steps:
        t += 1
        u = rng.random()
        c = p_down[s, j]
        if u < c:
            s -= 1
        else:
            c += p_up[s, j]
            if u < c:
                s += 1
            else:
                c += p_tdown[s, j]
                if u < c:
                    j -= 1
                else:
                    c += p_tup[s, j]
                    if u < c:
                        j += 1
        occupancy[s, j] += 1
        if hit_zero < 0 and s == 0:
            hit_zero = t
        if hit_size < 0 and size_target >= 0 and s >= size_target:
            hit_size = t
        if (t % thin == 0 or t == steps) and rc < rec_step.shape[0]:
            rec_step[rc] = t
            rec_size[rc] = s
            rec_temp[rc] = j
            rc += 1
    return s, j, t, hit_zero, hit_size, rc


@njit(cache=True)
def _common_count(words, members, size, n):
    n_words = words.shape[1]
    total = 0
    for w in range(n_words):
        if size == 0:
            lo = w * 64
            hi = min(n, lo + 64)
            total += hi - lo
            continue
        x = words[members[0], w]
        for i in range(1, size):
            x &= words[members[i], w]
        total += popcount64(x)
    return total


@njit(cache=True)
def dominance_kernel(adj, words, planted, logw, members, pos, size, overlap, y, steps, rng, ceiling, y_down, y_up):
    """Coupled Metropolis clique X and birth-death chain Y.

    X moves by the ordinary Metropolis kernel.  Y is driven so that its
    marginal is exactly the birth-death kernel: when Y = |X| it copies a down
    move of X and thins an up move of X by ``y_up / P(X up)``; otherwise it
    reads a uniform W that is below ``P(X down)`` exactly when X moved down.

    A precondition failure is counted each time X enters a clique of size at
    most ``ceiling`` with fewer than ``n / (20 * 2^|X|)`` common neighbours.
    Returns ``(size, overlap, y, violations, precondition_failures)``.
    """
    n = adj.shape[0]
    violations = 0
    failures = 0
    a_size = _common_count(words, members, size, n)
    if size <= ceiling and a_size * 20 * (1 << size) < n:
        failures += 1
    for t in range(steps):
        s = size
        v = rng.integers(0, n)
        u = rng.random()
        w = rng.random()
        size, overlap, moved, removed = _flip(adj, planted, logw, False, members, pos, size, overlap, v, u)
        x_down = moved and removed
        x_up = moved and not removed
        if y == s:
            if x_down:
                y -= 1
            elif x_up:
                if y_up[s] > 0.0:
                    la = logw[s + 1] - logw[s]
                    acc = 1.0 if la >= 0.0 else math.exp(la)
                    p_x_up = a_size / n * acc
                    if w * p_x_up < y_up[s]:
                        y += 1
        else:
            la = logw[s - 1] - logw[s] if s > 0 else 0.0
            d_x = s / n * (1.0 if la >= 0.0 else math.exp(la))
            big_w = w * d_x if x_down else d_x + w * (1.0 - d_x)
            if big_w < y_down[y]:
                y -= 1
            elif big_w >= 1.0 - y_up[y]:
                y += 1
        if moved:
            a_size = _common_count(words, members, size, n)
            if size <= ceiling and a_size * 20 * (1 << size) < n:
                failures += 1
        if y > size:
            violations += 1
    return size, overlap, y, violations, failures
