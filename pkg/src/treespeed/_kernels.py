"""Jitted kernels: walk replicas and shared-clock offspring sampling.

The RNG mixing here mirrors ``rng.py`` bit for bit (tests enforce it), and
the walk kernel consumes draws in exactly the order of the reference
implementation in ``model.step``, so a kernel replica and a Python replica
with the same seed produce the same trajectory.

All hot loops avoid mixed signed/unsigned arithmetic: every word that feeds
the mixer is explicitly ``uint64``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MULT_A = np.uint64(0xBF58476D1CE4E5B9)
_MULT_B = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_SCALE53 = 2.0 ** -53


@njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _MULT_A
    z = (z ^ (z >> _S27)) * _MULT_B
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def mix2(a, b):
    return mix64(a ^ mix64(b))


@njit(cache=True, nogil=True)
def unit_from_word(w):
    return ((w >> _S11) + np.uint64(1)) * _SCALE53


@njit(cache=True, nogil=True)
def seq_word(state, n):
    """n-th word (n >= 1) of the counter-mode stream with the given state."""
    return mix64(state + np.uint64(n) * _GOLDEN)


@njit(cache=True, nogil=True)
def keyed_clock(state, vertex, slot, k):
    """Unit-mean exponential clock k (k >= 1) of a directed edge."""
    w = mix2(mix2(mix2(state, np.uint64(vertex)), np.uint64(slot)),
             np.uint64(k))
    return -np.log(unit_from_word(w))


@njit(cache=True, nogil=True)
def keyed_unit(state, x, y):
    return unit_from_word(mix2(mix2(state, np.uint64(x)), np.uint64(y)))


@njit(cache=True, nogil=True)
def _pick_atom(values, cdf, u):
    i = 0
    while u > cdf[i]:
        i += 1
    return values[i]


@njit(cache=True, nogil=True)
def walk_kernel(state, n_steps, b, is_rwre, values, cdf, iid_coupling, delta,
                max_level, vertex_cap, pi_cap):
    """Run one replica; returns its full statistics bundle.

    Statuses: 0 = ran the whole step budget, 1 = stopped early at the level
    horizon ``max_level``, 2 = stopped early because the vertex arena filled.

    Returns (status, final_step, final_level, max_level_reached, l_root,
    distinct, first_return_step, max_level_before_return, pi_levels,
    pending level/time/distinct arrays, n_vertices).
    """
    parent = np.zeros(vertex_cap, np.int32)
    level = np.zeros(vertex_cap, np.int32)
    children = np.zeros((vertex_cap, b), np.int32)
    env_rows = vertex_cap if is_rwre else 1
    env = np.zeros((env_rows, b), np.float64)

    parent[0] = -1
    level[0] = -1
    parent[1] = 0
    level[1] = 0
    next_free = 2

    pend_cap = min(max_level, n_steps) + 2
    pend_level = np.zeros(pend_cap, np.int64)
    pend_time = np.zeros(pend_cap, np.int64)
    pend_distinct = np.zeros(pend_cap, np.int64)
    pend_vertex = np.zeros(pend_cap, np.int32)
    pend_n = 0

    pi_levels = np.zeros(pi_cap, np.int64)
    pi_levels[0] = 1

    draw_n = 0
    if is_rwre:
        if iid_coupling:
            for i in range(b):
                draw_n += 1
                env[1, i] = _pick_atom(values, cdf,
                                       unit_from_word(seq_word(state, draw_n)))
        else:
            draw_n += 1
            x = _pick_atom(values, cdf, unit_from_word(seq_word(state, draw_n)))
            for i in range(b):
                env[1, i] = x

    pos = 1
    l_root = 1
    distinct = 1
    max_lev = 0
    seen_root_parent = False
    first_return = np.int64(-1)
    max_lev_before_return = np.int64(0)
    status = 0
    final_step = np.int64(0)

    for step_i in range(1, n_steps + 1):
        v = pos
        if v == 0:
            new = 1
            to_is_new = False
        else:
            draw_n += 1
            u = unit_from_word(seq_word(state, draw_n))
            if is_rwre:
                denom = 1.0
                for i in range(b):
                    denom += env[v, i]
                t = u * denom
                cum = 1.0
                choice = b
                if t <= cum:
                    choice = 0
                else:
                    for i in range(1, b + 1):
                        cum += env[v, i - 1]
                        if t <= cum:
                            choice = i
                            break
            else:
                total = delta
                for i in range(b):
                    if children[v, i] != 0:
                        total += delta
                    else:
                        total += 1.0
                t = u * total
                cum = delta
                choice = b
                if t <= cum:
                    choice = 0
                else:
                    for i in range(1, b + 1):
                        if children[v, i - 1] != 0:
                            cum += delta
                        else:
                            cum += 1.0
                        if t <= cum:
                            choice = i
                            break

            to_is_new = False
            if choice == 0:
                new = parent[v]
                if new == 0 and not seen_root_parent:
                    seen_root_parent = True
                    to_is_new = True
            else:
                new = children[v, choice - 1]
                if new == 0:
                    if next_free >= vertex_cap:
                        status = 2
                        break
                    new = next_free
                    next_free += 1
                    children[v, choice - 1] = new
                    parent[new] = v
                    level[new] = level[v] + 1
                    to_is_new = True
                    if is_rwre:
                        if iid_coupling:
                            for i in range(b):
                                draw_n += 1
                                env[new, i] = _pick_atom(
                                    values, cdf,
                                    unit_from_word(seq_word(state, draw_n)))
                        else:
                            draw_n += 1
                            x = _pick_atom(
                                values, cdf,
                                unit_from_word(seq_word(state, draw_n)))
                            for i in range(b):
                                env[new, i] = x

        lev_new = level[new]
        lev_old = level[v] if v != 0 else -1

        # regeneration candidate bookkeeping (strict LIFO discards)
        if lev_new == lev_old - 1 and pend_n > 0 \
                and pend_vertex[pend_n - 1] == v:
            pend_n -= 1

        if new == 1:
            l_root += 1
        if to_is_new:
            distinct += 1
            if 0 <= lev_new < pi_cap:
                pi_levels[lev_new] += 1

        if lev_new > max_lev:
            max_lev = lev_new
            pend_level[pend_n] = lev_new
            pend_vertex[pend_n] = new
            pend_time[pend_n] = step_i
            pend_distinct[pend_n] = distinct
            pend_n += 1

        if first_return < 0:
            if new == 0:
                first_return = step_i
            else:
                max_lev_before_return = max_lev

        pos = new
        final_step = step_i
        if lev_new >= max_level:
            status = 1
            break

    final_level = np.int64(level[pos])
    return (status, final_step, final_level, np.int64(max_lev),
            np.int64(l_root), np.int64(distinct), first_return,
            max_lev_before_return, pi_levels,
            pend_level[:pend_n].copy(), pend_time[:pend_n].copy(),
            pend_distinct[:pend_n].copy(), np.int64(next_free))


@njit(cache=True, nogil=True)
def offspring_kernel(base_state, n_samples, b, psi, is_rwre, values, cdf,
                     iid_coupling, delta, purpose_offspring, purpose_env,
                     ray_step_cap):
    """Sample the first-generation offspring counts of the level-psi scheme.

    Per sample: one environment on the first psi levels (heap-indexed
    complete b-ary tree, root = 1, children of i at b*(i-1)+2 .. +1+b) and
    one family of keyed exponential clock streams.  Each of the b^psi
    level-psi vertices is tested by running the walk's extension to the ray
    from the root to that vertex: a birth-death chain whose moves are decided
    by racing cumulative alarm fronts on the two incident directed edges.
    Rays sharing a path prefix consume the *same* clock streams on the shared
    vertices, which reproduces the joint coloring law; a vertex is counted
    when its ray hits it before the augmented root-parent.

    Weights are used unnormalized (parent 1, child a_i for RWRE; delta/1 by
    reinforcement for ORRW, the root's parent edge starting reinforced):
    within one vertex all alarm comparisons scale together, so normalization
    cancels.  Returns (histogram over 0..b^psi, ray step-cap hits).
    """
    n_types = 1
    for _ in range(psi):
        n_types *= b
    hist = np.zeros(n_types + 1, np.int64)
    cap_hits = 0

    m_up = np.zeros(psi, np.int64)
    base_up = np.zeros(psi, np.float64)
    front_up = np.zeros(psi, np.float64)
    has_up = np.zeros(psi, np.uint8)
    m_dn = np.zeros(psi, np.int64)
    base_dn = np.zeros(psi, np.float64)
    front_dn = np.zeros(psi, np.float64)
    has_dn = np.zeros(psi, np.uint8)
    crossed = np.zeros(psi, np.uint8)
    path_vertex = np.zeros(psi + 1, np.int64)
    path_slot = np.zeros(psi, np.int64)

    for s in range(n_samples):
        sample_state = mix2(base_state, np.uint64(s))
        clock_state = mix2(sample_state, np.uint64(purpose_offspring))
        env_state = mix2(sample_state, np.uint64(purpose_env))
        colored = 0
        for r in range(n_types):
            rr = r
            for j in range(psi - 1, -1, -1):
                path_slot[j] = rr % b
                rr //= b
            v = 1
            path_vertex[0] = 1
            for j in range(psi):
                v = b * (v - 1) + 2 + path_slot[j]
                path_vertex[j + 1] = v

            for j in range(psi):
                m_up[j] = 0
                base_up[j] = 0.0
                has_up[j] = 0
                m_dn[j] = 0
                base_dn[j] = 0.0
                has_dn[j] = 0
                crossed[j] = 0

            pos = 0
            steps = 0
            result = -1
            while result < 0:
                steps += 1
                if steps > ray_step_cap:
                    cap_hits += 1
                    result = 0
                    break
                vtx = path_vertex[pos]
                if is_rwre:
                    w_up = 1.0
                    if iid_coupling:
                        w_dn = _pick_atom(
                            values, cdf,
                            keyed_unit(env_state, vtx, 1 + path_slot[pos]))
                    else:
                        w_dn = _pick_atom(values, cdf,
                                          keyed_unit(env_state, vtx, 0))
                else:
                    if pos == 0 or crossed[pos - 1] != 0:
                        w_up = delta
                    else:
                        w_up = 1.0
                    w_dn = delta if crossed[pos] != 0 else 1.0

                if has_up[pos] == 0:
                    h = keyed_clock(clock_state, vtx, 0, m_up[pos] + 1)
                    front_up[pos] = base_up[pos] + h / w_up
                    has_up[pos] = 1
                if has_dn[pos] == 0:
                    h = keyed_clock(clock_state, vtx, 1 + path_slot[pos],
                                    m_dn[pos] + 1)
                    front_dn[pos] = base_dn[pos] + h / w_dn
                    has_dn[pos] = 1

                if front_up[pos] < front_dn[pos]:
                    base_up[pos] = front_up[pos]
                    m_up[pos] += 1
                    has_up[pos] = 0
                    if not is_rwre and pos > 0:
                        crossed[pos - 1] = 1
                    pos -= 1
                    if pos < 0:
                        result = 0
                else:
                    base_dn[pos] = front_dn[pos]
                    m_dn[pos] += 1
                    has_dn[pos] = 0
                    if not is_rwre:
                        crossed[pos] = 1
                    pos += 1
                    if pos == psi:
                        result = 1
            colored += result
        hist[colored] += 1
    return hist, np.int64(cap_hits)
