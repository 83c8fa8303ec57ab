"""Environment, tree arena, single-step walk dynamics, transience check.

The heavyweight check here drives the pure-Python walk and the compiled
kernel from the same seed and requires every summary statistic (levels,
visit counts, regeneration candidates, block decomposition) to agree
exactly -- the kernel contract is bit-for-bit mirroring, not statistical
similarity.
"""

import math

import numpy as np
import pytest

from treespeed import _kernels, model, regen
from treespeed.model import (ROOT, ROOT_PARENT, ArenaFull, EnvSpec,
                             TreeArena, WalkState, WeightState, sample_env,
                             step, transience_check, transition_weights_orrw,
                             transition_weights_rwre)
from treespeed.rng import PURPOSE_WALK, SeedSpec, SequentialRng

ATOM_ONE = EnvSpec(model="rwre", b=2, support=((1.0, 1.0),))


# -- EnvSpec -------------------------------------------------------------

def test_envspec_rejects_bad_input():
    with pytest.raises(ValueError):
        EnvSpec(model="srw", b=2, support=((1.0, 1.0),))
    with pytest.raises(ValueError):
        EnvSpec(model="rwre", b=1, support=((1.0, 1.0),))
    with pytest.raises(ValueError):
        EnvSpec(model="rwre", b=2, support=())
    with pytest.raises(ValueError):
        EnvSpec(model="rwre", b=2, support=((1.0, 0.5), (2.0, 0.6)))
    with pytest.raises(ValueError):
        EnvSpec(model="rwre", b=2, support=((-1.0, 1.0),))
    with pytest.raises(ValueError):
        EnvSpec(model="rwre", b=2, support=((math.inf, 1.0),))
    with pytest.raises(ValueError):
        EnvSpec(model="rwre", b=2, support=((1.0, -0.1), (2.0, 1.1)))
    with pytest.raises(ValueError):
        EnvSpec(model="rwre", b=2, support=((1.0, 1.0),), coupling="magic")
    with pytest.raises(ValueError):
        EnvSpec(model="orrw", b=2)
    with pytest.raises(ValueError):
        EnvSpec(model="orrw", b=2, delta=0.0)
    with pytest.raises(ValueError):
        EnvSpec(model="orrw", b=2, delta=2.0, support=((1.0, 1.0),))


def test_envspec_round_trip():
    for spec in (
        EnvSpec(model="rwre", b=3, support=((0.3, 0.25), (3.5, 0.75)),
                coupling="iid"),
        EnvSpec(model="rwre", b=2, support=((1.0, 1.0),)),
        EnvSpec(model="orrw", b=4, delta=0.5),
    ):
        assert EnvSpec.from_dict(spec.to_dict()) == spec


def test_support_arrays_forces_cdf_to_one():
    third = 1.0 / 3.0
    spec = EnvSpec(model="rwre", b=2,
                   support=((0.3, third), (3.5, third), (1.0, third)))
    values, cdf = spec.support_arrays()
    assert values.tolist() == [0.3, 3.5, 1.0]
    assert cdf[-1] == 1.0
    assert np.all(np.diff(cdf) > 0)


# -- arena ---------------------------------------------------------------

def test_arena_basics():
    with pytest.raises(ValueError):
        TreeArena(b=2, capacity=1)
    arena = TreeArena(b=2, capacity=4)
    assert arena.parent[ROOT] == ROOT_PARENT
    assert arena.level[ROOT] == 0
    assert arena.level[ROOT_PARENT] == -1
    assert arena.child(ROOT, 1) == 0  # not materialized yet

    c1 = arena.allocate_child(ROOT, 1)
    assert arena.child(ROOT, 1) == c1
    assert arena.level[c1] == 1
    ref = arena.ref(c1)
    assert (ref.level, ref.parent_id, ref.child_slot) == (1, ROOT, 1)
    with pytest.raises(ValueError):
        arena.allocate_child(ROOT, 1)  # double materialization

    arena.allocate_child(ROOT, 2)
    with pytest.raises(ArenaFull):
        arena.allocate_child(c1, 1)


# -- transition weights ---------------------------------------------------

def test_rwre_weights_match_hand_values():
    # A = 3/10 on both children: parent gets 1/(1 + 6/10) = 5/8
    w = transition_weights_rwre(np.array([0.3, 0.3]))
    assert w == pytest.approx([5 / 8, 3 / 16, 3 / 16], rel=1e-15)
    w = transition_weights_rwre(np.array([3.5, 3.5]))
    assert w == pytest.approx([1 / 8, 7 / 16, 7 / 16], rel=1e-15)
    # mixed vector keeps slot order
    w = transition_weights_rwre(np.array([1.0, 3.0]))
    assert w == pytest.approx([0.2, 0.2, 0.6], rel=1e-15)
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-15)


def test_rwre_weights_reject_degenerate_env():
    with pytest.raises(ValueError):
        transition_weights_rwre(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        transition_weights_rwre(np.array([math.nan, 1.0]))


def test_orrw_weights_track_reinforcement():
    arena = TreeArena(b=2, capacity=8)
    state = WeightState(arena, delta=2.0)
    # fresh vertex: (delta, 1, 1) = (2, 1, 1), parent probability 1/2
    assert transition_weights_orrw(state, ROOT).tolist() \
        == pytest.approx([0.5, 0.25, 0.25])
    arena.allocate_child(ROOT, 1)
    assert transition_weights_orrw(state, ROOT).tolist() \
        == pytest.approx([0.4, 0.4, 0.2])
    # crossing an edge elsewhere does not touch this vertex's weights
    c2 = arena.allocate_child(ROOT, 2)
    assert transition_weights_orrw(state, c2).tolist() \
        == pytest.approx([0.5, 0.25, 0.25])


# -- environment sampling --------------------------------------------------

def test_sample_env_identical_coupling_shares_one_draw():
    spec = EnvSpec(model="rwre", b=3, support=((0.3, 0.5), (3.5, 0.5)))
    rng = SequentialRng(SeedSpec(5))
    a = sample_env(7, spec, rng)
    assert rng._n == 1
    assert len(set(a.tolist())) == 1
    assert a[0] in (0.3, 3.5)


def test_sample_env_iid_coupling_draws_per_child():
    spec = EnvSpec(model="rwre", b=3, support=((0.3, 0.5), (3.5, 0.5)),
                   coupling="iid")
    rng = SequentialRng(SeedSpec(5))
    a = sample_env(7, spec, rng)
    assert rng._n == 3
    assert all(x in (0.3, 3.5) for x in a.tolist())
    # fixed seed, mixed draw expected at some vertex; resample to confirm
    draws = [sample_env(v, spec, SequentialRng(SeedSpec(v))) for v in range(20)]
    assert any(len(set(a.tolist())) > 1 for a in draws)


def test_env_memoized_across_revisits():
    spec = EnvSpec(model="rwre", b=2, support=((0.3, 0.5), (3.5, 0.5)))
    walk = WalkState.start(spec, SeedSpec(3))
    first = walk.env_at(ROOT).copy()
    for _ in range(50):
        step(walk)
    assert walk.env_at(ROOT).tolist() == first.tolist()


# -- single-step contract ---------------------------------------------------

def test_no_draw_at_root_parent():
    walk = WalkState.start(ATOM_ONE, SeedSpec(1))
    walk.position = ROOT_PARENT
    before = walk.rng._n
    frm, to = step(walk)
    assert (frm, to) == (ROOT_PARENT, ROOT)
    assert walk.rng._n == before
    assert walk.step_count == 1


def test_step_consumes_draws_like_the_documented_contract():
    """Replay the same uniform stream independently and re-derive choices.

    A ~ 1 makes every weight vector (1/3, 1/3, 1/3); the only remaining
    bookkeeping is which uniforms are spent where: one per step away from
    <-root, plus one environment draw on each fresh materialization.
    """
    seed = SeedSpec(77, replica=2)
    walk = WalkState.start(ATOM_ONE, seed)
    mirror = SequentialRng(seed)
    mirror.next_unit()  # root environment draw at start

    children: dict[int, dict[int, bool]] = {ROOT: {}}
    pos, level = ROOT, 0
    for _ in range(400):
        if pos == ROOT_PARENT:
            expected, level = ROOT, 0
        else:
            u = mirror.next_unit()
            t = u * 3.0
            if t <= 1.0:
                choice = 0
            elif t <= 2.0:
                choice = 1
            else:
                choice = 2
            if choice == 0:
                expected = -1  # parent; id checked via arena below
                level -= 1
            else:
                fresh = not children[pos].get(choice, False)
                if fresh:
                    children[pos][choice] = True
                    mirror.next_unit()  # environment draw for the new vertex
                expected, level = ("child", choice), level + 1

        frm, to = step(walk)
        if expected == ROOT:
            assert to == ROOT
        elif expected == -1:
            assert to == walk.arena.parent[frm]
        else:
            assert to == walk.arena.child(frm, expected[1])
            children.setdefault(to, {})
        assert walk.arena.level[to] == level
        pos = to
    assert walk.rng._n == mirror._n


# -- transience --------------------------------------------------------------

def test_transience_verdicts():
    assert transience_check(ATOM_ONE).verdict == "transient"
    assert transience_check(ATOM_ONE).criterion_value == pytest.approx(1.0)

    quarter = EnvSpec(model="rwre", b=2, support=((0.25, 1.0),))
    rep = transience_check(quarter)
    assert rep.verdict == "recurrent"
    assert rep.criterion_value == pytest.approx(0.25, abs=1e-9)
    assert rep.argmin_t == pytest.approx(1.0, abs=1e-6)

    boundary = EnvSpec(model="rwre", b=2, support=((0.5, 1.0),))
    assert transience_check(boundary).verdict == "inapplicable"

    orrw = EnvSpec(model="orrw", b=2, delta=5.0)
    rep = transience_check(orrw)
    assert rep.verdict == "transient"
    assert rep.criterion_value == math.inf


def test_transience_benchmark_family(kappa30_spec):
    rep = transience_check(kappa30_spec)
    assert rep.verdict == "transient"
    # E[A^t] at t=1: (3/10)(1/30) + (7/2)(29/30) = 3.3933..., and the
    # minimum over [0,1] stays above 1/2 for this family
    assert rep.criterion_value > 0.5


# -- python walk vs compiled kernel -------------------------------------------

def python_walk(spec: EnvSpec, master: int, replica: int, n_steps: int,
                guard: int = regen.DEFAULT_GUARD):
    """Drive model.step and the regeneration tracker; bundle the stats."""
    walk = WalkState.start(spec, SeedSpec(master, replica, PURPOSE_WALK),
                           capacity=n_steps + 2)
    tracker = regen.RegenTracker(guard=guard)
    seen = {ROOT}
    first_return, max_before, max_lev = -1, 0, 0
    for s in range(1, n_steps + 1):
        frm, to = step(walk)
        frm_level = int(walk.arena.level[frm])
        to_level = int(walk.arena.level[to])
        to_is_new = to not in seen
        seen.add(to)
        tracker.observe(s, frm, frm_level, to, to_level, to_is_new)
        max_lev = max(max_lev, to_level)
        if first_return < 0:
            if to == ROOT_PARENT:
                first_return = s
            else:
                max_before = max_lev
    blocks, stats, censor = tracker.finalize()
    return {
        "final_level": int(walk.arena.level[walk.position]),
        "max_level": max_lev,
        "l_root": stats.L_root,
        "distinct": tracker.distinct,
        "first_return": first_return,
        "max_before": max_before,
        "pi_levels": stats.Pi_levels,
        "pi_tau1": stats.Pi_total_to_tau1,
        "blocks": blocks,
        "censor": censor,
        "n_vertices": walk.arena.next_free,
    }


def kernel_walk(spec: EnvSpec, master: int, replica: int, n_steps: int,
                guard: int = regen.DEFAULT_GUARD, pi_cap: int = 64):
    state = np.uint64(SeedSpec(master, replica, PURPOSE_WALK).state())
    if spec.model == "rwre":
        values, cdf = spec.support_arrays()
    else:
        values = cdf = np.ones(1)
    delta = float(spec.delta) if spec.delta is not None else 0.0
    out = _kernels.walk_kernel(state, n_steps, spec.b, spec.model == "rwre",
                               values, cdf, spec.coupling == "iid", delta,
                               n_steps + 1, n_steps + 2, pi_cap)
    (status, final_step, final_level, max_lev, l_root, distinct,
     first_return, max_before, pi_levels, pend_level, pend_time,
     pend_distinct, n_vertices) = out
    assert int(status) == 0 and int(final_step) == n_steps
    blocks, pi_tau1, censor = regen.blocks_from_candidates(
        list(zip(pend_level.tolist(), pend_time.tolist(),
                 pend_distinct.tolist())), int(max_lev), guard)
    return {
        "final_level": int(final_level),
        "max_level": int(max_lev),
        "l_root": int(l_root),
        "distinct": int(distinct),
        "first_return": int(first_return),
        "max_before": int(max_before),
        "pi_levels": {k: int(c) for k, c in enumerate(pi_levels) if c},
        "pi_tau1": pi_tau1,
        "blocks": blocks,
        "censor": censor,
        "n_vertices": int(n_vertices),
    }


@pytest.mark.parametrize("spec", [
    EnvSpec(model="rwre", b=2, support=((0.3, 1 / 30), (3.5, 29 / 30))),
    EnvSpec(model="rwre", b=3, support=((0.5, 0.4), (2.0, 0.6)),
            coupling="iid"),
    EnvSpec(model="orrw", b=2, delta=2.0),
    EnvSpec(model="orrw", b=3, delta=0.5),
], ids=["rwre-identical", "rwre-iid", "orrw-2", "orrw-half"])
def test_kernel_mirrors_python_walk(spec):
    for replica in range(3):
        py = python_walk(spec, 314, replica, 4000)
        jit = kernel_walk(spec, 314, replica, 4000, pi_cap=64)
        # the kernel histogram is truncated at pi_cap by design
        py["pi_levels"] = {k: c for k, c in py["pi_levels"].items() if k < 64}
        assert py == jit


def test_walk_hits_arena_full():
    walk = WalkState.start(EnvSpec(model="orrw", b=2, delta=8.0),
                           SeedSpec(0), capacity=8)
    with pytest.raises(ArenaFull):
        for _ in range(10_000):
            step(walk)
