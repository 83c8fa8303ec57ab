"""Tree, environment and single-step walk dynamics.

Two walk models on the rooted b-ary tree, augmented with a parent ``<-root``
above the root:

* ``rwre`` — random walk in random environment.  Each vertex carries an
  i.i.d. positive weight vector ``a`` of length b; from that vertex the walk
  steps to the parent with probability 1/(1+sum(a)) and to child i with
  probability a_i/(1+sum(a)).
* ``orrw`` — once edge-reinforced random walk.  Every edge has weight 1 until
  its first traversal and weight delta forever after; the edge between the
  root and its augmented parent starts reinforced.  Transitions are
  proportional to the incident edge weights.

From ``<-root`` the only move is back to the root, with probability 1.

The tree is an append-only arena: vertices are materialized the first time
the walk enters them, in visit order.  Vertex 0 is ``<-root`` (level -1),
vertex 1 is the root (level 0).  A child slot holding 0 means "never
visited", which doubles as the ORRW crossed-edge state: on a tree, the first
traversal of any parent-child edge is exactly the first visit to the child,
so an edge is reinforced if and only if the child end is materialized (the
root's parent edge being reinforced from the start).

This module is the readable reference implementation; the throughput path
lives in ``_kernels`` and consumes the identical random stream, so the two
can be checked against each other trajectory for trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .rng import SeedSpec, SequentialRng

ROOT_PARENT = 0
ROOT = 1

_PROB_TOL = 1e-12


class ArenaFull(RuntimeError):
    """Raised when the configured vertex capacity is exhausted."""


@dataclass(frozen=True)
class EnvSpec:
    """Validated model description.

    ``support`` lists the atoms of the A-distribution as (value, prob) pairs
    (RWRE only).  ``coupling`` says how the b coordinates of a vertex's
    weight vector relate: ``identical`` reuses one draw for all coordinates,
    ``iid`` draws them independently.  Both have identically distributed
    coordinates, which is all the analytic pipeline assumes.
    """

    model: str
    b: int
    support: tuple[tuple[float, float], ...] | None = None
    coupling: str = "identical"
    delta: float | None = None

    def __post_init__(self):
        if self.model not in ("rwre", "orrw"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.b < 2:
            raise ValueError("b must be at least 2")
        if self.model == "rwre":
            if not self.support:
                raise ValueError("rwre requires a nonempty support")
            if self.coupling not in ("identical", "iid"):
                raise ValueError(f"unknown coupling {self.coupling!r}")
            total = 0.0
            for value, prob in self.support:
                if not (value > 0.0) or not math.isfinite(value):
                    raise ValueError("support values must be positive finite")
                if prob < 0.0:
                    raise ValueError("support probabilities must be nonnegative")
                total += prob
            if abs(total - 1.0) > _PROB_TOL:
                raise ValueError(f"support probabilities sum to {total!r}, not 1")
        else:
            if self.delta is None or not (self.delta > 0.0):
                raise ValueError("orrw requires delta > 0")
            if self.support is not None:
                raise ValueError("orrw takes no support")

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        out: dict = {"model": self.model, "b": self.b}
        if self.model == "rwre":
            out["support"] = [[v, p] for v, p in self.support]
            out["coupling"] = self.coupling
        else:
            out["delta"] = self.delta
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EnvSpec":
        return cls(
            model=d["model"],
            b=d["b"],
            support=tuple((float(v), float(p)) for v, p in d["support"])
            if "support" in d
            else None,
            coupling=d.get("coupling", "identical"),
            delta=d.get("delta"),
        )

    # -- derived views ----------------------------------------------------

    def support_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(values, cumulative probabilities); the last cdf entry is forced
        to 1.0 so a uniform in (0,1] always lands in a bucket."""
        values = np.array([v for v, _ in self.support], dtype=np.float64)
        cdf = np.cumsum([p for _, p in self.support]).astype(np.float64)
        cdf[-1] = 1.0
        return values, cdf


class VertexRef(NamedTuple):
    arena_id: int
    level: int
    parent_id: int
    child_slot: int  # 1..b; 0 for the root and its augmented parent


class TreeArena:
    """Append-only vertex store with parent links and b child slots each."""

    def __init__(self, b: int, capacity: int, with_env: bool = False):
        if capacity < 2:
            raise ValueError("capacity must cover <-root and root")
        self.b = b
        self.capacity = capacity
        self.parent = np.zeros(capacity, dtype=np.int64)
        self.level = np.zeros(capacity, dtype=np.int64)
        self.children = np.zeros((capacity, b), dtype=np.int64)
        self.env = np.zeros((capacity, b), dtype=np.float64) if with_env else None
        self.child_slot = np.zeros(capacity, dtype=np.int64)
        self.parent[ROOT_PARENT] = -1
        self.level[ROOT_PARENT] = -1
        self.parent[ROOT] = ROOT_PARENT
        self.level[ROOT] = 0
        self.next_free = 2

    def child(self, v: int, slot: int) -> int:
        """Arena id of child ``slot`` (1..b) of v, or 0 if never visited."""
        return int(self.children[v, slot - 1])

    def allocate_child(self, v: int, slot: int) -> int:
        if self.children[v, slot - 1] != 0:
            raise ValueError("child already materialized")
        if self.next_free >= self.capacity:
            raise ArenaFull(f"vertex capacity {self.capacity} exhausted")
        u = self.next_free
        self.next_free += 1
        self.children[v, slot - 1] = u
        self.parent[u] = v
        self.level[u] = self.level[v] + 1
        self.child_slot[u] = slot
        return u

    def ref(self, v: int) -> VertexRef:
        return VertexRef(v, int(self.level[v]), int(self.parent[v]),
                         int(self.child_slot[v]))


@dataclass
class WeightState:
    """ORRW reinforcement state, derived from the arena.

    The crossed set is { parent edges of materialized vertices } plus the
    pre-reinforced root--parent edge; see the module docstring for why no
    separate bookkeeping is needed.
    """

    arena: TreeArena
    delta: float

    def parent_edge_crossed(self, v: int) -> bool:
        # Every materialized vertex was entered from its parent at least once.
        return True

    def child_edge_crossed(self, v: int, slot: int) -> bool:
        return self.arena.child(v, slot) != 0


def transition_weights_rwre(a: np.ndarray) -> np.ndarray:
    """Probabilities (parent, child 1..b) from a vertex's weight vector."""
    a = np.asarray(a, dtype=np.float64)
    if np.any(a <= 0.0) or not np.all(np.isfinite(a)):
        raise ValueError("environment vector must be strictly positive finite")
    denom = 1.0 + a.sum()
    out = np.empty(a.size + 1)
    out[0] = 1.0 / denom
    out[1:] = a / denom
    return out


def transition_weights_orrw(state: WeightState, at: int) -> np.ndarray:
    """Probabilities (parent, child 1..b) under the current reinforcement."""
    b = state.arena.b
    w = np.ones(b + 1)
    w[0] = state.delta  # parent edge of any visited vertex is reinforced
    for slot in range(1, b + 1):
        if state.child_edge_crossed(at, slot):
            w[slot] = state.delta
    return w / w.sum()


def _pick_atom(values: np.ndarray, cdf: np.ndarray, u: float) -> float:
    i = 0
    while u > cdf[i]:
        i += 1
    return float(values[i])


def sample_env(v: int, spec: EnvSpec, rng: SequentialRng) -> np.ndarray:
    """Draw the weight vector of vertex v (consumes 1 or b uniforms)."""
    values, cdf = spec.support_arrays()
    if spec.coupling == "identical":
        x = _pick_atom(values, cdf, rng.next_unit())
        return np.full(spec.b, x)
    return np.array([_pick_atom(values, cdf, rng.next_unit())
                     for _ in range(spec.b)])


@dataclass
class WalkState:
    """One replica of the walk, positioned somewhere in its arena."""

    spec: EnvSpec
    arena: TreeArena
    rng: SequentialRng
    position: int = ROOT
    step_count: int = 0
    weight_state: WeightState | None = field(default=None)

    @classmethod
    def start(cls, spec: EnvSpec, seed: SeedSpec, capacity: int = 1 << 20) -> "WalkState":
        arena = TreeArena(spec.b, capacity, with_env=spec.model == "rwre")
        rng = SequentialRng(seed)
        walk = cls(spec=spec, arena=arena, rng=rng)
        if spec.model == "rwre":
            arena.env[ROOT] = sample_env(ROOT, spec, rng)
        else:
            walk.weight_state = WeightState(arena, spec.delta)
        return walk

    def env_at(self, v: int) -> np.ndarray:
        """Memoized environment vector of a materialized vertex."""
        if self.arena.env[v, 0] == 0.0:
            self.arena.env[v] = sample_env(v, self.spec, self.rng)
        return self.arena.env[v]


def step(walk: WalkState) -> tuple[int, int]:
    """Advance one step; returns (previous vertex, new vertex).

    Contract shared with the jitted kernel, down to the floating-point
    operation order, so the two implementations walk identical trajectories
    from identical seeds: no draw at ``<-root``; otherwise one uniform,
    compared as ``u * total_weight`` against running *unnormalized* weight
    sums (parent edge first, then child edges in slot order); a freshly
    materialized RWRE vertex consumes its environment draws on arrival.
    """
    arena = walk.arena
    b = walk.spec.b
    v = walk.position
    if v == ROOT_PARENT:
        walk.position = ROOT
        walk.step_count += 1
        return v, ROOT

    u = walk.rng.next_unit()
    choice = b  # fallthrough guard: last child absorbs rounding shortfall
    if walk.spec.model == "rwre":
        a = walk.env_at(v)
        total = 1.0
        for i in range(b):
            total += a[i]
        t = u * total
        cum = 1.0
        if t <= cum:
            choice = 0
        else:
            for i in range(1, b + 1):
                cum += a[i - 1]
                if t <= cum:
                    choice = i
                    break
    else:
        delta = walk.spec.delta
        total = delta
        for i in range(1, b + 1):
            total += delta if arena.child(v, i) != 0 else 1.0
        t = u * total
        cum = delta
        if t <= cum:
            choice = 0
        else:
            for i in range(1, b + 1):
                cum += delta if arena.child(v, i) != 0 else 1.0
                if t <= cum:
                    choice = i
                    break

    if choice == 0:
        new = int(arena.parent[v])
    else:
        new = arena.child(v, choice)
        if new == 0:
            new = arena.allocate_child(v, choice)
            if walk.spec.model == "rwre":
                arena.env[new] = sample_env(new, walk.spec, walk.rng)
    walk.position = new
    walk.step_count += 1
    return v, new


@dataclass(frozen=True)
class TransienceReport:
    verdict: str  # transient | recurrent | inapplicable
    criterion_value: float
    argmin_t: float
    threshold: float
    note: str = ""


def transience_check(spec: EnvSpec, tol: float = 1e-9) -> TransienceReport:
    """Classify the regime.

    RWRE on the b-ary tree is transient iff min over t in [0,1] of
    E[A^t] exceeds 1/b; ORRW is transient for every delta > 0 and b >= 2.
    The criterion function t -> E[A^t] is smooth and convex, so a coarse grid
    plus a bounded scalar minimization pins the minimum down comfortably
    within the tolerance used to call the boundary case.
    """
    if spec.model == "orrw":
        return TransienceReport("transient", math.inf, 0.0, 1.0 / spec.b,
                                note="once-reinforced walks on b-ary trees are "
                                     "always transient")

    values = np.array([v for v, _ in spec.support])
    probs = np.array([p for _, p in spec.support])

    def phi(t: float) -> float:
        return float(np.sum(probs * values ** t))

    grid = np.linspace(0.0, 1.0, 129)
    vals = [phi(t) for t in grid]
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    if lo == hi:
        t_star, f_star = grid[i], vals[i]
    else:
        from scipy.optimize import minimize_scalar

        res = minimize_scalar(phi, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        t_star, f_star = float(res.x), float(res.fun)
        if vals[i] < f_star:  # never worse than the grid
            t_star, f_star = grid[i], vals[i]

    threshold = 1.0 / spec.b
    if f_star > threshold + tol:
        verdict = "transient"
    elif f_star < threshold - tol:
        verdict = "recurrent"
    else:
        verdict = "inapplicable"
    return TransienceReport(verdict, f_star, t_star, threshold)
