"""Online detection of regeneration levels and visit statistics.

A level k regenerates if the walk, after first hitting level k (at its
first-hit vertex), never steps from that vertex back to the vertex's parent.
On a tree this has a convenient structure:

* Only levels reached as a *new running maximum* are candidates, and the
  candidate vertex of level k is fixed at that first hit.
* While candidates k < j are both undecided, the walk is strictly inside the
  subtree below candidate j (leaving it is exactly the event that kills j),
  which itself sits inside the subtree below candidate k.  So candidates die
  in strict LIFO order, and the tracker only ever needs to compare a step
  against the top of its pending stack.

True confirmation would need infinite time, so a guard is used: at the end
of a trajectory, a surviving candidate is *confirmed* when the walk's maximum
level went at least ``guard`` levels past it, and *censored* otherwise.
Within the observed trajectory a confirmed level is exact — the walk really
never backtracked through it — censoring is the only approximation, and it is
counted, never silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import ROOT, ROOT_PARENT

DEFAULT_GUARD = 32


@dataclass(frozen=True, slots=True)
class RegenBlock:
    """One inter-regeneration increment (levels and times).

    Slots matter here: campaigns hold hundreds of thousands of these.
    """

    ell_prev: int
    ell_next: int
    tau_prev: int
    tau_next: int
    censored: bool

    @property
    def delta_ell(self) -> int:
        return self.ell_next - self.ell_prev

    @property
    def delta_tau(self) -> int:
        return self.tau_next - self.tau_prev


@dataclass
class VisitStats:
    """Occupation statistics accumulated alongside regeneration tracking."""

    L_root: int = 1  # the walk starts at the root
    Pi_levels: dict[int, int] = field(default_factory=lambda: {0: 1})
    Pi_total_to_tau1: int | None = None


@dataclass(frozen=True)
class _Pending:
    level: int
    vertex: int
    time: int
    distinct: int  # distinct vertices visited up to and including this hit


class RegenTracker:
    """Consumes walk steps in order; produces blocks on finalize."""

    def __init__(self, guard: int = DEFAULT_GUARD):
        if guard < 1:
            raise ValueError("guard must be positive")
        self.guard = guard
        self.pending: list[_Pending] = []
        self.max_level = 0
        self.stats = VisitStats()
        self.distinct = 1
        self._seen_root_parent = False
        self._last_step = 0
        self._finalized = False

    def observe(self, step: int, frm: int, frm_level: int, to: int,
                to_level: int, to_is_new: bool) -> None:
        """Record the step ``frm -> to`` taken at time ``step``.

        ``to_is_new`` marks the first visit to a materialized vertex (the
        tracker handles the augmented root-parent itself).
        """
        if self._finalized:
            raise RuntimeError("tracker already finalized")
        if step != self._last_step + 1:
            raise ValueError(f"out-of-order step {step} after {self._last_step}")
        self._last_step = step

        if to == ROOT_PARENT and not self._seen_root_parent:
            self._seen_root_parent = True
            to_is_new = True

        # Backtrack through the current top candidate?
        if to_level == frm_level - 1 and self.pending \
                and self.pending[-1].vertex == frm:
            self.pending.pop()

        if to == ROOT:
            self.stats.L_root += 1
        if to_is_new:
            self.distinct += 1
            if to_level >= 0:
                self.stats.Pi_levels[to_level] = \
                    self.stats.Pi_levels.get(to_level, 0) + 1

        if to_level > self.max_level:
            self.max_level = to_level
            if to_level >= 1:
                self.pending.append(_Pending(to_level, to, step, self.distinct))

    def finalize(self) -> tuple[list[RegenBlock], VisitStats, float]:
        self._finalized = True
        blocks, pi_tau1, censor_fraction = blocks_from_candidates(
            [(p.level, p.time, p.distinct) for p in self.pending],
            self.max_level, self.guard)
        self.stats.Pi_total_to_tau1 = pi_tau1
        return blocks, self.stats, censor_fraction


def blocks_from_candidates(candidates: list[tuple[int, int, int]],
                           max_level: int, guard: int,
                           ) -> tuple[list[RegenBlock], int | None, float]:
    """Turn surviving (level, time, distinct) candidates into blocks.

    Shared by the Python tracker and the kernel post-processing.  Candidates
    must be the never-discarded ones, in increasing level order.  Returns
    (blocks, distinct-vertices-by-tau1 or None, censor fraction).
    """
    threshold = max_level - guard
    n_confirmed = 0
    for level, _, _ in candidates:
        if level <= threshold:
            n_confirmed += 1
        else:
            break

    blocks: list[RegenBlock] = []
    prev_level, prev_time = 0, 0
    for i, (level, time, _) in enumerate(candidates):
        blocks.append(RegenBlock(prev_level, level, prev_time, time,
                                 censored=i >= n_confirmed))
        prev_level, prev_time = level, time

    pi_tau1 = candidates[0][2] if n_confirmed >= 1 else None
    total = len(candidates)
    censor_fraction = (total - n_confirmed) / total if total else 1.0
    if n_confirmed == 0:
        censor_fraction = 1.0
    return blocks, pi_tau1, censor_fraction
