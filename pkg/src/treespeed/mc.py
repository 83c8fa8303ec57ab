"""Seeded Monte Carlo campaigns and verification against the bounds.

A campaign runs ``replicas`` independent walks (one jitted kernel call per
replica, replica i seeded from ``SeedSpec(seed, i)``), post-processes each
into regeneration blocks, and exposes estimators:

* speed, two ways: final level / final step per replica, and the pooled
  block ratio sum(delta level) / sum(delta time);
* the return probability to the augmented root-parent, as a two-sided
  enclosure [beta_low, beta_high] (walks that neither returned nor cleared
  the reference level within the budget stay undecided);
* the tail of the first regeneration level, the covariance (CLT variance)
  ratio, and stochastic-domination diagnostics for distinct-vertex counts
  and root visits.

``verify`` pairs each estimate with its analytic counterpart and issues one
verdict per check: "fail" only when the empirical 3-sigma interval lies
strictly on the violating side, "inapplicable" when the bound itself is
gated off (recurrent walk, delta = 1, ...).  Reports are pure functions of
(spec, config): replica order is fixed and worker count only changes wall
time, never output bytes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import regen
from .bounds import BoundsReport, build_bounds_report
from .model import EnvSpec
from .rng import PURPOSE_WALK, SeedSpec

_STATUS_NAMES = {0: "ok", 1: "level_cap", 2: "memory_cap"}
Z_SIGMA = 3.0


@dataclass(frozen=True)
class CampaignConfig:
    """Knobs of one simulation campaign."""

    replicas: int
    max_steps: int
    seed: int
    max_level: int | None = None
    guard: int = regen.DEFAULT_GUARD
    workers: int = 1
    pi_cap: int = 1024
    beta_level: int = 64
    tail_n_max: int = 5
    block_cap: int = 2048

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        if self.max_steps < 1:
            raise ValueError("need a positive step budget")
        if self.seed < 0 or self.seed > 2 ** 64 - 1:
            raise ValueError("seed must fit in 64 bits")
        if self.guard < 1 or self.workers < 1 or self.pi_cap < 2:
            raise ValueError("guard, workers and pi_cap must be positive")
        if self.max_level is not None and self.max_level < 1:
            raise ValueError("max_level must be positive when given")
        if self.beta_level < 1:
            raise ValueError("beta_level must be >= 1")
        if self.tail_n_max < 1:
            raise ValueError("tail_n_max must be >= 1")
        if self.block_cap < 1:
            raise ValueError("block_cap must be >= 1")

    def resolved_max_level(self) -> int:
        """The level horizon actually passed to the kernel."""
        return self.max_level if self.max_level is not None \
            else self.max_steps + 1

    def to_dict(self) -> dict:
        """Serialized form; deliberately omits ``workers``.

        Worker count is an execution knob with no effect on results, so it
        must never reach report bytes (reports are byte-identical across
        worker counts).
        """
        return {"replicas": self.replicas, "max_steps": self.max_steps,
                "seed": self.seed, "max_level": self.max_level,
                "guard": self.guard, "pi_cap": self.pi_cap,
                "beta_level": self.beta_level,
                "tail_n_max": self.tail_n_max,
                "block_cap": self.block_cap}

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        return cls(**d)


@dataclass(frozen=True)
class ReplicaStats:
    """Everything one replica contributes to the estimators."""

    replica: int
    status: str
    final_step: int
    final_level: int
    max_level_reached: int
    l_root: int
    distinct: int
    first_return_step: int  # -1 when the walk never returned
    max_level_before_return: int
    n_vertices: int
    censor_fraction: float
    pi_to_tau1: int | None
    blocks: tuple[regen.RegenBlock, ...]
    pi_levels: np.ndarray = field(repr=False)

    @property
    def speed(self) -> float:
        return self.final_level / self.final_step

    def returned_before(self, level: int) -> bool | None:
        """Did the walk hit the root-parent before exceeding ``level``?

        True/False when decided within the budget, None when undecided.
        """
        if self.first_return_step >= 0:
            return self.max_level_before_return <= level
        if self.max_level_reached > level:
            return False
        return None


@dataclass(frozen=True)
class CampaignResult:
    spec: EnvSpec
    config: CampaignConfig
    transience_verdict: str
    replicas: tuple[ReplicaStats, ...]

    def speeds(self) -> np.ndarray:
        return np.array([r.speed for r in self.replicas])

    def pooled_blocks(self) -> list[regen.RegenBlock]:
        """Uncensored blocks, first block of each replica dropped.

        The first block is not identically distributed with the rest (its
        law is unconditioned), so ratio estimators use blocks 2..N only.
        """
        out = []
        for r in self.replicas:
            for blk in r.blocks[1:]:
                if not blk.censored:
                    out.append(blk)
        return out

    def first_block_levels(self) -> np.ndarray:
        """First-regeneration levels, where the first block is uncensored."""
        vals = [r.blocks[0].delta_ell for r in self.replicas
                if r.blocks and not r.blocks[0].censored]
        return np.array(vals, dtype=np.int64)


def _replica_from_kernel(i: int, out, guard: int,
                         block_cap: int) -> ReplicaStats:
    (status, final_step, final_level, max_lev, l_root, distinct,
     first_return, max_before, pi_levels, pend_level, pend_time,
     pend_distinct, n_vertices) = out
    # Mirrors regen.blocks_from_candidates (the two are tested against each
    # other), but materializes at most ``block_cap`` block objects.  Blocks
    # after the first form an iid sequence, so keeping a prefix leaves every
    # estimator unbiased while memory stays flat even on long runs; censor
    # accounting still sees every surviving candidate.
    n_total = int(pend_level.shape[0])
    n_confirmed = int(np.searchsorted(pend_level, int(max_lev) - guard,
                                      side="right"))
    censor_fraction = 1.0 if n_confirmed == 0 \
        else (n_total - n_confirmed) / n_total
    pi_tau1 = int(pend_distinct[0]) if n_confirmed >= 1 else None
    keep = min(n_total, block_cap)
    levels = pend_level[:keep].tolist()
    times = pend_time[:keep].tolist()
    blocks = []
    prev_level, prev_time = 0, 0
    for j in range(keep):
        blocks.append(regen.RegenBlock(prev_level, levels[j], prev_time,
                                       times[j], censored=j >= n_confirmed))
        prev_level, prev_time = levels[j], times[j]
    return ReplicaStats(
        replica=i, status=_STATUS_NAMES[int(status)],
        final_step=int(final_step), final_level=int(final_level),
        max_level_reached=int(max_lev), l_root=int(l_root),
        distinct=int(distinct), first_return_step=int(first_return),
        max_level_before_return=int(max_before), n_vertices=int(n_vertices),
        censor_fraction=censor_fraction, pi_to_tau1=pi_tau1,
        blocks=tuple(blocks), pi_levels=pi_levels)


def run_campaign(spec: EnvSpec, config: CampaignConfig) -> CampaignResult:
    """Run all replicas; deterministic in (spec, config), any worker count."""
    from . import _kernels
    from .model import transience_check

    verdict = transience_check(spec).verdict
    is_rwre = spec.model == "rwre"
    if is_rwre:
        values, cdf = spec.support_arrays()
    else:
        values = cdf = np.ones(1)
    delta = float(spec.delta) if spec.delta is not None else 0.0
    max_level = config.resolved_max_level()
    vertex_cap = config.max_steps + 2

    def one(i: int) -> ReplicaStats:
        state = np.uint64(SeedSpec(config.seed, i, PURPOSE_WALK).state())
        out = _kernels.walk_kernel(
            state, config.max_steps, spec.b, is_rwre, values, cdf,
            spec.coupling == "iid", delta, max_level, vertex_cap,
            config.pi_cap)
        return _replica_from_kernel(i, out, config.guard, config.block_cap)

    if config.workers == 1:
        stats = [one(i) for i in range(config.replicas)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            stats = list(pool.map(one, range(config.replicas)))
    return CampaignResult(spec, config, verdict, tuple(stats))


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def wilson_interval(hits: int, n: int, z: float = Z_SIGMA) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("empty sample")
    ph = hits / n
    denom = 1.0 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1.0 - ph) / n + z * z / (4 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def _mean_se(values: Iterable[float]) -> tuple[float, float, int]:
    arr = np.asarray(list(values), dtype=np.float64)
    n = arr.size
    mean = float(arr.mean()) if n else math.nan
    se = float(arr.std(ddof=1) / math.sqrt(n)) if n >= 2 else math.nan
    return mean, se, n


def estimate_speed(result: CampaignResult) -> dict:
    """Global (per replica) and block-ratio speed estimates with 3-sigma CIs."""
    mean, se, n = _mean_se(result.speeds())
    out = {"global": {"mean": mean, "se": se, "n": n,
                      "ci3": [mean - Z_SIGMA * se, mean + Z_SIGMA * se]}}
    blocks = result.pooled_blocks()
    if blocks:
        d_ell = np.array([b.delta_ell for b in blocks], dtype=np.float64)
        d_tau = np.array([b.delta_tau for b in blocks], dtype=np.float64)
        s_tau = float(d_tau.sum())
        v = float(d_ell.sum()) / s_tau
        resid = d_ell - v * d_tau
        se_b = float(np.sqrt((resid ** 2).sum())) / s_tau
        out["block"] = {"mean": v, "se": se_b, "n_blocks": len(blocks),
                        "ci3": [v - Z_SIGMA * se_b, v + Z_SIGMA * se_b]}
        if n >= 2 and len(blocks) >= 2:
            gap = abs(mean - v)
            tol = Z_SIGMA * math.sqrt(se ** 2 + se_b ** 2)
            out["estimators_agree"] = bool(gap <= tol)
    else:
        out["block"] = None
    return out


def estimate_beta(result: CampaignResult, level: int | None = None) -> dict:
    """Two-sided enclosure of the return probability to the root-parent.

    ``beta_low`` counts walks that verifiably returned before exceeding
    ``level``; walks that ran out of budget while staying at or below the
    level are undecided and widen the enclosure upward.
    """
    h = level if level is not None else result.config.beta_level
    returned = undecided = 0
    for r in result.replicas:
        flag = r.returned_before(h)
        if flag is None:
            undecided += 1
        elif flag:
            returned += 1
    n = len(result.replicas)
    beta_low = returned / n
    beta_high = (returned + undecided) / n
    return {"level": h, "n": n, "returned": returned,
            "undecided": undecided,
            "beta_low": beta_low, "beta_high": beta_high,
            "se_low": math.sqrt(beta_low * (1 - beta_low) / n),
            "se_high": math.sqrt(beta_high * (1 - beta_high) / n)}


def estimate_root_visits(result: CampaignResult) -> dict:
    mean, se, n = _mean_se(r.l_root for r in result.replicas)
    return {"mean": mean, "se": se, "n": n,
            "ci3": [mean - Z_SIGMA * se, mean + Z_SIGMA * se]}


def estimate_tail_ell1(result: CampaignResult, gamma: float, psi: int,
                       zeta: int, n_max: int | None = None) -> list[dict]:
    """Empirical P(ell_1 >= n psi zeta) rows against gamma^(n-1)."""
    n_max = n_max if n_max is not None else result.config.tail_n_max
    firsts = result.first_block_levels()
    n = firsts.size
    rows = []
    for k in range(1, n_max + 1):
        threshold = k * psi * zeta
        bound = gamma ** (k - 1)
        if n < 30:
            rows.append({"n": k, "threshold_level": threshold,
                         "bound": bound, "empirical": None,
                         "interval": None, "verdict": "inconclusive",
                         "note": f"only {n} uncensored first blocks"})
            continue
        hits = int((firsts >= threshold).sum())
        lo, hi = wilson_interval(hits, n)
        verdict = "fail" if lo > bound else "pass"
        rows.append({"n": k, "threshold_level": threshold, "bound": bound,
                     "empirical": hits / n, "interval": [lo, hi],
                     "verdict": verdict, "note": ""})
    return rows


def estimate_covariance(result: CampaignResult,
                        v_hat: float | None = None) -> dict | None:
    """Block estimator of the CLT variance parameter K.

    K-hat = mean[(delta level - v delta time)^2] / mean[delta time]; the
    standard error is a first-order ratio linearization (the noise of the
    plugged-in speed estimate enters only at second order because the
    centered residuals have mean ~ 0).
    """
    blocks = result.pooled_blocks()
    if len(blocks) < 2:
        return None
    d_ell = np.array([b.delta_ell for b in blocks], dtype=np.float64)
    d_tau = np.array([b.delta_tau for b in blocks], dtype=np.float64)
    if v_hat is None:
        v_hat = float(d_ell.sum() / d_tau.sum())
    g = (d_ell - v_hat * d_tau) ** 2
    s_tau = float(d_tau.sum())
    k_hat = float(g.sum()) / s_tau
    resid = g - k_hat * d_tau
    se = float(np.sqrt((resid ** 2).sum())) / s_tau
    return {"K": k_hat, "se": se, "n_blocks": len(blocks), "v_used": v_hat,
            "ci3": [k_hat - Z_SIGMA * se, k_hat + Z_SIGMA * se]}


def domination_rows(counts: np.ndarray, base: float, j_max: int = 24,
                    min_n: int = 30) -> list[dict]:
    """Check P(count >= j) <= base^(j-1) pointwise with Wilson intervals."""
    n = counts.size
    rows = []
    for j in range(2, j_max + 1):
        bound = base ** (j - 1)
        hits = int((counts >= j).sum())
        if hits == 0 and bound > 1e-12:
            break
        if n < min_n:
            rows.append({"j": j, "bound": bound, "empirical": None,
                         "verdict": "inconclusive",
                         "note": f"only {n} samples"})
            break
        lo, hi = wilson_interval(hits, n)
        rows.append({"j": j, "bound": bound, "empirical": hits / n,
                     "interval": [lo, hi],
                     "verdict": "fail" if lo > bound else "pass", "note": ""})
    return rows


def pi_level_domination(result: CampaignResult, alpha: float, psi: int,
                        k_values: tuple[int, ...] = (1, 2, 3, 4, 5)) -> list[dict]:
    """Distinct-vertex counts at levels k*psi against the alpha^(j-1) tail.

    Visiting j distinct vertices at one level needs j - 1 failed escapes,
    each bounded by the extinction probability, so the whole-trajectory
    distinct count at level k*psi is stochastically dominated by a
    geometric(1 - alpha) law.
    """
    out = []
    for k in k_values:
        lev = k * psi
        if lev >= result.config.pi_cap:
            continue
        counts = np.array([int(r.pi_levels[lev]) for r in result.replicas])
        for row in domination_rows(counts, alpha):
            row["level"] = lev
            out.append(row)
    return out


def offspring_mean_check(summary) -> dict | None:
    """Exact mean offspring against the sampled offspring distribution."""
    dist = summary.offspring
    if dist is None or dist.provenance != "monte_carlo":
        return None
    mean = dist.mean()
    second = math.fsum(k * k * p for k, p in enumerate(dist.probs))
    se = math.sqrt(max(second - mean * mean, 0.0) / dist.n_samples)
    diff = mean - summary.m_psi
    return {"exact": summary.m_psi, "sampled": mean, "se": se,
            "verdict": "pass" if abs(diff) <= Z_SIGMA * se else "fail"}


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    spec: EnvSpec
    config: CampaignConfig
    entries: tuple[dict, ...]
    overall: str
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"env": self.spec.to_dict(), "campaign": self.config.to_dict(),
                "overall": self.overall, "entries": list(self.entries),
                "notes": list(self.notes)}


def _entry(name: str, verdict: str, analytic=None, empirical=None,
           interval=None, note: str = "", **extra) -> dict:
    e = {"name": name, "verdict": verdict, "analytic": analytic,
         "empirical": empirical, "interval": interval, "note": note}
    e.update(extra)
    return e


def verify(spec: EnvSpec, config: CampaignConfig,
           bounds: BoundsReport | None = None,
           campaign: CampaignResult | None = None) -> VerificationReport:
    """Pair every analytic bound with its Monte Carlo estimate."""
    if bounds is None:
        bounds = build_bounds_report(spec, seed=config.seed)
    if campaign is None:
        campaign = run_campaign(spec, config)

    entries: list[dict] = []
    notes: list[str] = []
    transient = bounds.transience.verdict == "transient"
    summary = bounds.branching
    ok_branch = summary.status == "ok" and summary.alpha_psi is not None \
        and summary.alpha_psi < 1.0
    if not transient:
        notes.append(f"transience verdict is "
                     f"'{bounds.transience.verdict}': speed and tail checks "
                     f"are inapplicable")

    speed = estimate_speed(campaign)
    g = speed["global"]

    # --- speed against the analytic window ---------------------------------
    if not transient or not bounds.speed_lower.applicable:
        reason = bounds.speed_lower.reason or "walk not certified transient"
        entries.append(_entry("speed_lower", "inapplicable", note=reason))
    else:
        w = bounds.speed_lower.value
        lo, hi = g["ci3"]
        if lo > w and hi < 1.0:
            verdict = "pass"
        elif hi <= w:
            verdict = "fail"
        else:
            verdict = "inconclusive"
        entries.append(_entry("speed_lower", verdict, analytic=w,
                              empirical=g["mean"], interval=g["ci3"]))

    if bounds.speed_upper.applicable and transient:
        u = bounds.speed_upper.value
        lo, hi = g["ci3"]
        verdict = "fail" if lo > u else ("pass" if hi <= u else "inconclusive")
        entries.append(_entry("speed_upper", verdict, analytic=u,
                              empirical=g["mean"], interval=g["ci3"]))

    # --- return probability vs extinction ----------------------------------
    beta = estimate_beta(campaign)
    if not ok_branch or not transient:
        entries.append(_entry("return_prob_vs_extinction", "inapplicable",
                              note="no extinction probability available"))
    else:
        # The analytic claim is one-sided (beta <= alpha).  Wilson intervals
        # instead of normal SEs: at 0/n or n/n returns the binomial SE
        # degenerates to zero and would certify noise as a violation.
        alpha = summary.alpha_psi
        n = beta["n"]
        lo_conf_low, _ = wilson_interval(beta["returned"], n)
        lo_conf_high, hi_conf_high = wilson_interval(
            beta["returned"] + beta["undecided"], n)
        if lo_conf_low > alpha:
            verdict = "fail"
        elif lo_conf_high <= alpha:
            verdict = "pass"
        else:
            verdict = "inconclusive"
        entries.append(_entry(
            "return_prob_vs_extinction", verdict, analytic=alpha,
            empirical=[beta["beta_low"], beta["beta_high"]],
            interval=[lo_conf_low, hi_conf_high],
            note=f"{beta['undecided']} undecided replicas"))

    # --- first-regeneration level tail --------------------------------------
    if transient and ok_branch and summary.gamma is not None:
        rows = estimate_tail_ell1(campaign, summary.gamma, summary.psi,
                                  summary.zeta)
        for row in rows:
            entries.append(_entry(
                f"ell1_tail_n{row['n']}", row["verdict"],
                analytic=row["bound"], empirical=row["empirical"],
                interval=row["interval"],
                note=row["note"] or f"level >= {row['threshold_level']}"))
    else:
        entries.append(_entry("ell1_tail", "inapplicable",
                              note="no tail base gamma available"))

    # --- distinct-vertex domination ----------------------------------------
    if transient and ok_branch:
        rows = pi_level_domination(campaign, summary.alpha_psi, summary.psi)
        decided = [r for r in rows if r["verdict"] != "inconclusive"]
        if not decided:
            verdict = "inconclusive"
        elif any(r["verdict"] == "fail" for r in decided):
            verdict = "fail"
        else:
            verdict = "pass"
        entries.append(_entry("distinct_vertices_domination", verdict,
                              analytic=summary.alpha_psi, rows=rows))

    # --- ORRW: root visits dominated by a geometric law ---------------------
    if spec.model == "orrw" and ok_branch and spec.delta > 1.0:
        s = (1.0 - summary.alpha_psi) * spec.b / (spec.b + spec.delta)
        counts = np.array([r.l_root for r in campaign.replicas])
        rows = domination_rows(counts, 1.0 - s)
        decided = [r for r in rows if r["verdict"] != "inconclusive"]
        if not decided:
            verdict = "inconclusive"
        elif any(r["verdict"] == "fail" for r in decided):
            verdict = "fail"
        else:
            verdict = "pass"
        entries.append(_entry("root_visits_domination", verdict,
                              analytic=1.0 - s, rows=rows))

    # --- speed x root visits x escape consistency ---------------------------
    visits = estimate_root_visits(campaign)
    if transient and g["n"] >= 2 and visits["n"] >= 2:
        lhs = g["mean"] * visits["mean"]
        se_lhs = math.hypot(g["se"] * visits["mean"], visits["se"] * g["mean"])
        rhs = 1.0 - beta["beta_high"]
        se_rhs = beta["se_high"]
        diff = lhs - rhs
        se_diff = math.hypot(se_lhs, se_rhs)
        verdict = "fail" if diff < -Z_SIGMA * se_diff else "pass"
        entries.append(_entry(
            "speed_visits_consistency", verdict, analytic=rhs,
            empirical=lhs, interval=[lhs - Z_SIGMA * se_lhs,
                                     lhs + Z_SIGMA * se_lhs],
            note="mean speed x mean root visits >= escape probability"))

    # --- covariance window ---------------------------------------------------
    cov_est = estimate_covariance(campaign)
    if not bounds.covariance.applicable or not transient:
        entries.append(_entry("covariance_K", "inapplicable",
                              note=bounds.covariance.reason
                              or "walk not certified transient"))
    elif cov_est is None:
        entries.append(_entry("covariance_K", "inconclusive",
                              note="not enough uncensored blocks"))
    else:
        k_lo = bounds.covariance.lower - Z_SIGMA * cov_est["se"]
        k_hi = bounds.covariance.upper + Z_SIGMA * cov_est["se"]
        inside = k_lo <= cov_est["K"] <= k_hi
        entries.append(_entry(
            "covariance_K", "pass" if inside else "fail",
            analytic=[bounds.covariance.lower, bounds.covariance.upper],
            empirical=cov_est["K"], interval=cov_est["ci3"],
            note=f"{cov_est['n_blocks']} blocks"))

    # --- sampled offspring law vs exact mean --------------------------------
    osc = offspring_mean_check(summary) if summary.status == "ok" else None
    if osc is not None:
        entries.append(_entry("offspring_mean", osc["verdict"],
                              analytic=osc["exact"], empirical=osc["sampled"],
                              interval=[osc["sampled"] - Z_SIGMA * osc["se"],
                                        osc["sampled"] + Z_SIGMA * osc["se"]]))

    # --- censoring accounting ------------------------------------------------
    worst = max((r.censor_fraction for r in campaign.replicas), default=1.0)
    entries.append(_entry(
        "censor_fraction", "pass" if worst < 0.01 else "fail",
        analytic=0.01, empirical=worst,
        note="largest per-replica censored share of regeneration blocks"
             " (longer runs censor less)"))

    if any(e["verdict"] == "fail" for e in entries):
        overall = "fail"
    elif any(e["verdict"] == "pass" for e in entries):
        overall = "pass"
    else:
        overall = "inconclusive"
    return VerificationReport(spec, config, tuple(entries), overall,
                              tuple(notes))
