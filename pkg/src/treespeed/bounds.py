"""Explicit analytic bounds: speed, tails, regeneration-time moments.

Everything here is a deterministic function of the environment law and the
branching summary — no sampling.  The chain of dependencies:

    geometric moments M(n, q)  (exact integer-coefficient expansion)
      -> theta(p, n): moments of the local time contribution of level n
      -> E[L(rho)^p]: total root visits, by a Hoelder series over the
         first regeneration level (RWRE) or geometric domination (ORRW)
      -> speed lower bound, E[tau_1^p], covariance bounds.

Each bound reports applicability explicitly: when a precondition fails
(recurrent walk, subcritical escape process, delta = 1, ...) the entry
carries the violated condition instead of a number.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from .branching import BranchingSummary
from .model import EnvSpec, TransienceReport, transience_check

DEFAULT_GEOM_CAP = 24
SERIES_TRUNCATION = 1e-14
SERIES_MAX_TERMS = 200


# ---------------------------------------------------------------------------
# geometric moments
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _geom_rows(cap: int) -> tuple[tuple[int, ...], ...]:
    """Integer coefficient rows: E[G^n] = sum_i a_i q^-i for G ~ Geom(q).

    Row n is (a_1, ..., a_n) with the recursion
    a_i^(n) = i * (a_{i-1}^(n-1) - a_i^(n-1)), out-of-range entries zero.
    """
    rows: list[tuple[int, ...]] = [(), (1,)]
    for n in range(2, cap + 1):
        prev = rows[n - 1]
        row = []
        for i in range(1, n + 1):
            left = prev[i - 2] if i >= 2 else 0
            right = prev[i - 1] if i <= n - 1 else 0
            row.append(i * (left - right))
        rows.append(tuple(row))
    return tuple(rows)


def geom_coefficients(n: int, cap: int = DEFAULT_GEOM_CAP) -> tuple[int, ...]:
    if not 1 <= n <= cap:
        raise ValueError(f"moment order {n} outside [1, {cap}]")
    return _geom_rows(cap)[n]


def geometric_moment(n: int, q: float, cap: int = DEFAULT_GEOM_CAP) -> float:
    """E[G^n] for G geometric on {1, 2, ...} with success probability q."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"success probability {q} outside (0, 1]")
    coeffs = geom_coefficients(n, cap)
    inv = 1.0 / q
    return math.fsum(a * inv ** i for i, a in enumerate(coeffs, start=1))


def geometric_moment_fraction(n: int, q: Fraction,
                              cap: int = DEFAULT_GEOM_CAP) -> Fraction:
    """Exact-rational version of ``geometric_moment`` (oracle grade)."""
    if not 0 < q <= 1:
        raise ValueError("success probability outside (0, 1]")
    coeffs = geom_coefficients(n, cap)
    inv = Fraction(1) / Fraction(q)
    return sum((a * inv ** i for i, a in enumerate(coeffs, start=1)),
               Fraction(0))


def c_constant(n: int, cap: int = DEFAULT_GEOM_CAP) -> int:
    """Positive-part mass of the coefficient row: sum_i max(a_i, 0)."""
    return sum(a for a in geom_coefficients(n, cap) if a > 0)


# ---------------------------------------------------------------------------
# environment moments and theta
# ---------------------------------------------------------------------------

def env_inverse_moment(spec: EnvSpec, p: int) -> float:
    """E[A^-p] of a single environment coordinate (coupling-free)."""
    if spec.model != "rwre":
        raise ValueError("environment moments are an RWRE notion")
    return math.fsum(w * v ** (-p) for v, w in spec.support)


def env_drift_moment(spec: EnvSpec, p: int) -> float:
    """E[(1 + 1/sum_i A^(i))^p], the local backtracking factor."""
    if spec.model != "rwre":
        raise ValueError("environment moments are an RWRE notion")
    if spec.coupling == "identical":
        return math.fsum(w * (1.0 + 1.0 / (spec.b * v)) ** p
                         for v, w in spec.support)
    total = 0.0
    for combo in itertools.product(spec.support, repeat=spec.b):
        w = math.prod(pr for _, pr in combo)
        s = sum(v for v, _ in combo)
        total += w * (1.0 + 1.0 / s) ** p
    return total


def theta(spec: EnvSpec, p: int, n: int,
          cap: int = DEFAULT_GEOM_CAP) -> float:
    """Bound on the p-th moment of level-n visit counts before regeneration.

    n = 1 is the root level; deeper levels pick up a factor b * n^(p-1)
    and the geometric sum of E[A^-p] over the n possible entry heights.
    """
    if n < 1:
        raise ValueError("level index must be >= 1")
    base = c_constant(p, cap) * env_drift_moment(spec, p)
    if n == 1:
        return base
    x = env_inverse_moment(spec, p)
    if abs(x - 1.0) < 1e-12:
        ratio = float(n)
    else:
        ratio = (x ** n - 1.0) / (x - 1.0)
    return base * spec.b * n ** (p - 1) * ratio


# ---------------------------------------------------------------------------
# L(rho): total visits to the root
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LRhoBound:
    p: int
    eps: int
    value: float | None
    applicable: bool
    method: str = ""
    n_terms: int = 0
    reason: str = ""


def _survival_bracket(x: float, b: int) -> float:
    """(1 - (1-x)^b) / x on [0, 1], continuously extended to b at 0."""
    if x <= 0.0:
        return float(b)
    if x >= 1.0:
        return 1.0
    return -math.expm1(b * math.log1p(-x)) / x


def l_rho_moment_bound(spec: EnvSpec, p: int, eps: int, alpha_psi: float,
                       cap: int = DEFAULT_GEOM_CAP,
                       truncation: float = SERIES_TRUNCATION,
                       max_terms: int = SERIES_MAX_TERMS) -> LRhoBound:
    """Bound on E[L(rho)^p], the p-th moment of total root visits.

    RWRE: a Hoelder split over the level reached before returning; term n
    couples theta(p + eps, n) against the probability that the escape
    process dies within n - 2 doublings (powers of alpha_psi).  ORRW with
    delta > 1: L(rho) is dominated by a geometric law directly.
    """
    if p < 1 or eps < 1:
        raise ValueError("p and eps must be integers >= 1")
    if not 0.0 <= alpha_psi < 1.0:
        return LRhoBound(p, eps, None, False,
                         reason=f"needs extinction alpha < 1, got {alpha_psi}")

    if spec.model == "orrw":
        if spec.delta <= 1.0:
            return LRhoBound(
                p, eps, None, False, method="geometric-domination",
                reason="geometric domination of root visits needs delta > 1")
        s = (1.0 - alpha_psi) * spec.b / (spec.b + spec.delta)
        return LRhoBound(p, eps, geometric_moment(p, s, cap), True,
                         method="geometric-domination", n_terms=1)

    q = 1.0 + eps / p
    q_conj = 1.0 + p / eps
    total = theta(spec, p + eps, 1, cap) ** (1.0 / q)
    n_terms = 1
    log_alpha = math.log(alpha_psi) if alpha_psi > 0.0 else -math.inf
    for n in range(2, max_terms + 1):
        e = spec.b ** (n - 2)
        alpha_pow = math.exp(e * log_alpha / q_conj) if alpha_psi > 0 else 0.0
        x = math.exp(e * log_alpha) if alpha_psi > 0 else 0.0
        term = (theta(spec, p + eps, n, cap) ** (1.0 / q)
                * alpha_pow * _survival_bracket(x, spec.b) ** (1.0 / q_conj))
        if not math.isfinite(term):
            raise ArithmeticError(
                f"root-visit series overflowed at term {n}")
        total += term
        n_terms = n
        if term < truncation * max(total, 1.0):
            return LRhoBound(p, eps, total, True, method="holder-series",
                             n_terms=n_terms)
    raise ArithmeticError(
        f"root-visit series did not reach truncation {truncation} within "
        f"{max_terms} terms (alpha_psi = {alpha_psi})")


# ---------------------------------------------------------------------------
# speed bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeedBound:
    value: float | None
    applicable: bool
    method: str = ""
    reason: str = ""
    components: dict = field(default_factory=dict)


def speed_lower_bound(spec: EnvSpec, summary: BranchingSummary,
                      eps: int = 1,
                      cap: int = DEFAULT_GEOM_CAP) -> SpeedBound:
    """Explicit lower bound on the a.s. speed lim level/step.

    RWRE: (1 - alpha_psi) / E-bound[L(rho)]; the denominator is the mean
    number of root visits, the numerator the escape probability per visit.
    ORRW: (1 - alpha_psi)^2 b / (b + delta) from the reinforced escape
    theorem when delta > 1; for delta < 1 the walk dominates the simple
    biased walk with the fresh-edge weights, giving (b - delta)/(b + delta).
    Exactly delta = 1 falls in neither regime.
    """
    if summary.status != "ok" or summary.alpha_psi is None:
        return SpeedBound(None, False,
                          reason="no supercritical escape process")
    alpha = summary.alpha_psi
    if alpha >= 1.0:
        return SpeedBound(None, False,
                          reason="extinction probability reached 1")

    if spec.model == "orrw":
        d = spec.delta
        if d > 1.0:
            val = (1.0 - alpha) ** 2 * spec.b / (spec.b + d)
            return SpeedBound(val, True, method="reinforced-escape",
                              components={"alpha_psi": alpha})
        if d < 1.0:
            val = (spec.b - d) / (spec.b + d)
            return SpeedBound(val, True, method="simple-walk-comparison",
                              components={})
        return SpeedBound(None, False, reason=(
            "delta = 1: the reinforced-escape theorem needs delta > 1 and "
            "the simple-walk comparison needs delta < 1"))

    l_bound = l_rho_moment_bound(spec, 1, eps, alpha, cap)
    if not l_bound.applicable:
        return SpeedBound(None, False, reason=l_bound.reason)
    val = (1.0 - alpha) / l_bound.value
    return SpeedBound(val, True, method="root-visit-series",
                      components={"alpha_psi": alpha,
                                  "mean_root_visits_bound": l_bound.value,
                                  "series_terms": l_bound.n_terms})


def speed_upper_bound(spec: EnvSpec) -> SpeedBound:
    """ORRW only: level drift at a fresh vertex caps the speed at b/(b+delta)."""
    if spec.model != "orrw":
        return SpeedBound(None, False,
                          reason="upper bound is specific to ORRW")
    return SpeedBound(spec.b / (spec.b + spec.delta), True,
                      method="fresh-vertex-drift")


def speed_bound_grid(spec: EnvSpec, summaries: dict[int, BranchingSummary],
                     eps_values: tuple[int, ...] = (1, 2),
                     cap: int = DEFAULT_GEOM_CAP):
    """Plain grid search over (psi, eps) candidates; returns (best, rows)."""
    rows = []
    best: SpeedBound | None = None
    best_key = None
    for psi, summary in sorted(summaries.items()):
        for eps in eps_values:
            sb = speed_lower_bound(spec, summary, eps, cap)
            rows.append({"psi": psi, "eps": eps, "value": sb.value,
                         "applicable": sb.applicable, "method": sb.method})
            if sb.applicable and (best is None or sb.value > best.value):
                best, best_key = sb, (psi, eps)
    return best, best_key, rows


# ---------------------------------------------------------------------------
# first-regeneration tails and moments
# ---------------------------------------------------------------------------

def ell1_tail_bound(n: int, gamma: float) -> float:
    """P(ell_1 >= n * psi * zeta) <= gamma^(n-1)."""
    if n < 1:
        raise ValueError("tail index must be >= 1")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("tail base gamma must lie in [0, 1)")
    return gamma ** (n - 1)


def ell1_second_moment_bound(gamma: float, psi: int, zeta: int) -> float:
    """E[ell_1^2] by Abel summation of the staircase tail bound.

    sum_n ((n s)^2 - ((n-1) s)^2) gamma^max(n-2, 0) has the closed form
    s^2 (4 + 2 gamma/(1-gamma)^2 + 3 gamma/(1-gamma)); no truncation loop,
    which matters when gamma is within 1e-5 of 1.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    s = float(psi * zeta)
    one_minus = 1.0 - gamma
    return s * s * (4.0 + 2.0 * gamma / one_minus ** 2
                    + 3.0 * gamma / one_minus)


def pi_moment_bound(p: int, gamma: float, psi: int, zeta: int,
                    alpha_psi: float, cap: int = DEFAULT_GEOM_CAP) -> float:
    """Bound on E[Pi^p]: distinct vertices visited before regeneration.

    Couples the geometric number of psi*zeta-level epochs (success
    1 - gamma^(1/(2 psi zeta))) against per-epoch population moments
    controlled by the extinction-dominated level counts.
    """
    if p < 1 or 2 * p > cap:
        raise ValueError(f"need 1 <= p and 2p <= geometric cap {cap}")
    if not 0.0 <= alpha_psi < 1.0:
        raise ValueError("needs extinction alpha < 1")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("needs tail base gamma < 1")
    s = psi * zeta
    pop_factor = math.sqrt(geometric_moment(2 * p, 1.0 - alpha_psi, cap))
    if gamma == 0.0:
        if s == 1:
            coeffs = geom_coefficients(p, cap)
            return sum(i * a for i, a in enumerate(coeffs, 1)) * pop_factor
        return math.inf
    g = gamma ** (1.0 / (2.0 * s))
    x = 1.0 - g
    return (gamma ** -0.5 / x * (geometric_moment(p, x, cap) - 1.0)
            * pop_factor)


@dataclass(frozen=True)
class Tau1Bound:
    p: int
    eps: int
    value: float | None
    applicable: bool
    reason: str = ""
    components: dict = field(default_factory=dict)


def tau1_moment_bound(spec: EnvSpec, p: int, eps: int,
                      summary: BranchingSummary,
                      cap: int = DEFAULT_GEOM_CAP) -> Tau1Bound:
    """Bound on E[tau_1^p] via Hoelder: root visits x excursion lengths.

    E[tau_1^p] <= (pi^2/6) E[L(rho)^(p+eps)]^(1/q) E[Pi^(2(p-1)q')]^(1/2q')
    E[Pi^(4q')]^(1/2q'), q = 1 + eps/p; the p = 1 case drops the middle
    factor.  Requires the Pi moment orders to be integers within the
    geometric table cap.
    """
    if p < 1 or eps < 1:
        raise ValueError("p and eps must be integers >= 1")
    if (summary.status != "ok" or summary.alpha_psi is None
            or summary.alpha_psi >= 1.0 or summary.gamma is None):
        return Tau1Bound(p, eps, None, False,
                         reason="needs a supercritical escape process with "
                                "alpha < 1 and a tail base gamma < 1")
    q = 1.0 + eps / p
    q_conj = 1.0 + p / eps
    mid_order_f = 2.0 * (p - 1) * q_conj
    last_order_f = 4.0 * q_conj
    if (abs(mid_order_f - round(mid_order_f)) > 1e-9
            or abs(last_order_f - round(last_order_f)) > 1e-9):
        return Tau1Bound(p, eps, None, False,
                         reason=f"Pi moment orders 2(p-1)q'={mid_order_f}, "
                                f"4q'={last_order_f} are not integers")
    mid_order, last_order = round(mid_order_f), round(last_order_f)
    if 2 * last_order > cap or (mid_order and 2 * mid_order > cap):
        return Tau1Bound(p, eps, None, False,
                         reason=f"Pi moment order exceeds geometric cap {cap}")

    l_bound = l_rho_moment_bound(spec, p + eps, eps, summary.alpha_psi, cap)
    if not l_bound.applicable:
        return Tau1Bound(p, eps, None, False, reason=l_bound.reason)
    args = (summary.gamma, summary.psi, summary.zeta, summary.alpha_psi, cap)
    last = pi_moment_bound(last_order, *args)
    comp = {"l_rho": l_bound.value, "pi_last": last}
    val = (math.pi ** 2 / 6.0) * l_bound.value ** (1.0 / q) \
        * last ** (1.0 / (2.0 * q_conj))
    if mid_order:
        mid = pi_moment_bound(mid_order, *args)
        comp["pi_mid"] = mid
        val *= mid ** (1.0 / (2.0 * q_conj))
    return Tau1Bound(p, eps, val, True, components=comp)


# ---------------------------------------------------------------------------
# covariance (CLT variance) bounds
# ---------------------------------------------------------------------------

def even_return_order(w: float) -> int:
    """Smallest even a >= floor(3/w) + 1, and >= 4."""
    if not 0.0 < w <= 1.0:
        raise ValueError("needs a speed lower bound w in (0, 1]")
    k = math.floor(3.0 / w) + 1
    return max(k if k % 2 == 0 else k + 1, 4)


def orrw_return_product(b: int, delta: float, a: int) -> Fraction:
    """Exact weight product for the ORRW down-up return pattern of order a."""
    if a < 4 or a % 2:
        raise ValueError("order must be an even integer >= 4")
    d = Fraction(delta)
    half = a // 2
    return ((Fraction(b) / (b + d)) ** 2
            * (d / (b + d)) ** (half - 1)
            * (d / (b - 1 + 2 * d)) ** (half - 1))


def _rwre_return_factors(spec: EnvSpec, a: int) -> tuple[float, float]:
    """(E[omega(root -> child)^(a/2)], E[omega(child -> root)^(a/2-1) *
    (1 - omega(child -> root))]) with exact support sums."""
    half = a // 2
    if spec.coupling == "identical":
        down = math.fsum(w * (v / (1.0 + spec.b * v)) ** half
                         for v, w in spec.support)
        up = math.fsum(w * (1.0 / (1.0 + spec.b * v)) ** (half - 1)
                       * (spec.b * v / (1.0 + spec.b * v))
                       for v, w in spec.support)
        return down, up
    down = up = 0.0
    for combo in itertools.product(spec.support, repeat=spec.b):
        w = math.prod(pr for _, pr in combo)
        s = sum(v for v, _ in combo)
        down += w * (combo[0][0] / (1.0 + s)) ** half
        up += w * (1.0 / (1.0 + s)) ** (half - 1) * (s / (1.0 + s))
    return down, up


@dataclass(frozen=True)
class CovarianceBounds:
    a: int | None
    lower: float | None
    upper: float | None
    applicable: bool
    reason: str = ""
    components: dict = field(default_factory=dict)


def covariance_bounds(spec: EnvSpec, summary: BranchingSummary,
                      speed_lower: float | None,
                      tau1_mean_bound: float | None,
                      tau1_second_bound: float | None,
                      cap: int = DEFAULT_GEOM_CAP) -> CovarianceBounds:
    """Two-sided bounds on the CLT variance parameter K.

    Upper: block second moments over the escape probability.  Lower: the
    probability of one explicit deep return excursion of even order a,
    chosen from the speed bound so the excursion is atypical enough.
    """
    if (summary.status != "ok" or summary.alpha_psi is None
            or summary.alpha_psi >= 1.0 or summary.gamma is None):
        return CovarianceBounds(None, None, None, False,
                                reason="needs alpha < 1 and gamma < 1")
    if speed_lower is None or not 0.0 < speed_lower <= 1.0:
        return CovarianceBounds(None, None, None, False,
                                reason="needs a positive speed lower bound")
    if tau1_mean_bound is None or tau1_second_bound is None:
        return CovarianceBounds(None, None, None, False,
                                reason="needs tau_1 moment bounds")
    alpha = summary.alpha_psi
    ell1_sq = ell1_second_moment_bound(summary.gamma, summary.psi,
                                       summary.zeta)
    upper = (ell1_sq + tau1_second_bound) / (1.0 - alpha)
    a = even_return_order(speed_lower)
    if spec.model == "orrw":
        walk_factor = float(orrw_return_product(spec.b, spec.delta, a))
        lower = (1.0 - alpha) / tau1_mean_bound * walk_factor
    else:
        down, up = _rwre_return_factors(spec, a)
        walk_factor = down * up
        lower = spec.b * (1.0 - alpha) / tau1_mean_bound * walk_factor
    return CovarianceBounds(a, lower, upper, True,
                            components={"ell1_second_moment": ell1_sq,
                                        "walk_factor": walk_factor})


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundsReport:
    spec: EnvSpec
    transience: TransienceReport
    branching: BranchingSummary
    speed_lower: SpeedBound
    speed_upper: SpeedBound
    l_rho: tuple[LRhoBound, ...]
    tau1: tuple[Tau1Bound, ...]
    covariance: CovarianceBounds
    ell1_tail_base: float | None
    block_level: int | None
    ell1_second_moment: float | None
    pi_moments: dict
    env_moments: dict
    theta_table: tuple
    eps: int
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "env": self.spec.to_dict(),
            "transience": {
                "verdict": self.transience.verdict,
                "criterion_value": self.transience.criterion_value,
                "argmin_t": self.transience.argmin_t,
                "threshold": self.transience.threshold,
                "note": self.transience.note,
            },
            "branching": self.branching.to_dict(),
            "speed": {
                "lower": self.speed_lower.value,
                "lower_applicable": self.speed_lower.applicable,
                "lower_method": self.speed_lower.method,
                "lower_reason": self.speed_lower.reason,
                "lower_components": self.speed_lower.components,
                "upper": self.speed_upper.value,
                "upper_applicable": self.speed_upper.applicable,
            },
            "root_visits": [
                {"p": lb.p, "eps": lb.eps, "value": lb.value,
                 "applicable": lb.applicable, "method": lb.method,
                 "n_terms": lb.n_terms, "reason": lb.reason}
                for lb in self.l_rho],
            "tau1_moments": [
                {"p": tb.p, "eps": tb.eps, "value": tb.value,
                 "applicable": tb.applicable, "reason": tb.reason,
                 "components": tb.components}
                for tb in self.tau1],
            "covariance": {
                "a": self.covariance.a,
                "lower": self.covariance.lower,
                "upper": self.covariance.upper,
                "applicable": self.covariance.applicable,
                "reason": self.covariance.reason,
                "components": self.covariance.components,
            },
            "first_regeneration": {
                "tail_base": self.ell1_tail_base,
                "block_level": self.block_level,
                "second_moment": self.ell1_second_moment,
            },
            "pi_moments": self.pi_moments,
            "env_moments": self.env_moments,
            "theta": list(self.theta_table),
            "eps": self.eps,
            "notes": list(self.notes),
        }


def build_bounds_report(spec: EnvSpec, *, psi: int | str = "auto",
                        eps: int = 1, psi_max: int = 8,
                        offspring_samples: int = 100_000, seed: int = 0,
                        geom_cap: int = DEFAULT_GEOM_CAP,
                        enum_cap: int = 4096,
                        ray_step_cap: int = 10_000_000,
                        summary: BranchingSummary | None = None,
                        ) -> BoundsReport:
    """Run the full analytic pipeline for one environment law."""
    transience = transience_check(spec)
    notes = []
    if summary is None:
        if transience.verdict == "recurrent":
            summary = BranchingSummary(
                status="no_supercritical_psi",
                note="walk is recurrent; escape process not built")
        else:
            from .branching import build_branching_summary
            summary = build_branching_summary(
                spec, psi=psi, psi_max=psi_max,
                offspring_samples=offspring_samples, seed=seed,
                enum_cap=enum_cap, ray_step_cap=ray_step_cap)
    if transience.verdict != "transient":
        notes.append(f"transience verdict: {transience.verdict}; "
                     "downstream bounds are gated off")

    sp_low = speed_lower_bound(spec, summary, eps, geom_cap)
    sp_up = speed_upper_bound(spec)
    if sp_low.applicable and not 0.0 < sp_low.value <= 1.0:
        raise ArithmeticError(
            f"speed lower bound {sp_low.value} escaped (0, 1]")

    ok = summary.status == "ok" and summary.alpha_psi is not None \
        and summary.alpha_psi < 1.0
    alpha = summary.alpha_psi if ok else None

    l_rho = []
    for p in (1, 2):
        if ok:
            l_rho.append(l_rho_moment_bound(spec, p, eps, alpha, geom_cap))
        else:
            l_rho.append(LRhoBound(p, eps, None, False,
                                   reason="no escape process"))

    tau1 = tuple(tau1_moment_bound(spec, p, eps, summary, geom_cap)
                 for p in (1, 2))

    have_gamma = ok and summary.gamma is not None
    tail_base = summary.gamma if have_gamma else None
    block_level = (summary.psi * summary.zeta) if have_gamma else None
    ell1_sq = (ell1_second_moment_bound(summary.gamma, summary.psi,
                                        summary.zeta)
               if have_gamma else None)

    pi_moments = {}
    if have_gamma:
        for p in (1, 2):
            pi_moments[str(p)] = pi_moment_bound(
                p, summary.gamma, summary.psi, summary.zeta, alpha, geom_cap)

    tau_mean = tau1[0].value if tau1[0].applicable else None
    tau_sq = tau1[1].value if tau1[1].applicable else None
    cov = covariance_bounds(spec, summary, sp_low.value if sp_low.applicable
                            else None, tau_mean, tau_sq, geom_cap)

    env_m = {}
    theta_rows = []
    if spec.model == "rwre":
        for p in (1, 2, eps + 1, eps + 2):
            key = str(p)
            if key not in env_m:
                env_m[key] = {"inverse": env_inverse_moment(spec, p),
                              "drift": env_drift_moment(spec, p)}
        for p in (2, 3):
            for n in (1, 2, 3):
                theta_rows.append({"p": p, "n": n,
                                   "value": theta(spec, p, n, geom_cap)})

    return BoundsReport(spec=spec, transience=transience, branching=summary,
                        speed_lower=sp_low, speed_upper=sp_up,
                        l_rho=tuple(l_rho), tau1=tau1, covariance=cov,
                        ell1_tail_base=tail_base, block_level=block_level,
                        ell1_second_moment=ell1_sq, pi_moments=pi_moments,
                        env_moments=env_m, theta_table=tuple(theta_rows),
                        eps=eps, notes=tuple(notes))
