"""The escape branching process and its generating-function machinery.

The walk escapes through levels psi, 2*psi, ...: a level-(k+1)psi vertex is
an offspring of its level-k*psi ancestor when the walk's extension to the
connecting ray reaches it before the augmented root-parent.  The resulting
offspring law ``p`` on {0, .., b^psi} drives everything analytic here:

* ``alpha_psi`` — extinction probability, the smallest fixed point of the
  PGF; it upper-bounds the walk's return probability.
* the pruned law ``q`` (one child removed, q_0 = p_0 + p_1) and the horizon
  ``zeta`` — the number of generations over which the pruned compound
  process is supercritical;
* ``gamma`` — extinction root of that pruned compound process, the base of
  the exponential tail of the first regeneration level.

For RWRE with psi = 1 the offspring law has a closed form via the
exponential-race integral; every other case uses the shared-clock Monte
Carlo sampler in ``_kernels`` (for psi > 1 the colored events of different
rays are dependent through the common environment and common clocks, so the
faithful construction *is* the simulation).  Mean offspring, by contrast, is
exact in all supported cases: a one-dimensional ruin formula for RWRE and a
telescoping product for ORRW.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import EnvSpec
from .rng import PURPOSE_ENV, PURPOSE_OFFSPRING, SeedSpec

_SUM_TOL_EXACT = 1e-10
DEFAULT_ENUM_CAP = 4096
DEFAULT_RAY_STEP_CAP = 10_000_000
FIXED_POINT_TOL = 1e-12
FIXED_POINT_ITER_CAP = 1_000_000


class UnsupportedExact(ValueError):
    """Requested an exact computation outside its supported regime."""


@dataclass(frozen=True)
class OffspringDist:
    """Distribution of the number of colored level-psi vertices."""

    probs: tuple[float, ...]
    psi: int
    provenance: str  # "exact" | "monte_carlo"
    n_samples: int | None = None
    std_errs: tuple[float, ...] | None = None
    ray_cap_hits: int = 0

    def __post_init__(self):
        if self.provenance not in ("exact", "monte_carlo"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative offspring probability")
        total = math.fsum(self.probs)
        if self.provenance == "exact":
            if abs(total - 1.0) > _SUM_TOL_EXACT:
                raise ValueError(f"exact probabilities sum to {total!r}")
        else:
            if self.n_samples is None or self.std_errs is None:
                raise ValueError("monte_carlo provenance needs sample metadata")
            slack = 3.0 * math.sqrt(math.fsum(s * s for s in self.std_errs))
            if abs(total - 1.0) > max(slack, 1e-9):
                raise ValueError(f"mc probabilities sum to {total!r}")

    def mean(self) -> float:
        return math.fsum(k * p for k, p in enumerate(self.probs))

    def pgf(self, x: float) -> float:
        acc = 0.0
        for p in reversed(self.probs):
            acc = acc * x + p
        return acc

    def pgf_prime(self, x: float) -> float:
        acc = 0.0
        for k in range(len(self.probs) - 1, 0, -1):
            acc = acc * x + k * self.probs[k]
        return acc


@dataclass(frozen=True)
class PrunedDist:
    """The one-child-removed law: q_0 = p_0 + p_1, q_k = p_{k+1}."""

    probs: tuple[float, ...]

    def pgf(self, x: float) -> float:
        acc = 0.0
        for p in reversed(self.probs):
            acc = acc * x + p
        return acc


def pruned(dist: OffspringDist) -> PrunedDist:
    p = dist.probs
    if len(p) < 2:
        return PrunedDist((1.0,))
    return PrunedDist((p[0] + p[1],) + tuple(p[2:]))


def _omega_vectors(spec: EnvSpec):
    """Yield (weight, omega) with omega = (parent, child 1..b) per atom."""
    if spec.coupling == "identical":
        for v, pr in spec.support:
            denom = 1.0 + spec.b * v
            yield pr, np.array([1.0] + [v] * spec.b) / denom
    else:
        for combo in itertools.product(spec.support, repeat=spec.b):
            pr = math.prod(p for _, p in combo)
            vals = [v for v, _ in combo]
            denom = 1.0 + sum(vals)
            yield pr, np.array([1.0] + vals) / denom


def colored_set_prob(omega: np.ndarray, subset: int, b: int) -> float:
    """P(colored set == subset | environment), by inclusion-exclusion.

    ``subset`` is a bitmask over children 0..b-1.  Child i is colored when
    its clock ratio beats the parent's, so the joint probability is the
    race integral, expanded into signed ratios over sub-subsets R.
    """
    w_parent = omega[0]
    outside = w_parent
    for j in range(b):
        if not subset & (1 << j):
            outside += omega[1 + j]
    members = [j for j in range(b) if subset & (1 << j)]
    total = 0.0
    for r_bits in range(1 << len(members)):
        extra = 0.0
        sign = 1
        for idx, j in enumerate(members):
            if r_bits & (1 << idx):
                extra += omega[1 + j]
                sign = -sign
        total += sign * w_parent / (outside + extra)
    return total


def offspring_exact_rwre_psi1(spec: EnvSpec) -> OffspringDist:
    """Exact offspring law for RWRE at psi = 1 via the race formula."""
    if spec.model != "rwre":
        raise UnsupportedExact("exact offspring law only for rwre")
    b = spec.b
    if b > 16:
        raise UnsupportedExact("exact race expansion limited to b <= 16")
    probs = [0.0] * (b + 1)
    for pr, omega in _omega_vectors(spec):
        for subset in range(1 << b):
            probs[bin(subset).count("1")] += pr * colored_set_prob(
                omega, subset, b)
    return OffspringDist(tuple(float(p) for p in probs), psi=1,
                         provenance="exact")


def offspring_mc(spec: EnvSpec, psi: int, n_samples: int, seed: int,
                 ray_step_cap: int = DEFAULT_RAY_STEP_CAP) -> OffspringDist:
    """Shared-clock Monte Carlo offspring sampler (any psi, both models)."""
    if psi < 1:
        raise ValueError("psi must be >= 1")
    if n_samples < 1000:
        raise ValueError("need at least 10^3 samples")
    from . import _kernels

    base_state = np.uint64(SeedSpec(seed, 0, PURPOSE_OFFSPRING).state())
    if spec.model == "rwre":
        values, cdf = spec.support_arrays()
        hist, cap_hits = _kernels.offspring_kernel(
            base_state, n_samples, spec.b, psi, True, values, cdf,
            spec.coupling == "iid", 0.0, PURPOSE_OFFSPRING, PURPOSE_ENV,
            ray_step_cap)
    else:
        dummy = np.ones(1)
        hist, cap_hits = _kernels.offspring_kernel(
            base_state, n_samples, spec.b, psi, False, dummy, dummy,
            False, float(spec.delta), PURPOSE_OFFSPRING, PURPOSE_ENV,
            ray_step_cap)
    probs = hist / float(n_samples)
    errs = np.sqrt(probs * (1.0 - probs) / n_samples)
    return OffspringDist(tuple(float(p) for p in probs), psi=psi,
                         provenance="monte_carlo", n_samples=n_samples,
                         std_errs=tuple(float(e) for e in errs),
                         ray_cap_hits=int(cap_hits))


def ray_hit_prob_orrw(psi: int, delta: float) -> float:
    """P(one fixed length-psi ray is colored) = prod_j j/(j+delta)."""
    if psi < 1 or delta <= 0:
        raise ValueError("need psi >= 1, delta > 0")
    d = Fraction(delta)
    return float(math.prod(Fraction(j) / (j + d) for j in range(1, psi + 1)))


def _rwre_ray_hit_mean(spec: EnvSpec, psi: int, enum_cap: int) -> float:
    """E[ruin probability along a ray] by enumerating support^psi."""
    k = len(spec.support)
    if k ** psi > enum_cap:
        raise UnsupportedExact(
            f"support^psi = {k}^{psi} exceeds enumeration cap {enum_cap}")
    total = 0.0
    for combo in itertools.product(spec.support, repeat=psi):
        pr = math.prod(p for _, p in combo)
        # birth-death ruin from the root: hit level psi before <-root
        s = 0.0
        prod_inv = 1.0
        for r in range(psi + 1):
            s += prod_inv
            if r < psi:
                prod_inv /= combo[r][0]
        total += pr / s
    return total


def mean_offspring(spec: EnvSpec, psi: int,
                   enum_cap: int = DEFAULT_ENUM_CAP) -> float:
    """Exact mean offspring m_psi (no sampling error in either model)."""
    if psi < 1:
        raise ValueError("psi must be >= 1")
    if spec.model == "orrw":
        return spec.b ** psi * ray_hit_prob_orrw(psi, spec.delta)
    return spec.b ** psi * _rwre_ray_hit_mean(spec, psi, enum_cap)


@dataclass(frozen=True)
class PsiSelection:
    status: str  # "ok" | "failed"
    psi: int | None
    m_psi: float | None
    tried: tuple[float, ...]


def select_psi(spec: EnvSpec, psi_max: int, margin: float = 0.0,
               enum_cap: int = DEFAULT_ENUM_CAP) -> PsiSelection:
    """Smallest psi <= psi_max with supercritical mean offspring."""
    if psi_max < 1:
        raise ValueError("psi_max must be >= 1")
    tried = []
    for psi in range(1, psi_max + 1):
        m = mean_offspring(spec, psi, enum_cap)
        tried.append(m)
        if m > 1.0 + margin:
            return PsiSelection("ok", psi, m, tuple(tried))
    return PsiSelection("failed", None, None, tuple(tried))


def _iterate_smallest_fixed_point(F, tol: float, iter_cap: int) -> float:
    """Monotone iteration from 0, with a bisection rescue for slow cases.

    For a monotone convex F with F(1) = 1 the iterates from 0 increase to
    the smallest fixed point; near-critical laws converge slowly, in which
    case we bracket the root (iterates stay below it) and bisect.
    """
    x = 0.0
    for _ in range(min(iter_cap, 20_000)):
        nxt = F(x)
        if nxt - x < tol:
            return nxt
        x = nxt
    # slow convergence: the iterate is a certified lower bracket
    lo = x
    hi = 1.0
    probe = 1.0
    for _ in range(60):
        probe /= 2.0
        cand = 1.0 - probe
        if cand > lo and F(cand) < cand:
            hi = cand
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if F(mid) >= mid:
            lo = mid
        else:
            hi = mid
    return lo


def smallest_fixed_point_bisection(F, tol: float = 1e-12) -> float:
    """Independent root finder used as an oracle against the iteration.

    Scans for the leftmost sign change of F(x) - x away from the trivial
    fixed point at 1 and bisects it down to ``tol``.
    """
    n = 4096
    prev_x, prev_g = 0.0, F(0.0) - 0.0
    if abs(prev_g) <= tol:
        return 0.0
    for i in range(1, n + 1):
        x = i / n
        g = F(x) - x
        if g <= 0.0:
            lo, hi = prev_x, x
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if hi - lo < tol * 0.5:
                    break
                if F(mid) - mid > 0.0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        prev_x, prev_g = x, g
    return 1.0


def extinction_probability(dist: OffspringDist,
                           tol: float = FIXED_POINT_TOL,
                           iter_cap: int = FIXED_POINT_ITER_CAP) -> float:
    """Smallest fixed point of the offspring PGF on [0, 1].

    The monotone iteration stops on small increments, which for a
    near-critical law leaves an error of increment / (1 - f'(alpha)); a few
    Newton steps (monotone from below, by convexity) polish that away.
    """
    if dist.mean() <= 1.0:
        return 1.0
    x = _iterate_smallest_fixed_point(dist.pgf, tol, iter_cap)
    for _ in range(6):
        slope = dist.pgf_prime(x) - 1.0
        if slope >= -1e-15:
            break
        step = (dist.pgf(x) - x) / slope
        nxt = x - step
        if not 0.0 <= nxt <= 1.0 or nxt == x:
            break
        x = nxt
    return min(1.0, x)


def extinction_std_err(dist: OffspringDist, alpha: float) -> float | None:
    """First-order (delta method) standard error of the extinction root.

    alpha-hat solves the empirical PGF fixed point; linearizing in the
    multinomial noise gives Var = Var(alpha^Z) / (n (1 - f'(alpha))^2).
    Returns None for exact distributions or degenerate cases.
    """
    if dist.provenance != "monte_carlo" or alpha >= 1.0:
        return None
    fp = dist.pgf_prime(alpha)
    if fp >= 1.0:
        return None
    var_pow = dist.pgf(alpha * alpha) - dist.pgf(alpha) ** 2
    return math.sqrt(max(var_pow, 0.0) / dist.n_samples) / (1.0 - fp)


def zeta_horizon(m: float) -> int:
    """Smallest zeta >= 1 with m^(zeta-1) (m-1) > 1."""
    if m <= 1.0:
        raise ValueError("horizon needs a supercritical mean")
    zeta = 1
    power = 1.0
    while power * (m - 1.0) <= 1.0:
        zeta += 1
        power *= m
        if zeta > 10_000_000:
            raise ArithmeticError("horizon did not resolve")
    return zeta


def compound_pgf(dist: OffspringDist, zeta: int):
    """PGF of the zeta-generation pruned compound law, point-evaluated.

    One pruned layer followed by zeta-1 plain layers; coefficients are never
    materialized (the support would be b^(zeta*psi))."""
    g = pruned(dist)

    def F(x: float) -> float:
        y = g.pgf(x)
        for _ in range(zeta - 1):
            y = dist.pgf(y)
        return y

    return F


def gamma_root(dist: OffspringDist, zeta: int,
               tol: float = FIXED_POINT_TOL,
               iter_cap: int = FIXED_POINT_ITER_CAP) -> float:
    """Smallest fixed point of the pruned compound PGF; must be < 1."""
    if dist.mean() <= 1.0:
        raise ValueError("gamma root needs a supercritical offspring law")
    if zeta < 1:
        raise ValueError("zeta must be >= 1")
    gamma = _iterate_smallest_fixed_point(compound_pgf(dist, zeta), tol,
                                          iter_cap)
    if not gamma < 1.0 - 1e-9:
        raise ArithmeticError(
            f"pruned compound process is not supercritical enough "
            f"(gamma = {gamma}); increase zeta or check the offspring law")
    return gamma


def gamma_std_err(dist: OffspringDist, zeta: int, gamma: float) -> float | None:
    """First-order standard error of gamma under offspring sampling noise.

    Finite-difference partials of the compound root with respect to each
    offspring probability (mass rebalanced against the largest entry to stay
    on the simplex), combined with the multinomial covariance.
    """
    if dist.provenance != "monte_carlo":
        return None
    n = dist.n_samples
    p = list(dist.probs)
    k_ref = max(range(len(p)), key=lambda k: p[k])
    h = 1e-6

    def root_at(probs) -> float:
        d = OffspringDist(tuple(probs), dist.psi, "exact")
        if d.mean() <= 1.0:
            return 1.0
        return _iterate_smallest_fixed_point(compound_pgf(d, zeta), 1e-13,
                                             FIXED_POINT_ITER_CAP)

    grads = {}
    for k in range(len(p)):
        if k == k_ref or p[k] == 0.0 and k != 0:
            continue
        bumped = p.copy()
        bumped[k] += h
        bumped[k_ref] -= h
        grads[k] = (root_at(bumped) - gamma) / h
    # multinomial: Var(p_k) = p_k(1-p_k)/n, Cov(p_j,p_k) = -p_j p_k / n
    var = 0.0
    keys = list(grads)
    for i, k in enumerate(keys):
        var += grads[k] ** 2 * p[k] * (1.0 - p[k]) / n
        for j in keys[i + 1:]:
            var += 2.0 * grads[k] * grads[j] * (-p[k] * p[j] / n)
    return math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class BranchingSummary:
    """Everything the bounds pipeline needs from the branching process."""

    status: str  # "ok" | "no_supercritical_psi"
    psi: int | None = None
    m_psi: float | None = None
    alpha_psi: float | None = None
    zeta: int | None = None
    gamma: float | None = None
    vartheta: int | None = None
    offspring: OffspringDist | None = None
    alpha_interval: tuple[float, float] | None = None
    gamma_interval: tuple[float, float] | None = None
    note: str = ""

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "psi": self.psi,
            "m_psi": self.m_psi,
            "alpha_psi": self.alpha_psi,
            "zeta": self.zeta,
            "gamma": self.gamma,
            "vartheta": self.vartheta,
            "note": self.note,
        }
        if self.offspring is not None:
            out["offspring"] = {
                "provenance": self.offspring.provenance,
                "probs": list(self.offspring.probs),
                "n_samples": self.offspring.n_samples,
                "ray_cap_hits": self.offspring.ray_cap_hits,
            }
        out["alpha_interval"] = (list(self.alpha_interval)
                                 if self.alpha_interval else None)
        out["gamma_interval"] = (list(self.gamma_interval)
                                 if self.gamma_interval else None)
        return out


def build_branching_summary(spec: EnvSpec, psi: int | str = "auto",
                            psi_max: int = 8, margin: float = 0.0,
                            offspring_samples: int = 100_000,
                            seed: int = 0,
                            enum_cap: int = DEFAULT_ENUM_CAP,
                            ray_step_cap: int = DEFAULT_RAY_STEP_CAP,
                            ) -> BranchingSummary:
    """Select psi, build the offspring law, and solve for all the roots.

    The horizon zeta always uses the *exact* mean (ruin formula / product);
    extinction and gamma use the offspring distribution, which is exact for
    RWRE psi = 1 and Monte Carlo otherwise, with first-order intervals
    attached in the Monte Carlo case.
    """
    if psi == "auto":
        sel = select_psi(spec, psi_max, margin, enum_cap)
        if sel.status != "ok":
            return BranchingSummary(
                status="no_supercritical_psi",
                note=f"no psi <= {psi_max} has mean offspring > 1 + {margin}; "
                     f"means tried: {[round(m, 6) for m in sel.tried]}")
        chosen, m = sel.psi, sel.m_psi
    else:
        chosen = int(psi)
        m = mean_offspring(spec, chosen, enum_cap)
        if m <= 1.0:
            return BranchingSummary(
                status="no_supercritical_psi", psi=chosen, m_psi=m,
                note=f"m_{chosen} = {m} <= 1: escape process subcritical")

    if spec.model == "rwre" and chosen == 1:
        dist = offspring_exact_rwre_psi1(spec)
    else:
        dist = offspring_mc(spec, chosen, offspring_samples, seed,
                            ray_step_cap)

    alpha = extinction_probability(dist)
    zeta = zeta_horizon(m)
    gamma = gamma_root(dist, zeta) if dist.mean() > 1.0 else None
    vartheta = spec.b ** ((zeta - 1) * chosen) * (spec.b ** chosen - 1)

    alpha_iv = gamma_iv = None
    note = ""
    if dist.provenance == "monte_carlo":
        se = extinction_std_err(dist, alpha)
        if se is not None:
            alpha_iv = (max(alpha - 3 * se, 0.0), min(alpha + 3 * se, 1.0))
        if gamma is not None:
            gse = gamma_std_err(dist, zeta, gamma)
            if gse is not None:
                gamma_iv = (max(gamma - 3 * gse, 0.0),
                            min(gamma + 3 * gse, 1.0))
        note = ("offspring law sampled; alpha/gamma carry first-order "
                "3-sigma intervals")
        if dist.mean() <= 1.0:
            note += ("; sampled mean fell below 1 (near-critical), gamma "
                     "unavailable")

    return BranchingSummary(status="ok", psi=chosen, m_psi=m,
                            alpha_psi=alpha, zeta=zeta, gamma=gamma,
                            vartheta=vartheta, offspring=dist,
                            alpha_interval=alpha_iv, gamma_interval=gamma_iv,
                            note=note)
