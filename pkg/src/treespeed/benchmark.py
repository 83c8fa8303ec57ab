"""Exact reference values for the two-atom binary-tree environment family.

The family: b = 2, identical coupling, A = 3/10 with probability kappa and
A = 7/2 with probability 1 - kappa, kappa in (0, 1/2].  For this family
every first-stage quantity has a closed form in kappa.  This module
computes each one twice in exact rational arithmetic — from first
principles (expectations over the two atoms) and from the aggregated
closed forms — and refuses to return if the two disagree, so the values it
hands out are safe to use as oracles for the floating-point pipeline.

First-principles forms, for one atom a of the identical environment on the
binary tree (parent weight 1, each child weight a, so the parent edge
probability is 1/(1+2a)):

* no child colored: p0(a) = 1/(1+2a);
* exactly one: p1(a) = 2 [1/(1+a) - 1/(1+2a)];
* both: p2(a) = 1 - 2/(1+a) + 1/(1+2a).

The one-step PGF is a quadratic whose fixed-point equation
p2 x^2 + (p1 - 1) x + p0 = 0 has root product p0/p2 and one root at 1,
hence alpha_1 = p0/p2 exactly.
"""

from __future__ import annotations

from fractions import Fraction

from .model import EnvSpec

A_LOW = Fraction(3, 10)
A_HIGH = Fraction(7, 2)

SPEED_WINDOW_KAPPA = Fraction(1, 30)
SPEED_WINDOW = (0.1229 - 2e-4, 0.1229 + 6e-4)


def validate_kappa(kappa: Fraction) -> Fraction:
    kappa = Fraction(kappa)
    if not 0 < kappa <= Fraction(1, 2):
        raise ValueError(f"kappa = {kappa} outside (0, 1/2]")
    return kappa


def benchmark_spec(kappa: Fraction) -> EnvSpec:
    """The floating-point environment law handed to the pipeline."""
    kappa = validate_kappa(kappa)
    return EnvSpec(model="rwre", b=2, coupling="identical",
                   support=((float(A_LOW), float(kappa)),
                            (float(A_HIGH), float(1 - kappa))))


def _expect(kappa: Fraction, f) -> Fraction:
    return kappa * f(A_LOW) + (1 - kappa) * f(A_HIGH)


def reference_values(kappa: Fraction) -> dict:
    """All closed-form quantities of the family, exact in kappa."""
    kappa = validate_kappa(kappa)
    one = Fraction(1)

    p0 = _expect(kappa, lambda a: one / (1 + 2 * a))
    p1 = _expect(kappa, lambda a: 2 * (one / (1 + a) - one / (1 + 2 * a)))
    p2 = _expect(kappa, lambda a: 1 - 2 / (1 + a) + one / (1 + 2 * a))
    m1 = p1 + 2 * p2
    alpha1 = p0 / p2
    inv2 = _expect(kappa, lambda a: a ** -2)
    drift2 = _expect(kappa, lambda a: (1 + one / (2 * a)) ** 2)

    # aggregated closed forms; a mismatch means this module itself broke
    closed = {
        "p0": Fraction(1, 8) + kappa / 2,
        "p1": Fraction(7, 36) + Fraction(11, 117) * kappa,
        "p2": Fraction(49, 72) - Fraction(139, 234) * kappa,
        "m1": (182 - 128 * kappa) / 117,
        "alpha1": (117 + 468 * kappa) / (637 - 556 * kappa),
        "env_inverse_moment_2": Fraction(4, 49) + Fraction(4864, 441) * kappa,
        "env_drift_moment_2": Fraction(64, 49) + Fraction(2560, 441) * kappa,
    }
    direct = {"p0": p0, "p1": p1, "p2": p2, "m1": m1, "alpha1": alpha1,
              "env_inverse_moment_2": inv2, "env_drift_moment_2": drift2}
    for name, val in direct.items():
        if val != closed[name]:
            raise AssertionError(
                f"reference self-check failed for {name}: "
                f"{val} != {closed[name]}")

    assert p0 + p1 + p2 == 1
    zeta = 1
    power = one
    while power * (m1 - 1) <= 1:
        zeta += 1
        power *= m1
        if zeta > 2048:
            # kappa = 1/2 sits closest to criticality and needs 561 rounds
            raise AssertionError("horizon self-check runaway")
    direct["zeta"] = zeta
    return direct
