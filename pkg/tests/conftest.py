"""Shared fixtures.

The two reference campaigns (RWRE benchmark environment and the ORRW
b=2, delta=2 configuration) cost ~10^8 kernel steps each, so they are
built once per session and shared between the estimator tests and the
acceptance suite.  Everything here is seeded; reruns are bit-identical.
"""

import time
from fractions import Fraction

import pytest

from treespeed import benchmark, mc
from treespeed.bounds import build_bounds_report
from treespeed.model import EnvSpec

KAPPA = Fraction(1, 30)


@pytest.fixture(scope="session")
def kappa30_spec():
    return benchmark.benchmark_spec(KAPPA)


@pytest.fixture(scope="session")
def kappa30_bounds(kappa30_spec):
    return build_bounds_report(kappa30_spec, psi=1)


@pytest.fixture(scope="session")
def kappa30_campaign(kappa30_spec):
    """200 replicas x 1e6 steps, timed (the speed-CI check budgets it)."""
    config = mc.CampaignConfig(replicas=200, max_steps=1_000_000,
                               seed=20260815)
    t0 = time.perf_counter()
    result = mc.run_campaign(kappa30_spec, config)
    elapsed = time.perf_counter() - t0
    return result, elapsed


@pytest.fixture(scope="session")
def kappa30_verify(kappa30_spec, kappa30_bounds, kappa30_campaign):
    result, _ = kappa30_campaign
    return mc.verify(kappa30_spec, result.config, bounds=kappa30_bounds,
                     campaign=result)


@pytest.fixture(scope="session")
def orrw_spec():
    return EnvSpec(model="orrw", b=2, delta=2.0)


@pytest.fixture(scope="session")
def orrw_bounds(orrw_spec):
    return build_bounds_report(orrw_spec, psi=4, offspring_samples=100_000,
                               seed=11)


@pytest.fixture(scope="session")
def orrw_campaign(orrw_spec):
    config = mc.CampaignConfig(replicas=120, max_steps=1_000_000,
                               seed=20260816)
    t0 = time.perf_counter()
    result = mc.run_campaign(orrw_spec, config)
    elapsed = time.perf_counter() - t0
    return result, elapsed


@pytest.fixture(scope="session")
def orrw_verify(orrw_spec, orrw_bounds, orrw_campaign):
    result, _ = orrw_campaign
    return mc.verify(orrw_spec, result.config, bounds=orrw_bounds,
                     campaign=result)
