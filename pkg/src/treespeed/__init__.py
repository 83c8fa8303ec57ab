"""treespeed: simulator and analytic bounds for transient walks on b-ary trees.

Covers two models — random walk in an i.i.d. random environment (finite
support) and once edge-reinforced random walk — with explicit lower bounds on
the escape speed, tail bounds for the first regeneration level, moment bounds
for regeneration times, and covariance bounds for the functional CLT scaling,
all checkable against seeded Monte Carlo campaigns.
"""

__version__ = "0.1.0"
