"""Pinned exact values for the bistable benchmarks.

The constants were recorded from the exact solvers and cross-checked
against the independent oracles elsewhere in the suite; they guard against
silent numerical drift.
"""

import pytest

from oracles import eigen_gap_reference
from rarelstd.exact import (
    committor_u2_closed_form,
    mc_relative_avar,
    mfpt_midpoint_closed_form,
    spectral_gap_bound,
)
from rarelstd.mrp import ChainSpec, build_chain, with_quantity
from rarelstd.variance import avar_bound, fit_assumption_constants, sigma_asymptotic

REL = 1e-9


def chain(n, q, lazy=False, mu="uniform"):
    family = "lazy-bistable" if lazy else "bistable"
    return with_quantity(build_chain(ChainSpec(family, n, mu_mode=mu)), q)


def max_rel(mrp, tau=1):
    return sigma_asymptotic(mrp, tau).max_rel_avar(mrp.D)


@pytest.mark.parametrize("n,value", [
    (5, 8.838317945679915), (9, 39.05793205446381), (21, 606.1128752005734),
    (41, 25699.15958248775), (81, 28274780.28743596),
])
def test_mfpt_midpoint(n, value):
    assert mfpt_midpoint_closed_form(n) == pytest.approx(value, rel=REL)


@pytest.mark.parametrize("n,value", [
    (4, 0.3147464860769448), (20, 0.008310012135423995),
    (40, 0.00023555095536969867), (81, 2.3786684651879176e-07),
])
def test_committor_u2(n, value):
    assert committor_u2_closed_form(n) == pytest.approx(value, rel=REL)


LSTD = {
    "mfpt": (394.6279052813699, 2461.982461133065, 13377.03608879573),
    "committor": (1006.6888697687417, 4694.546002043187, 20150.56875922048),
}
MC = {
    "mfpt": (737.9880920445956, 50648.02167024196, 81685216.5044693),
    "committor": (2148.0618187631103, 161285.90522617774, 277854797.3204525),
}
BOUND = (2915.084758273598, 13088.479662794427, 55189.548388292475)


@pytest.mark.parametrize("q", ["mfpt", "committor"])
@pytest.mark.parametrize("idx,n", list(enumerate((20, 40, 80))))
def test_relative_variances(q, idx, n):
    mrp = chain(n, q)
    assert max_rel(mrp) == pytest.approx(LSTD[q][idx], rel=1e-8)
    r = mc_relative_avar(mrp)
    assert max(r[1], r[n - 2]) == pytest.approx(MC[q][idx], rel=1e-8)
    b = avar_bound(mrp, 1, zero_reward_in_D=(q == "committor"))
    assert b == pytest.approx(BOUND[idx], rel=1e-8)


@pytest.mark.parametrize("q,inv,lag25,lag1", [
    ("mfpt", 90463.08420981654, 1156.9748110285352, 12328.60576374281),
    ("committor", 102320.12076982683, 2221.2816196440535, 23472.73001022423),
])
def test_invariant_and_lag_values(q, inv, lag25, lag1):
    assert max_rel(chain(40, q, mu="invariant")) == pytest.approx(inv, rel=1e-8)
    lazy = chain(40, q, lazy=True)
    assert max_rel(lazy, 25) == pytest.approx(lag25, rel=1e-8)
    assert max_rel(lazy, 1) == pytest.approx(lag1, rel=1e-8)


@pytest.mark.parametrize("n,C,bound", [
    (20, 0.599157124871214, 15041423.342988212),
    (40, 0.6018238184121975, 120866950.65274936),
    (80, 0.6024530291641459, 967946542.743299),
])
def test_assumption_constants(n, C, bound):
    rep = fit_assumption_constants(chain(n, "mfpt"), 1)
    assert rep.alpha == 1.0
    assert rep.C_fit == pytest.approx(C, rel=REL)
    assert rep.bound == pytest.approx(bound, rel=REL)


@pytest.mark.parametrize("n,value", [(80, 0.9999999334559924), (160, 0.9999999999997615)])
def test_spectral_gap(n, value):
    gap = spectral_gap_bound(n)
    assert gap == pytest.approx(value, rel=1e-7)
    assert gap == pytest.approx(eigen_gap_reference(n), rel=1e-6)
