import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_eer, brute_min_dcf, direct_cllr
from spoofkit.errors import EmptyClass, SemanticsMismatch
from spoofkit.metrics import (
    CostParams,
    act_dcf,
    bayes_threshold,
    cllr,
    compute_metrics,
    det_curve,
    eer,
    min_dcf,
)

# rounded so every midpoint lies strictly between adjacent distinct scores
scores = st.lists(st.floats(-50, 50).map(lambda x: round(x, 6)), min_size=1, max_size=30)
# coarse grid so exp/cube stay strictly increasing in floating point
grid = st.integers(-40, 40).map(lambda k: k / 8)
tied = st.lists(st.integers(-4, 4).map(float), min_size=1, max_size=30)


@pytest.mark.parametrize("bona,spoof,expected", [
    ([2, 3], [0, 1], 0.0),
    ([0, 2], [1, 3], 0.5),
    ([0, 1], [2, 3], 1.0),
])
def test_eer_examples(bona, spoof, expected):
    assert eer(bona, spoof)[0] == pytest.approx(expected, abs=1e-12)


def test_eer_threshold_sits_between_classes():
    value, thr = eer([2.0, 3.0], [0.0, 1.0])
    assert value == 0.0
    assert 1.0 < thr < 2.0


def test_empty_class_raises():
    with pytest.raises(EmptyClass):
        eer([], [1.0])
    with pytest.raises(EmptyClass):
        min_dcf([1.0], [])


def test_min_dcf_examples():
    assert min_dcf([1, 2], [-1, 0])[0] == 0.0
    assert min_dcf([1, 1, 1], [1, 1])[0] == pytest.approx(1.0)
    assert min_dcf([1, 3], [0, 2], CostParams(0.5, 1, 1))[0] == pytest.approx(0.5)


@pytest.mark.parametrize("cost,expected", [
    (CostParams(0.5, 1, 1), 0.0),
    (CostParams(0.05, 1, 10), math.log(190)),
    (CostParams(0.9, 1, 1), math.log(1 / 9)),
])
def test_bayes_threshold(cost, expected):
    assert bayes_threshold(cost) == pytest.approx(expected, abs=1e-12)


def test_act_dcf_examples():
    assert act_dcf([6.0], [0.0]) == 0.0
    assert act_dcf([0.0], [-1.0]) == pytest.approx(1.0)


def test_cllr_examples():
    assert cllr(np.zeros(5), np.zeros(3)) == 1.0
    assert cllr([100.0], [-100.0]) < 1e-20
    assert cllr([2.0], [-1.0]) == pytest.approx(0.3175, abs=5e-4)
    assert cllr([1e4], [-1e4]) == 0.0
    assert math.isfinite(cllr([-1e4], [1e4]))


def test_semantics_guard():
    with pytest.raises(SemanticsMismatch):
        act_dcf([1.0], [0.0], semantics="raw")
    with pytest.raises(SemanticsMismatch):
        cllr([1.0], [0.0], semantics="posterior")
    with pytest.raises(SemanticsMismatch):
        compute_metrics([1.0], [0.0], ["cllr"], semantics="raw")


def test_det_curve_shape():
    c = det_curve([0.0, 1.0, 1.0], [0.5, 2.0])
    assert np.all(np.diff(c.p_miss) >= 0)
    assert np.all(np.diff(c.p_fa) <= 0)
    assert (c.p_miss[0], c.p_fa[0]) == (0.0, 1.0)
    assert (c.p_miss[-1], c.p_fa[-1]) == (1.0, 0.0)


@settings(max_examples=300, deadline=None)
@given(scores, scores)
def test_eer_matches_brute_force(bona, spoof):
    assert abs(eer(bona, spoof)[0] - brute_eer(bona, spoof)) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(tied, tied, st.sampled_from([(0.05, 1, 10), (0.5, 1, 1), (0.9, 2, 1)]))
def test_min_dcf_matches_brute_force_with_ties(bona, spoof, c):
    assert abs(eer(bona, spoof)[0] - brute_eer(bona, spoof)) <= 1e-12
    got = min_dcf(bona, spoof, CostParams(*c))[0]
    assert abs(got - brute_min_dcf(bona, spoof, *c)) <= 1e-12
    assert got <= 1.0 + 1e-12


@settings(max_examples=200, deadline=None)
@given(scores, scores)
def test_act_dcf_at_least_min_dcf(bona, spoof):
    c = CostParams()
    assert act_dcf(bona, spoof, c) >= min_dcf(bona, spoof, c)[0] - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(grid, min_size=2, max_size=30), st.lists(grid, min_size=2, max_size=30))
def test_eer_monotone_transform_invariance(bona, spoof):
    b, s = np.array(bona), np.array(spoof)
    ref = eer(b, s)[0]
    assert eer(np.exp(b), np.exp(s))[0] == pytest.approx(ref, abs=1e-12)
    assert eer(3 * b - 7, 3 * s - 7)[0] == pytest.approx(ref, abs=1e-12)
    assert eer(b ** 3, s ** 3)[0] == pytest.approx(ref, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(scores, scores, st.randoms(use_true_random=False))
def test_permutation_invariance(bona, spoof, rnd):
    b2, s2 = list(bona), list(spoof)
    rnd.shuffle(b2)
    rnd.shuffle(s2)
    assert eer(bona, spoof) == eer(b2, s2)
    assert min_dcf(bona, spoof) == min_dcf(b2, s2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=20),
       st.lists(st.floats(-30, 30), min_size=1, max_size=20),
       st.floats(0.01, 3))
def test_cllr_properties(bona, spoof, delta):
    v = cllr(bona, spoof)
    assert v >= 0
    assert v == pytest.approx(direct_cllr(bona, spoof), rel=1e-9, abs=1e-12)
    better = cllr(np.add(bona, delta), np.subtract(spoof, delta))
    assert better < v


def test_compute_metrics_keys():
    out = compute_metrics([1.0, 2.0], [0.0], ["eer", "mindcf", "actdcf", "cllr"], semantics="llr")
    assert list(out) == ["eer", "eer_threshold", "mindcf", "mindcf_threshold", "actdcf", "cllr"]


def test_cost_params_validation():
    with pytest.raises(ValueError):
        CostParams(0.0, 1, 1)
    with pytest.raises(ValueError):
        CostParams(0.5, -1, 1)
    assert CostParams().effective_prior == pytest.approx(0.05 / (0.05 + 9.5))
