import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import grid_search_affine, weighted_xent
from spoofkit.calib import (
    AffineCalibrator,
    affine_objective,
    apply_affine,
    apply_affine_scores,
    apply_average_fusion,
    average_fuse,
    fit_average_fusion,
    minmax_apply,
    minmax_fit,
    parse_calibrator,
    posterior_to_llr,
    serialize_calibrator,
    stack_for_training,
    train_affine,
)
from spoofkit.corpus import ScoreSet, TrialKey
from spoofkit.errors import DegenerateRange, EmptyClass, IdSetMismatch, NoConvergence, WidthMismatch
from spoofkit.metrics import cllr


def gaussian_llrs(rng, n_bona, n_spoof, d=2.0):
    """Scores whose LLR is exactly themselves: N(+d^2/2, d^2) vs N(-d^2/2, d^2)."""
    m = d * d / 2
    return rng.normal(m, d, n_bona), rng.normal(-m, d, n_spoof)


def stack(bona, spoof):
    x = np.concatenate([bona, spoof])
    return x, np.r_[np.ones(len(bona), bool), np.zeros(len(spoof), bool)]


@pytest.mark.parametrize("p,prior,expected", [
    (0.5, 0.5, 0.0),
    (0.9, 0.5, math.log(9)),
    (0.9, 0.9, 0.0),
])
def test_posterior_to_llr(p, prior, expected):
    llr, n = posterior_to_llr(np.array([p]), prior)
    assert llr[0] == pytest.approx(expected, abs=1e-12)
    assert n == 0


def test_posterior_clamping_counts():
    llr, n = posterior_to_llr(np.array([0.0, 1.0, 0.3]))
    assert n == 2
    assert np.all(np.isfinite(llr))


def test_separable_calibration_cllr():
    x = np.r_[np.full(20, 5.0), np.full(20, -5.0)]
    y = np.r_[np.ones(20, bool), np.zeros(20, bool)]
    cal = train_affine(x, y, prior=0.5)
    assert cllr(cal(x[y]), cal(x[~y])) < 0.01


def test_matches_grid_search_oracle():
    rng = np.random.default_rng(1)
    bona, spoof = gaussian_llrs(rng, 60, 80)
    raw_b, raw_s = 0.4 * bona - 1.0, 0.4 * spoof - 1.0
    x, y = stack(raw_b, raw_s)
    for prior in (0.5, 0.2):
        cal = train_affine(x, y, prior=prior)
        best, w, b = grid_search_affine(x, y, prior, (0.0, 10.0), (-10.0, 10.0))
        newton = weighted_xent(cal.weights, cal.bias, x, y, prior)
        assert newton <= best + 1e-12
        assert cal.weights[0] == pytest.approx(w, abs=1e-4)
        assert cal.bias == pytest.approx(b, abs=1e-4)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    bona, spoof = gaussian_llrs(rng, 50, 70)
    x, y = stack(10 * bona + 3, 10 * spoof + 3)
    cal = train_affine(x, y, prior=0.3)
    theta = np.r_[cal.weights, cal.bias]
    h = 1e-5
    for point in (theta, theta + np.array([0.01, -0.2])):
        _, grad, _ = affine_objective(point, x[:, None], y, 0.3)
        fd = np.array([
            (affine_objective(point + h * e, x[:, None], y, 0.3)[0]
             - affine_objective(point - h * e, x[:, None], y, 0.3)[0]) / (2 * h)
            for e in np.eye(2)
        ])
        assert np.max(np.abs(grad - fd)) <= 1e-4 * max(np.max(np.abs(fd)), 1.0)
    assert cal.converged and cal.grad_norm < 1e-8


def test_scale_invariance():
    rng = np.random.default_rng(3)
    x, y = stack(*gaussian_llrs(rng, 40, 40))
    a = train_affine(x, y)
    b = train_affine(10 * x, y)
    np.testing.assert_allclose(a(x), b(10 * x), atol=1e-6)


def test_duplicated_columns_match_single_system():
    rng = np.random.default_rng(4)
    x, y = stack(*gaussian_llrs(rng, 40, 60))
    single = train_affine(x, y, prior=0.1)
    dup = train_affine(np.column_stack([x, x]), y, prior=0.1)
    np.testing.assert_allclose(single(x), dup(np.column_stack([x, x])), atol=1e-6)


def test_per_system_rescaling_absorbed():
    rng = np.random.default_rng(5)
    b1, s1 = gaussian_llrs(rng, 50, 50)
    b2, s2 = gaussian_llrs(rng, 50, 50)
    x = np.column_stack([np.r_[b1, s1], np.r_[b2, s2]])
    y = np.r_[np.ones(50, bool), np.zeros(50, bool)]
    scaled = x * np.array([3.0, 0.2]) + np.array([-1.0, 4.0])
    np.testing.assert_allclose(train_affine(x, y)(x), train_affine(scaled, y)(scaled), atol=1e-6)


def test_never_worse_than_identity_on_training_set():
    rng = np.random.default_rng(6)
    for _ in range(20):
        x, y = stack(*gaussian_llrs(rng, 30, 30, d=rng.uniform(0.5, 3)))
        x = x * rng.uniform(0.1, 5) + rng.normal(0, 2)
        cal = train_affine(x, y, prior=0.5)
        assert cllr(cal(x[y]), cal(x[~y])) <= cllr(x[y], x[~y]) + 1e-9


def test_no_convergence_warns_and_returns_iterate():
    rng = np.random.default_rng(7)
    x, y = stack(*gaussian_llrs(rng, 30, 30))
    with pytest.warns(NoConvergence):
        cal = train_affine(x, y, max_iter=1)
    assert not cal.converged
    assert cal.n_iter == 1


def test_training_errors():
    with pytest.raises(EmptyClass):
        train_affine([1.0, 2.0], [True, True])
    with pytest.raises(EmptyClass):
        train_affine([1.0, 2.0], ["spoof", "spoof"])
    with pytest.raises(ValueError):
        train_affine([1.0, np.nan], [True, False])


def test_apply_affine_examples():
    ident = AffineCalibrator([1.0], 0.0)
    np.testing.assert_array_equal(ident([1.0, -2.0, 3.5]), [1.0, -2.0, 3.5])
    assert apply_affine(AffineCalibrator([0.5, 0.5], 1.0), [2.0, 4.0]) == 4.0
    with pytest.raises(WidthMismatch):
        apply_affine(AffineCalibrator([0.5, 0.5], 1.0), [1.0, 2.0, 3.0])
    with pytest.raises(WidthMismatch):
        apply_affine(AffineCalibrator([0.5, 0.5], 1.0), np.ones((3, 3)))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=4), st.floats(-1e6, 1e6),
       st.floats(1e-6, 1 - 1e-6))
def test_calibrator_round_trip_exact(weights, bias, prior):
    cal = AffineCalibrator(weights, bias, prior)
    back = parse_calibrator(serialize_calibrator(cal))
    assert back == cal
    s = np.linspace(-3, 3, 7 * len(weights)).reshape(7, len(weights))
    np.testing.assert_array_equal(apply_affine(back, s), apply_affine(cal, s))


def test_minmax_examples():
    n = minmax_fit([0.0, 5.0, 10.0])
    assert minmax_apply(n, 5.0) == 0.5
    assert minmax_apply(n, 12.0) == 1.0
    assert minmax_apply(n, -1.0) == 0.0
    with pytest.raises(DegenerateRange):
        minmax_fit([3.0, 3.0, 3.0])


def test_average_fusion():
    x = ScoreSet({"a": 0.2, "b": 0.9})
    assert average_fuse([x, x]).entries == x.entries
    assert average_fuse([ScoreSet({"a": 0.0}), ScoreSet({"a": 1.0})])["a"] == 0.5
    assert average_fuse([x, x]).semantics == "raw"
    with pytest.raises(IdSetMismatch):
        average_fuse([x, ScoreSet({"a": 0.1})])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=20,
                unique_by=lambda t: t[0]))
def test_average_fusion_range(pairs):
    a = ScoreSet({f"u{i}": p[0] for i, p in enumerate(pairs)})
    b = ScoreSet({f"u{i}": p[1] for i, p in enumerate(pairs)})
    try:
        norms = fit_average_fusion([a, b])
    except DegenerateRange:
        return
    fused = apply_average_fusion(norms, [a, b]).values()
    assert np.all((fused >= 0) & (fused <= 1))


def test_monotone_in_positive_weight_inputs():
    cal = AffineCalibrator([0.3, 2.0], -1.0)
    base = np.array([1.0, 1.0])
    for k in range(2):
        bumped = base.copy()
        bumped[k] += 0.5
        assert apply_affine(cal, bumped) >= apply_affine(cal, base)


def test_stack_and_apply_scores():
    key = TrialKey({"a": "bonafide", "b": "spoof", "c": "spoof"})
    s1 = ScoreSet({"a": 1.0, "b": -1.0, "c": 0.0, "z": 5.0})
    mat, is_bona, ids = stack_for_training([s1], key)
    assert ids == ["a", "b", "c"]
    assert mat.shape == (3, 1)
    assert list(is_bona) == [True, False, False]
    out = apply_affine_scores(AffineCalibrator([2.0], 1.0), [s1])
    assert out.semantics == "llr"
    assert out["z"] == 11.0


def test_deterministic_retraining():
    rng = np.random.default_rng(8)
    x, y = stack(*gaussian_llrs(rng, 40, 40))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a, b = train_affine(x, y), train_affine(x, y)
    assert a == b
