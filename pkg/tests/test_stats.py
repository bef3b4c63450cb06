import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostsim.detect import RealizationRecord
from ghostsim.errors import InsufficientDataError, ValidationError
from ghostsim.field import Grid2D, SpeckleSpec, generate_speckle, intensity
from ghostsim.stats import (CorrelationAccumulator, CorrelationMap, accumulate, cell_model_contrast, coherence_width,
                            finalize, ghost_image, measured_contrast, merge, predicted_contrast, speckle_metrics)


def filled(buckets, points, positions=None):
    acc = CorrelationAccumulator(points.shape[1], positions)
    for b, p in zip(buckets, points):
        acc.add(b, p)
    return acc


def direct_g2(b, p):
    # Plain numpy estimator, the reference for the accumulator.
    return (p * b[:, None]).mean(axis=0) / (p.mean(axis=0) * b.mean())


def test_direct_estimator_agreement():
    rng = np.random.default_rng(1)
    b = rng.exponential(size=500)
    p = rng.exponential(size=(500, 4)) + b[:, None]
    m = finalize(filled(b, p))
    np.testing.assert_allclose(m.g2, direct_g2(b, p), rtol=1e-12)
    cov = (p * b[:, None]).mean(axis=0) - p.mean(axis=0) * b.mean()
    np.testing.assert_allclose(m.covariance, cov, rtol=1e-10)
    np.testing.assert_allclose(ghost_image(m).covariance, cov, rtol=1e-10)


def test_exponential_oracles():
    # Same thermal intensity on both detectors: g2 = <I^2>/<I>^2 = 2; independent: 1.
    rng = np.random.default_rng(2)
    i = rng.exponential(size=40000)
    j = rng.exponential(size=40000)
    m = finalize(filled(i, np.column_stack([i, j])))
    assert m.g2[0] == pytest.approx(2.0, abs=4 * m.stderr[0])
    assert m.g2[1] == pytest.approx(1.0, abs=4 * m.stderr[1])


def test_stderr_matches_spread_of_repeated_experiments():
    rng = np.random.default_rng(3)
    est, se = [], []
    for _ in range(300):
        i = rng.exponential(size=400)
        m = finalize(filled(i, i[:, None] * rng.uniform(0.5, 1.5, size=(400, 1))))
        est.append(m.g2[0])
        se.append(m.stderr[0])
    assert np.mean(se) == pytest.approx(np.std(est, ddof=1), rel=0.15)


def test_constant_input_gives_unit_g2_and_zero_error():
    m = finalize(filled(np.full(10, 3.0), np.full((10, 2), 0.5)))
    np.testing.assert_allclose(m.g2, 1.0, rtol=1e-14)
    np.testing.assert_allclose(m.stderr, 0.0, atol=1e-12)


def test_zero_mean_gives_nan():
    m = finalize(filled(np.ones(5), np.zeros((5, 1))))
    assert math.isnan(m.g2[0])


def test_finalize_needs_two_realizations():
    with pytest.raises(InsufficientDataError):
        finalize(filled(np.ones(1), np.ones((1, 3))))


def test_shard_merge_matches_single_pass():
    rng = np.random.default_rng(4)
    b = rng.exponential(size=10000)
    p = rng.exponential(size=(10000, 3)) * b[:, None]
    whole = filled(b, p)
    shards = [filled(b[k::8], p[k::8]) for k in range(8)]
    merged = shards[0]
    for s in shards[1:]:
        merged = merge(merged, s)
    a, c = whole.sums(), merged.sums()
    for key in a:
        np.testing.assert_allclose(c[key], a[key], rtol=1e-12)
    np.testing.assert_allclose(finalize(merged).g2, finalize(whole).g2, rtol=1e-12)


def test_merge_rejects_different_layouts():
    with pytest.raises(ValidationError):
        merge(CorrelationAccumulator(2), CorrelationAccumulator(3))
    a = CorrelationAccumulator(2, [[0.0, 0.0], [1.0, 0.0]])
    b = CorrelationAccumulator(2, [[0.0, 0.0], [2.0, 0.0]])
    with pytest.raises(ValidationError):
        merge(a, b)
    with pytest.raises(ValidationError):
        CorrelationAccumulator(1).add(1.0, [1.0, 2.0])


def test_accumulate_record():
    acc = accumulate(CorrelationAccumulator(2), RealizationRecord(0, 2.0, [1.0, 3.0]))
    assert acc.n == 1
    np.testing.assert_allclose(acc.sums()["pb"], [2.0, 6.0])


records = st.lists(st.tuples(st.floats(0, 1e3), st.lists(st.floats(0, 1e3), min_size=2, max_size=2)),
                   min_size=0, max_size=30)


def _acc(rs):
    acc = CorrelationAccumulator(2)
    for b, p in rs:
        acc.add(b, np.array(p))
    return acc


def _close(x, y):
    sx, sy = x.sums(), y.sums()
    assert sx["n"] == sy["n"]
    for key in sx:
        np.testing.assert_allclose(sx[key], sy[key], rtol=1e-12, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(records, records, records)
def test_merge_is_associative_and_commutative(r1, r2, r3):
    a, b, c = _acc(r1), _acc(r2), _acc(r3)
    _close(merge(merge(a, b), c), merge(a, merge(b, c)))
    _close(merge(a, b), merge(b, a))
    _close(merge(a, CorrelationAccumulator(2)), a)
    _close(merge(a, b), _acc(r1 + r2))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(0.1, 10)), min_size=3, max_size=40),
       st.floats(0.01, 100), st.floats(0.01, 100))
def test_g2_is_scale_invariant(rs, kb, kp):
    b = np.array([r[0] for r in rs])
    p = np.array([[r[1]] for r in rs])
    g = finalize(filled(b, p)).g2
    h = finalize(filled(kb * b, kp * p)).g2
    np.testing.assert_allclose(h, g, rtol=1e-9)


@pytest.mark.parametrize("ratio, expected", [(1, 2.0), (2, 1.5), (4, 1.25), (16, 17 / 16)])
def test_predicted_contrast(ratio, expected):
    assert predicted_contrast(ratio * 1e-10, 1e-10) == pytest.approx(expected)


def test_predicted_contrast_rejects_unrealizable():
    with pytest.raises(ValidationError):
        predicted_contrast(0.5, 1.0)
    with pytest.raises(ValidationError):
        predicted_contrast(1.0, 0.0)


@pytest.mark.parametrize("ratio", [1, 2, 4, 8])
def test_cell_model_agrees_with_prediction(ratio):
    s, se = cell_model_contrast(ratio, n=100000, seed=ratio)
    assert s == pytest.approx(predicted_contrast(ratio, 1), abs=4 * se + 1e-3)


def test_measured_contrast_regions():
    g2 = np.array([1.5, 1.5, 1.0, 1.0, 1.0])
    cmap = CorrelationMap(None, g2, g2 - 1, np.full(5, 0.01), 100, np.ones(5), 1.0)
    rep = measured_contrast(cmap, [0, 1], np.array([False, False, True, True, True]), 2e-10, 1e-10)
    assert rep.S_measured == pytest.approx(1.5)
    assert rep.S_predicted == pytest.approx(1.5)
    assert rep.ratio == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        measured_contrast(cmap, [0, 1], [1, 2], 2e-10, 1e-10)
    with pytest.raises(ValidationError):
        measured_contrast(cmap, [], [2], 2e-10, 1e-10)


def test_coherence_width_of_gaussian_curve():
    d = np.arange(-20, 21) * 5e-6
    mu = np.exp(-4 * math.log(2) * d**2 / (60e-6) ** 2)
    assert coherence_width(d, 1 + mu**2) == pytest.approx(60e-6, rel=1e-9)
    with pytest.raises(ValidationError):
        coherence_width(d[:20], 1 + mu[:20] ** 2)


def test_speckle_metrics_on_synthetic_frames():
    g = Grid2D(128, 128, 10e-6, 10e-6, 532e-9)
    spec = SpeckleSpec(60e-6)
    frames = np.stack([intensity(generate_speckle(g, spec, k, 9)) for k in range(120)])
    m = speckle_metrics(frames, g)
    assert m.l_c_measured == pytest.approx(60e-6, rel=0.05)
    assert m.contrast_measured == pytest.approx(1.0, abs=0.05)
    # Intensity correlation is |mu|^2, narrower by sqrt(2).
    assert m.intensity_fwhm == pytest.approx(60e-6 / math.sqrt(2), rel=0.05)
    with pytest.raises(InsufficientDataError):
        speckle_metrics(frames[:50], g)
