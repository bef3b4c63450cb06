import math

import numpy as np
import pytest

from conftest import brute_autocorrelation
from ghostsim.errors import SamplingError, ValidationError
from ghostsim.field import (ComplexField, EnsembleSpec, Grid2D, SpeckleSpec, calibration_self_check,
                            exponential_ks_threshold, field_correlation_fwhm, generate_speckle,
                            half_max_width, intensity, intensity_histogram_test, make_grid,
                            realization_rng)


def test_grid_coordinates_and_index(grid):
    assert grid.shape == (128, 128)
    assert grid.x[64] == 0.0
    assert grid.index_of(0.0, 0.0) == (64, 64)
    assert grid.index_of(80e-6, -30e-6) == (72, 61)
    assert grid.extent == pytest.approx((1.28e-3, 1.28e-3))


@pytest.mark.parametrize("kw", [dict(nx=0), dict(dx=-1e-6), dict(wavelength=float("nan")), dict(ny=2.5)])
def test_grid_rejects_bad_values(kw):
    args = dict(nx=8, ny=8, dx=1e-6, dy=1e-6, wavelength=5e-7) | kw
    with pytest.raises(ValidationError):
        make_grid(**args)


def test_field_lazy_representations_agree(grid):
    rng = np.random.default_rng(0)
    e = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    f = ComplexField(grid, e)
    g = ComplexField.from_spectrum(grid, f.spectrum)
    assert not g.has_samples
    np.testing.assert_allclose(g.samples, e, atol=1e-12)
    np.testing.assert_allclose(intensity(f), np.abs(e) ** 2, rtol=1e-13)


def test_field_validation(grid):
    with pytest.raises(ValidationError):
        ComplexField(grid, np.zeros((3, 3)))
    bad = np.zeros(grid.shape, complex)
    bad[0, 0] = np.nan
    with pytest.raises(ValidationError):
        ComplexField(grid, bad)


def test_speckle_is_pure_function_of_index(grid, speckle):
    a = generate_speckle(grid, speckle, 7, 123).samples
    b = generate_speckle(grid, speckle, 7, 123).samples
    c = generate_speckle(grid, speckle, 8, 123).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_realization_streams_are_disjoint():
    x = realization_rng(5, 0).standard_normal(1000)
    y = realization_rng(5, 1).standard_normal(1000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.15
    with pytest.raises(ValidationError):
        realization_rng(5, -1)


def test_speckle_mean_intensity_and_contrast(grid):
    spec = SpeckleSpec(l_c=40e-6, mean_intensity=2.5)
    i = np.stack([intensity(generate_speckle(grid, spec, k, 1)) for k in range(200)])
    assert i.mean() == pytest.approx(2.5, rel=0.03)
    assert i.std() / i.mean() == pytest.approx(1.0, abs=0.05)


def test_correlation_length_matches_brute_force_oracle(grid, speckle):
    # Independent estimate: explicit shifted products, no FFT.
    fields = [generate_speckle(grid, speckle, k, 3).samples for k in range(40)]
    mu = brute_autocorrelation(fields, 12)
    fwhm = half_max_width(mu, grid.dx)
    assert fwhm == pytest.approx(80e-6, rel=0.05)
    fx, fy = field_correlation_fwhm(generate_speckle(grid, speckle, k, 3) for k in range(40))
    assert fx == pytest.approx(fwhm, rel=0.03)
    assert fy == pytest.approx(80e-6, rel=0.05)


def test_calibration_self_check(grid, speckle):
    assert calibration_self_check(grid, speckle) == pytest.approx(80e-6, rel=0.1)


def test_under_sampled_correlation_length_is_rejected(grid):
    with pytest.raises(SamplingError):
        generate_speckle(grid, SpeckleSpec(l_c=15e-6), 0, 0)


def test_diffuser_method_reaches_requested_correlation(grid):
    spec = SpeckleSpec(l_c=60e-6, method="diffuser", diffuser_correlation=120e-6, diffuser_distance=1e-3)
    fields = [generate_speckle(grid, spec, k, 0) for k in range(60)]
    fx, fy = field_correlation_fwhm(fields)
    assert 0.5 * (fx + fy) == pytest.approx(60e-6, rel=0.2)
    assert np.mean([f.power() for f in fields]) / (grid.size * grid.pixel_area) == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("kw", [dict(l_c=0.0), dict(l_c=1e-4, mean_intensity=-1),
                                dict(l_c=1e-4, method="magic"), dict(l_c=1e-4, method="diffuser")])
def test_speckle_spec_validation(kw):
    with pytest.raises(ValidationError):
        SpeckleSpec(**kw)


def test_ensemble_spec_validation():
    with pytest.raises(ValidationError):
        EnsembleSpec(0)
    with pytest.raises(ValidationError):
        EnsembleSpec(10, master_seed=-1)


def test_half_max_width_exact_for_gaussian():
    d = np.arange(50) * 1e-6
    sigma = 7e-6
    prof = np.exp(-d**2 / (2 * sigma**2))
    assert half_max_width(prof, 1e-6) == pytest.approx(2.354820045 * sigma, rel=1e-9)
    assert math.isnan(half_max_width(np.ones(5), 1.0))


def test_histogram_passes_for_speckle_and_fails_for_uniform(grid, speckle):
    fields = [generate_speckle(grid, speckle, k, 0) for k in range(120)]
    rep = intensity_histogram_test(fields, stride=12)
    assert rep.passed
    assert rep.normalized_second_moment == pytest.approx(2.0, abs=0.1)
    flat = [np.full(grid.shape, 1.0) + 0.1 * np.random.default_rng(k).random(grid.shape) for k in range(120)]
    assert not intensity_histogram_test(flat, stride=12).passed
    with pytest.raises(ValidationError):
        intensity_histogram_test(fields[:10])


def test_ks_threshold_shrinks_with_sample_size():
    assert exponential_ks_threshold(20000) < exponential_ks_threshold(2000)
