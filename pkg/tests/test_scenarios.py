import numpy as np
import pytest

from conftest import small
from ghostsim.errors import ValidationError, WindowingError
from ghostsim.scenarios import REGISTRY, SCENARIOS, default_config, run_scenario
from ghostsim.scenarios.engine import find_peaks, periodic_distance, run_ensemble

EQ = dict(source=dict(l_c=40e-6), detector=dict(scan_start=-0.5e-3, scan_stop=0.5e-3))
TWO = dict(object=dict(y1=-0.2e-3, y2=0.2e-3), detector=dict(scan_start=-0.5e-3, scan_stop=0.5e-3))


def tables_equal(r1, r2):
    assert r1.tables.keys() == r2.tables.keys()
    for name in r1.tables:
        assert r1.tables[name].columns == r2.tables[name].columns
        np.testing.assert_array_equal(np.array(r1.tables[name].rows, dtype=object),
                                      np.array(r2.tables[name].rows, dtype=object))


def test_registry_covers_every_scenario():
    assert tuple(REGISTRY) == SCENARIOS
    for name in SCENARIOS:
        assert default_config(name).validate().scenario == name


def test_equal_plane_small_ensemble():
    r = run_scenario(small("equal_plane", 1500, **EQ))
    v = r.verdict
    assert v.mode == "standard"
    assert v.passed, [c for c in v.checks if not c.passed]
    assert abs(v.measured["g2_at_zero"] - 2.0) < 4 * v.measured["stderr_at_zero"]
    assert r.tables["g2_vs_separation.csv"].columns == ("x_m", "g2", "covariance", "stderr")


def test_equal_plane_at_zero_distance():
    cfg = small("equal_plane", 800, **EQ).replace("arms", z_object=0.0, z_reference=0.0)
    assert run_scenario(cfg).verdict.passed


def test_mismatched_planes_follow_prediction():
    cfg = small("equal_plane", 1500, **EQ).replace("arms", z_object=0.1, z_reference=0.11)
    v = run_scenario(cfg).verdict
    assert v.mode == "mismatch"
    assert v.passed, [c for c in v.checks if not c.passed]
    assert v.measured["g2_at_zero_predicted"] < 1.2


def test_two_hole_small_ensemble():
    v = run_scenario(small("two_hole", 1500, **TWO)).verdict
    assert v.passed, [c for c in v.checks if not c.passed]
    assert v.measured["n_peaks"] == 2


def test_two_hole_order_does_not_matter():
    a = run_scenario(small("two_hole", 400, **TWO))
    swapped = dict(TWO, object=dict(y1=0.2e-3, y2=-0.2e-3))
    b = run_scenario(small("two_hole", 400, **swapped))
    np.testing.assert_allclose(a.verdict.measured["peak_positions_m"], b.verdict.measured["peak_positions_m"])


def test_two_hole_mismatch_washes_out_peaks():
    cfg = small("two_hole", 800, **TWO).replace("arms", z_reference=0.13)
    v = run_scenario(cfg).verdict
    assert v.mode == "mismatch"
    assert v.passed


def test_hole_larger_than_speckle_is_rejected():
    cfg = small("two_hole", 100, **TWO).replace("object", hole_side=160e-6)
    with pytest.raises(ValidationError, match="smaller than l_c"):
        run_scenario(cfg)


def test_contrast_sweep_small():
    cfg = small("contrast_sweep", 1500, analysis=dict(ratios=(1, 2, 4), metric_frames=0))
    v = run_scenario(cfg).verdict
    assert v.passed, [c for c in v.checks if not c.passed]


@pytest.mark.parametrize("ratios", [(1, 100), (0, 2), (1.5,)])
def test_unrealizable_ratios_are_rejected(ratios):
    cfg = small("contrast_sweep", 100, analysis=dict(ratios=ratios, metric_frames=0))
    with pytest.raises(ValidationError):
        run_scenario(cfg)


def test_lens_ghost_reduced_ensemble():
    cfg = default_config("lens_ghost").replace("ensemble", n_realizations=500, shard_size=100)
    v = run_scenario(cfg).verdict
    assert v.passed, [c for c in v.checks if not c.passed]


def test_lens_imaging_condition_violation_names_required_distance():
    cfg = default_config("lens_ghost").replace("arms", lens_z1=0.2, lens_z2=0.25)
    with pytest.raises(ValidationError, match="required z2 is 0.2"):
        run_scenario(cfg)


def test_lens_positive_magnification_rejected():
    cfg = default_config("lens_ghost").replace("analysis", magnifications=(2.0,))
    with pytest.raises(ValidationError, match="negative"):
        run_scenario(cfg)


def test_lens_scenario_without_lens_and_unequal_arms():
    cfg = default_config("lens_ghost").replace("arms", focal_length=None)
    cfg = cfg.replace("ensemble", n_realizations=300, shard_size=100)
    v = run_scenario(cfg).verdict
    assert v.mode == "mismatch"
    assert v.passed


def test_near_to_far_small():
    cfg = small("near_to_far", 800, analysis=dict(z_factors=(0.1, 1.0, 2.0), metric_frames=0),
                detector=dict(scan_start=-0.3e-3, scan_stop=0.3e-3))
    v = run_scenario(cfg).verdict
    assert v.passed, [c for c in v.checks if not c.passed]


def test_near_to_far_beam_outgrowing_window_is_rejected():
    cfg = small("near_to_far", 100, detector=dict(scan_start=-0.3e-3, scan_stop=0.3e-3))
    with pytest.raises(WindowingError, match="guard region"):
        run_scenario(cfg)


def test_near_to_far_needs_beam():
    cfg = small("near_to_far", 100).replace("source", beam_radius=None)
    with pytest.raises(ValidationError, match="beam"):
        run_scenario(cfg)


def test_resolution_tradeoff_small():
    cfg = small("resolution_tradeoff", 1500,
                analysis=dict(detector_sides=(1, 2, 3), background_exclusion=2.0, metric_frames=0),
                detector=dict(scan_start=-0.45e-3, scan_stop=0.45e-3))
    v = run_scenario(cfg).verdict
    assert v.passed, [c for c in v.checks if not c.passed]


def test_detector_smaller_than_pixel_is_rejected():
    cfg = small("two_hole", 100, **TWO).replace("detector", side=4e-6)
    with pytest.raises(ValidationError, match="smaller than one pixel"):
        run_scenario(cfg)


def test_scenarios_are_pure_functions_of_config():
    cfg = small("two_hole", 300, **TWO)
    tables_equal(run_scenario(cfg), run_scenario(cfg))


def test_results_do_not_depend_on_worker_count():
    cfg = small("equal_plane", 600, **EQ)
    tables_equal(run_scenario(cfg, workers=1), run_scenario(cfg, workers=3))


def test_seed_changes_results():
    a = run_scenario(small("equal_plane", 300, **EQ)).verdict.measured["g2_at_zero"]
    b = run_scenario(small("equal_plane", 300, **EQ).replace("ensemble", master_seed=9)).verdict.measured["g2_at_zero"]
    assert a != b


def test_run_ensemble_rejects_bad_worker_count():
    cfg = small("equal_plane", 10)
    with pytest.raises(ValidationError):
        run_ensemble(cfg, 1, 1, lambda k: [(1.0, np.ones(1))], workers=0)


def test_find_peaks_counts_separate_runs():
    x = np.arange(40) * 1.0
    prof = np.exp(-((x - 10) ** 2) / 4) + np.exp(-((x - 30) ** 2) / 4)
    peaks = find_peaks(x, prof)
    assert [p.argmax for p in peaks] == [10.0, 30.0]
    assert peaks[0].position == pytest.approx(10.0, abs=1e-6)


def test_periodic_distance_wraps():
    cfg = small("equal_plane", 10)
    grid = cfg.grid.build()
    pts = np.array([[-0.6e-3, 0.0]])
    tgt = np.array([[0.6e-3, 0.0]])
    assert periodic_distance(grid, pts, tgt, True)[0] == pytest.approx(0.08e-3)
    assert periodic_distance(grid, pts, tgt, False)[0] == pytest.approx(1.2e-3)
