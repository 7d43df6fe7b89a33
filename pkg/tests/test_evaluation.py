import numpy as np
import pytest

from arplace.evaluation import (SweepSpec, accuracy_curve, candidate_grid_spec,
                                chi_square, fixed_strategy_offset,
                                make_two_cup_scene, robustness_experiment)
from arplace.geometry import ObjectFeatures
from arplace.simworld import default_robot_grid, geometric_success

# Frozen references computed independently from the textbook statistic
# sum (O - E)^2 / E on the 2x2 table and the chi-square survival function
# with one degree of freedom.
CHI2_REFERENCES = [
    # (succ_a, n_a, succ_b, n_b, statistic, p_value)
    (90, 100, 60, 100, 24.0, 9.63357008643095e-07),
    (95, 100, 85, 100, 5.555555555555555, 0.01842212545409897),
    (10, 50, 40, 50, 36.0, 1.9731752900753933e-09),
    (99, 100, 90, 100, 7.792207792207792, 0.005247203739115639),
    (50, 100, 50, 100, 0.0, 1.0),
]


def test_chi_square_matches_frozen_references():
    for sa, na, sb, nb, stat_ref, p_ref in CHI2_REFERENCES:
        stat, p = chi_square(sa, na, sb, nb)
        assert stat == pytest.approx(stat_ref, abs=1e-6)
        assert p == pytest.approx(p_ref, abs=1e-6)


def test_chi_square_symmetry():
    assert chi_square(90, 100, 60, 100) == chi_square(60, 100, 90, 100)


def test_chi_square_degenerate_tables():
    assert chi_square(0, 50, 0, 80) == (0.0, 1.0)    # empty success column
    assert chi_square(50, 50, 80, 80) == (0.0, 1.0)  # empty failure column


def test_chi_square_input_validation():
    with pytest.raises(ValueError):
        chi_square(5, 0, 1, 10)
    with pytest.raises(ValueError):
        chi_square(11, 10, 1, 10)


# ---------------------------------------------------------------------------
# fixed-offset baseline
# ---------------------------------------------------------------------------

def test_fixed_offset_is_the_mean_pose_region_centroid(world):
    spec = SweepSpec()
    off = fixed_strategy_offset(world, spec)
    mean_obj = ObjectFeatures(0.5 * sum(spec.dx_range),
                              0.5 * sum(spec.dpsi_range))
    cells = [r for r in default_robot_grid()
             if geometric_success(mean_obj, r, world)]
    want_x = np.mean([r.dx_rob for r in cells]) + mean_obj.dx_obj
    want_y = np.mean([r.dy_rob for r in cells])
    assert off == (pytest.approx(want_x), pytest.approx(want_y))
    assert off[0] > 0.0  # stands clear of the table


def test_candidate_grid_covers_the_training_rectangle():
    spec = candidate_grid_spec(0.025)
    xs, ys = spec.centers()
    assert xs[0] <= 0.15 and xs[-1] >= 1.05 - 0.025
    assert ys[0] <= -0.78 and ys[-1] >= 0.78 - 0.025


def test_make_two_cup_scene_layout():
    scene = make_two_cup_scene(0.4)
    a, b = scene.objects["cup-a"], scene.objects["cup-b"]
    assert a.truth[1] == pytest.approx(-0.2)
    assert b.truth[1] == pytest.approx(0.2)
    assert a.truth[2] == -b.truth[2] != 0.0  # handles toe in
    assert scene.robot_xy == (1.5, 0.0)


# ---------------------------------------------------------------------------
# robustness sweep behavior
# ---------------------------------------------------------------------------

def test_sweep_is_deterministic_per_seed(gsm, world):
    spec = SweepSpec(sigma_obj_values=(0.0, 0.1), trials_per_cell=10,
                     n_map_samples=40)
    a = robustness_experiment(spec, gsm, world, seed=3)
    b = robustness_experiment(spec, gsm, world, seed=3)
    assert [p.successes for p in a.points] == [p.successes for p in b.points]
    assert a.point_for(0.1).n_trials == 10


def test_fixed_strategy_degrades_monotonically_without_execution_noise(gsm, world):
    """With execution noise off, the baseline's mean success over many seeds
    must fall as perception noise grows: its only error source is the
    perceived pose."""
    spec = SweepSpec(sigma_obj_values=(0.0, 0.10, 0.20), sigma_rob=0.0,
                     trials_per_cell=30, n_map_samples=30)
    rates = np.zeros(3)
    n_seeds = 10
    for seed in range(n_seeds):
        res = robustness_experiment(spec, gsm, world, seed=seed)
        rates += [p.rate("fixed") for p in res.points]
    rates /= n_seeds
    assert rates[0] > rates[1] > rates[2]


# ---------------------------------------------------------------------------
# accuracy curve behavior
# ---------------------------------------------------------------------------

def test_accuracy_curve_filter_reduces_executed_trials(world):
    obj = ObjectFeatures(0.11, 0.2)
    sizes = [40, 80]
    unfiltered = accuracy_curve(world, obj, sizes, use_capability_filter=False,
                                seed=1)
    filtered = accuracy_curve(world, obj, sizes, use_capability_filter=True,
                              seed=1)
    for u, f in zip(unfiltered, filtered):
        assert u.size == f.size
        assert f.executed < u.executed
        assert u.executed == u.size
        assert 0.0 <= f.accuracy <= 1.0


def test_accuracy_curve_requires_ascending_sizes(world):
    with pytest.raises(ValueError):
        accuracy_curve(world, ObjectFeatures(0.1, 0.0), [80, 40],
                       use_capability_filter=True)
