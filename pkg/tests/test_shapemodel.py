import numpy as np
import pytest

from arplace.classifier import Boundary
from arplace.geometry import ObjectFeatures, RobotOffset
from arplace.shapemodel import (GSM_MODES, BoundaryMatrix, DegenerateShapeError,
                                GSMModel, RegressionRankError, assemble_H,
                                deformation_for, fit_pdm, fit_regression,
                                optimize_landmarks, placement_cost,
                                predict_success, reconstruct)


def _circle(radius, n=24, cx=0.0, cy=0.0):
    a = 2 * np.pi * np.arange(n) / n
    return np.column_stack([cx + radius * np.cos(a), cy + radius * np.sin(a)])


# ---------------------------------------------------------------------------
# principal components
# ---------------------------------------------------------------------------

def _pca_reference(H, d):
    """Independent oracle via singular value decomposition of the centered
    data (not the covariance eigendecomposition used by the implementation)."""
    mean = H.mean(axis=1)
    D = H - mean[:, None]
    U, S, _ = np.linalg.svd(D, full_matrices=False)
    evals = S ** 2 / (H.shape[1] - 1)
    energy = evals[:d].sum() / evals.sum()
    return mean, U[:, :d], evals[:d], energy


def test_fit_pdm_matches_svd_oracle():
    rng = np.random.default_rng(8)
    H = rng.normal(0.0, 1.0, (40, 12))
    d = 3
    pdm = fit_pdm(H, d)
    mean, modes, evals, energy = _pca_reference(H, d)
    np.testing.assert_allclose(pdm.mean, mean, atol=1e-12)
    np.testing.assert_allclose(pdm.eigenvalues, evals, rtol=1e-9)
    assert pdm.energy == pytest.approx(energy, abs=1e-12)
    # same subspace: modes agree up to sign
    for k in range(d):
        dot = float(np.dot(pdm.modes[:, k], modes[:, k]))
        assert abs(abs(dot) - 1.0) < 1e-9


def test_fit_pdm_sign_convention():
    rng = np.random.default_rng(9)
    H = rng.normal(0.0, 1.0, (20, 8))
    pdm = fit_pdm(H, 2)
    for k in range(2):
        idx = int(np.argmax(np.abs(pdm.modes[:, k])))
        assert pdm.modes[idx, k] > 0


def test_pdm_recovers_planted_two_factor_family():
    rng = np.random.default_rng(10)
    mean = rng.normal(0.0, 1.0, 30)
    u1 = rng.normal(0.0, 1.0, 30)
    u2 = rng.normal(0.0, 1.0, 30)
    H = np.column_stack([mean + rng.normal() * u1 + rng.normal() * u2
                         for _ in range(15)])
    pdm = fit_pdm(H, 2)
    assert pdm.energy == pytest.approx(1.0, abs=1e-9)
    # projection followed by reconstruction is lossless inside the subspace
    m = H.shape[0] // 2
    lm = np.column_stack([H[:m, 3], H[m:, 3]])
    rec = pdm.reconstruct(pdm.project(lm))
    np.testing.assert_allclose(rec, lm, atol=1e-8)


def test_fit_pdm_rejects_degenerate_input():
    H = np.ones((10, 5))
    with pytest.raises(DegenerateShapeError):
        fit_pdm(H, 1)
    with pytest.raises(ValueError):
        fit_pdm(np.random.default_rng(0).normal(size=(10, 5)), 5)


def test_assemble_H_layout_x_then_y():
    b1 = Boundary(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    b2 = Boundary(np.array([[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]]))
    feats = [ObjectFeatures(0.1, 0.0), ObjectFeatures(0.2, 0.0)]
    bm = assemble_H([b1, b2], feats)
    assert isinstance(bm, BoundaryMatrix)
    assert bm.H.shape == (6, 2)
    np.testing.assert_array_equal(bm.H[:, 0], [1.0, 3.0, 5.0, 2.0, 4.0, 6.0])
    np.testing.assert_array_equal(bm.H[:, 1], [7.0, 9.0, 11.0, 8.0, 10.0, 12.0])


# ---------------------------------------------------------------------------
# landmark placement
# ---------------------------------------------------------------------------

def test_placement_cost_formula():
    contours = [_circle(r) for r in (0.2, 0.25, 0.3, 0.35)]
    cost, energy, l = placement_cost(contours, np.arange(8) / 8, d=1)
    assert cost == pytest.approx((2.0 - energy) * l * l, rel=1e-12)
    assert 0.0 <= energy <= 1.0


def test_optimize_landmarks_on_scaling_circles():
    # pure radial scaling is a one-mode family
    contours = [_circle(r, n=64) for r in (0.2, 0.24, 0.28, 0.32, 0.36)]
    lms, d, energy, fractions = optimize_landmarks(contours, m=12,
                                                   energy_target=0.95)
    assert d == 1
    assert energy > 0.99
    assert len(lms) == 5 and lms[0].shape == (12, 2)
    assert len(np.unique(np.round(fractions % 1.0, 9))) == 12


def test_optimize_landmarks_raises_when_target_unreachable():
    rng = np.random.default_rng(1)
    contours = [_circle(0.3) + rng.normal(0.0, 0.05, (24, 2)) for _ in range(6)]
    with pytest.raises(DegenerateShapeError):
        optimize_landmarks(contours, m=8, energy_target=0.999999, max_modes=1)


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------

def _random_features(n, rng):
    return [ObjectFeatures(rng.uniform(0.05, 0.25), rng.uniform(-0.6, 0.6))
            for _ in range(n)]


def test_fit_regression_matches_normal_equations_oracle():
    rng = np.random.default_rng(5)
    feats = _random_features(12, rng)
    B = rng.normal(0.0, 1.0, (12, 2))
    reg = fit_regression(B, feats)
    Phi = np.column_stack([
        [f.dx_obj ** 2 for f in feats],
        [f.dx_obj * f.dpsi_obj for f in feats],
        [f.dpsi_obj ** 2 for f in feats],
        [f.dx_obj for f in feats],
        [f.dpsi_obj for f in feats],
        np.ones(12)])
    for k in range(2):
        w = np.linalg.solve(Phi.T @ Phi, Phi.T @ B[:, k])
        q = lambda f: np.array([f.dx_obj, f.dpsi_obj, 1.0])
        for f in feats[:4]:
            want = float(q(f) @ np.array(
                [[w[0], w[1] / 2, w[3] / 2],
                 [w[1] / 2, w[2], w[4] / 2],
                 [w[3] / 2, w[4] / 2, w[5]]]) @ q(f))
            got = deformation_for(reg, f, warn_extrapolation=False)[k]
            assert got == pytest.approx(want, rel=1e-8, abs=1e-10)


def test_fit_regression_recovers_exact_quadratic():
    rng = np.random.default_rng(6)
    feats = _random_features(20, rng)
    truth = lambda f: 3.0 * f.dx_obj ** 2 - 1.2 * f.dx_obj * f.dpsi_obj + \
        0.4 * f.dpsi_obj ** 2 + 0.7 * f.dx_obj - 0.1 * f.dpsi_obj + 2.0
    B = np.array([[truth(f)] for f in feats])
    reg = fit_regression(B, feats)
    assert reg.r_squared[0] == pytest.approx(1.0, abs=1e-10)
    f = ObjectFeatures(0.13, 0.21)
    assert deformation_for(reg, f, warn_extrapolation=False)[0] == \
        pytest.approx(truth(f), rel=1e-8)


def test_fit_regression_rejects_rank_deficient_poses():
    feats = [ObjectFeatures(0.1, 0.0)] * 8  # all identical
    with pytest.raises(RegressionRankError):
        fit_regression(np.zeros((8, 1)), feats)


def test_deformation_warns_on_extrapolation():
    rng = np.random.default_rng(7)
    feats = _random_features(12, rng)
    reg = fit_regression(rng.normal(size=(12, 1)), feats)
    with pytest.warns(UserWarning):
        deformation_for(reg, ObjectFeatures(5.0, 0.0))


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------

def test_gsm_save_load_round_trip(gsm, tmp_path):
    path = tmp_path / "model.json"
    gsm.save(path)
    back = GSMModel.load(path)
    np.testing.assert_array_equal(back.pdm.mean, gsm.pdm.mean)
    np.testing.assert_array_equal(back.pdm.modes, gsm.pdm.modes)
    np.testing.assert_array_equal(back.regression.W, gsm.regression.W)
    obj = ObjectFeatures(0.12, 0.2)
    np.testing.assert_array_equal(back.boundary_for(obj).landmarks,
                                  gsm.boundary_for(obj).landmarks)


def test_gsm_has_two_modes(gsm):
    assert gsm.pdm.d == GSM_MODES
    assert gsm.pdm.modes.shape[1] == 2


def test_predict_success_matches_boundary_containment(gsm):
    obj = ObjectFeatures(0.14, -0.1)
    b = gsm.boundary_for(obj, warn_extrapolation=False)
    inside = b.centroid()
    assert predict_success(gsm, RobotOffset(*inside), obj)
    assert not predict_success(gsm, RobotOffset(5.0, 5.0), obj)


def test_gsm_boundary_tracks_handle_rotation(gsm):
    """The predicted region swings laterally with the object orientation."""
    left = gsm.boundary_for(ObjectFeatures(0.12, -0.4)).centroid()
    right = gsm.boundary_for(ObjectFeatures(0.12, 0.4)).centroid()
    assert right[1] - left[1] > 0.2


def test_reconstruct_at_zero_coefficients_is_the_mean(gsm):
    b = reconstruct(gsm.pdm, [0.0, 0.0])
    assert isinstance(b, Boundary)
    m = gsm.pdm.m
    np.testing.assert_allclose(b.landmarks[:, 0], gsm.pdm.mean[:m])
    np.testing.assert_allclose(b.landmarks[:, 1], gsm.pdm.mean[m:])
