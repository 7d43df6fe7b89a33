"""Generalized success model: a point distribution model over per-pose
classification boundaries plus a quadratic regression from object features to
the deformation-mode coefficients.

Training stacks the N per-pose boundaries into a 2m x N landmark matrix,
extracts the principal deformation modes by PCA, and regresses each mode
coefficient on quadratic terms of (object distance, object orientation).
Querying reconstructs a boundary polygon for arbitrary object features and
tests robot offsets for membership.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .classifier import Boundary, SVMModel, extract_contour
from .geometry import ObjectFeatures, RobotOffset
from .grids import GridSpec

MODEL_FORMAT_VERSION = 1


class DegenerateShapeError(RuntimeError):
    pass


class RegressionRankError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# landmark matrix and distribution model
# ---------------------------------------------------------------------------

@dataclass
class BoundaryMatrix:
    """2m x N landmark matrix; column j stacks the x then the y coordinates
    of the m landmarks of boundary j."""

    H: np.ndarray
    object_poses: list[ObjectFeatures]

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        if self.H.ndim != 2 or self.H.shape[0] % 2 != 0:
            raise ValueError("H must be 2m x N")
        if len(self.object_poses) != self.H.shape[1]:
            raise ValueError("one object pose per column required")

    @property
    def m(self) -> int:
        return self.H.shape[0] // 2

    @property
    def n_poses(self) -> int:
        return self.H.shape[1]

    def boundary(self, j: int) -> np.ndarray:
        return _column_to_landmarks(self.H[:, j])


def _landmarks_to_column(landmarks: np.ndarray) -> np.ndarray:
    lm = np.asarray(landmarks, dtype=float)
    return np.concatenate([lm[:, 0], lm[:, 1]])


def _column_to_landmarks(col: np.ndarray) -> np.ndarray:
    m = len(col) // 2
    return np.column_stack([col[:m], col[m:]])


def assemble_H(boundaries: list, object_poses: list[ObjectFeatures]) -> BoundaryMatrix:
    """Stack N boundaries of m landmarks each into a 2m x N matrix."""
    if len(boundaries) != len(object_poses):
        raise ValueError("one object pose per boundary required")
    arrays = [b.landmarks if isinstance(b, Boundary) else np.asarray(b, dtype=float)
              for b in boundaries]
    m = len(arrays[0])
    for a in arrays:
        if len(a) != m:
            raise ValueError("all boundaries must share the landmark count")
    H = np.column_stack([_landmarks_to_column(a) for a in arrays])
    return BoundaryMatrix(H=H, object_poses=list(object_poses))


@dataclass
class PDM:
    """Point distribution model: mean landmark vector and the top deformation
    modes of the landmark covariance."""

    mean: np.ndarray          # (2m,)
    modes: np.ndarray         # (2m, d), orthonormal columns
    eigenvalues: np.ndarray   # (d,), non-increasing
    energy: float             # captured fraction of total variance

    @property
    def d(self) -> int:
        return self.modes.shape[1]

    @property
    def m(self) -> int:
        return len(self.mean) // 2

    def reconstruct(self, b: np.ndarray) -> np.ndarray:
        """Landmark polygon (m, 2) for mode coefficients b."""
        b = np.asarray(b, dtype=float)
        if b.shape != (self.d,):
            raise ValueError(f"need {self.d} mode coefficients")
        return _column_to_landmarks(self.mean + self.modes @ b)

    def project(self, landmarks: np.ndarray) -> np.ndarray:
        """Mode coefficients of an (m, 2) landmark polygon."""
        return self.modes.T @ (_landmarks_to_column(landmarks) - self.mean)


def reconstruct(pdm: PDM, b) -> Boundary:
    return Boundary(pdm.reconstruct(np.asarray(b, dtype=float)))


def fit_pdm(H, d: int) -> PDM:
    """PCA of the landmark matrix with 1/(N-1) covariance normalization.
    Eigenvector signs are fixed so the largest-magnitude component of each
    mode is positive."""
    H = H.H if isinstance(H, BoundaryMatrix) else np.asarray(H, dtype=float)
    N = H.shape[1]
    if N < 2:
        raise ValueError("need at least two boundaries")
    if not (1 <= d <= min(H.shape[0], N - 1)):
        raise ValueError(f"d must lie in [1, {min(H.shape[0], N - 1)}]")
    mean = H.mean(axis=1)
    D = H - mean[:, None]
    cov = D @ D.T / (N - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals[::-1], 0.0, None)
    evecs = evecs[:, ::-1]
    total = float(np.sum(evals))
    if total <= 1e-18:
        raise DegenerateShapeError("no variation in the boundaries")
    modes = evecs[:, :d].copy()
    for k in range(d):
        idx = int(np.argmax(np.abs(modes[:, k])))
        if modes[idx, k] < 0:
            modes[:, k] = -modes[:, k]
    return PDM(mean=mean, modes=modes, eigenvalues=evals[:d].copy(),
               energy=float(np.sum(evals[:d]) / total))


# ---------------------------------------------------------------------------
# landmark placement
# ---------------------------------------------------------------------------

class _ArcTable:
    """Precomputed arc-length parametrization of a closed polyline, for fast
    repeated lookups at arbitrary arc fractions."""

    def __init__(self, contour: np.ndarray):
        self.closed = np.vstack([contour, contour[:1]])
        seg = np.linalg.norm(np.diff(self.closed, axis=0), axis=1)
        self.arcs = np.concatenate([[0.0], np.cumsum(seg)])
        self.seg = np.where(seg > 0, seg, 1.0)
        self.total = self.arcs[-1]

    def at(self, fractions: np.ndarray) -> np.ndarray:
        t = (np.asarray(fractions) % 1.0) * self.total
        idx = np.clip(np.searchsorted(self.arcs, t, side="right") - 1,
                      0, len(self.seg) - 1)
        frac = (t - self.arcs[idx]) / self.seg[idx]
        return self.closed[idx] + frac[:, None] * (self.closed[idx + 1] - self.closed[idx])


def _landmarks_at(contours: list, fractions: np.ndarray) -> list[np.ndarray]:
    tables = [c if isinstance(c, _ArcTable) else _ArcTable(c) for c in contours]
    return [t.at(fractions) for t in tables]


def placement_cost(contours: list, fractions: np.ndarray, d: int) -> tuple[float, float, float]:
    """Cost (2 - e) * l^2 of a landmark placement, where e is the energy in
    the first d modes and l the mean landmark reconstruction distance of the
    d-mode model. Returns (cost, energy, l)."""
    lms = _landmarks_at(contours, fractions)
    H = np.column_stack([_landmarks_to_column(lm) for lm in lms])
    pdm = fit_pdm(H, d)
    dists = []
    for lm in lms:
        rec = pdm.reconstruct(pdm.project(lm))
        dists.append(np.linalg.norm(rec - lm, axis=1))
    l = float(np.mean(np.concatenate(dists)))
    return (2.0 - pdm.energy) * l * l, pdm.energy, l


def _gaps_ok(fractions: np.ndarray, min_gap: float) -> bool:
    """True when the cyclic ordering is preserved with all gaps >= min_gap
    (rules out the degenerate all-landmarks-coincide minimum of the cost)."""
    f = np.sort(fractions % 1.0)
    gaps = np.diff(np.concatenate([f, [f[0] + 1.0]]))
    return bool(np.all(gaps >= min_gap))


def optimize_landmarks(contours: list[np.ndarray], m: int = 20,
                       energy_target: float = 0.95,
                       max_modes: int | None = None
                       ) -> tuple[list[np.ndarray], int, float, np.ndarray]:
    """Greedy landmark placement: shared arc-length fractions start uniform
    and slide per landmark over candidate offsets (+-1, 2, 4 base steps),
    keeping moves that lower (2 - e) * l^2 while preserving cyclic order and
    a minimum spacing. Mode count d starts at 1 and is incremented (with
    re-optimization) until the captured energy exceeds the target.

    Returns (landmarked boundaries, d, energy, fractions).
    """
    if m < 4:
        raise ValueError("need at least 4 landmarks")
    N = len(contours)
    if max_modes is None:
        max_modes = N - 1
    tables = [_ArcTable(c) for c in contours]
    base_step = 1.0 / (8 * m)
    min_gap = 1.0 / (2 * m)
    fractions = np.arange(m) / m

    d = 1
    while True:
        cost, energy, _ = placement_cost(tables, fractions, d)
        improved = True
        while improved:
            improved = False
            for i in range(m):
                for mult in (4.0, 2.0, 1.0):
                    for sign in (1.0, -1.0):
                        trial = fractions.copy()
                        trial[i] = (trial[i] + sign * mult * base_step) % 1.0
                        if not _gaps_ok(trial, min_gap):
                            continue
                        c2, e2, _ = placement_cost(tables, trial, d)
                        if c2 < cost - 1e-15:
                            fractions, cost, energy = trial, c2, e2
                            improved = True
        if energy > energy_target:
            return _landmarks_at(tables, fractions), d, energy, fractions
        d += 1
        if d > max_modes:
            raise DegenerateShapeError(
                f"energy target {energy_target} unreachable with {max_modes} "
                f"modes (best {energy:.4f})")


# ---------------------------------------------------------------------------
# regression from object features to mode coefficients
# ---------------------------------------------------------------------------

def _quad_features(dx: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
    """Design rows for the quadratic form q^T W q with q = [dx, dpsi, 1]:
    [dx^2, dx*dpsi, dpsi^2, dx, dpsi, 1]."""
    dx = np.asarray(dx, dtype=float)
    dpsi = np.asarray(dpsi, dtype=float)
    return np.column_stack([dx * dx, dx * dpsi, dpsi * dpsi, dx, dpsi,
                            np.ones_like(dx)])


def _weights_to_matrix(w: np.ndarray) -> np.ndarray:
    W = np.zeros((3, 3))
    W[0, 0], W[0, 1], W[1, 1], W[0, 2], W[1, 2], W[2, 2] = w
    return W


@dataclass
class RegressionModel:
    """Per-mode upper-triangular quadratic weights b_i = q^T W_i q and the
    training feature ranges used to flag extrapolation."""

    W: np.ndarray            # (d, 3, 3), upper triangular
    r_squared: np.ndarray    # (d,)
    training_bounds: dict    # {"dx_obj": [lo, hi], "dpsi_obj": [lo, hi]}

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def W1(self) -> np.ndarray:
        return self.W[0]

    @property
    def W2(self) -> np.ndarray:
        return self.W[1]

    def in_bounds(self, obj: ObjectFeatures) -> bool:
        lo_x, hi_x = self.training_bounds["dx_obj"]
        lo_p, hi_p = self.training_bounds["dpsi_obj"]
        return lo_x <= obj.dx_obj <= hi_x and lo_p <= obj.dpsi_obj <= hi_p


def fit_regression(B: np.ndarray, features: list[ObjectFeatures]) -> RegressionModel:
    """Least-squares quadratic fit of each deformation mode (columns of the
    (N, d) matrix B) on the object features."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != len(features):
        raise ValueError("one feature row per boundary required")
    if len(features) < 6:
        raise ValueError("need at least 6 poses for a 2-variable quadratic")
    dx = np.array([f.dx_obj for f in features])
    dpsi = np.array([f.dpsi_obj for f in features])
    Phi = _quad_features(dx, dpsi)
    if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
        raise RegressionRankError(
            "object poses do not span the quadratic feature space")
    d = B.shape[1]
    W = np.empty((d, 3, 3))
    r2 = np.empty(d)
    for k in range(d):
        w, *_ = np.linalg.lstsq(Phi, B[:, k], rcond=None)
        W[k] = _weights_to_matrix(w)
        resid = B[:, k] - Phi @ w
        ss_tot = float(np.sum((B[:, k] - B[:, k].mean()) ** 2))
        r2[k] = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    bounds = {"dx_obj": [float(dx.min()), float(dx.max())],
              "dpsi_obj": [float(dpsi.min()), float(dpsi.max())]}
    return RegressionModel(W=W, r_squared=r2, training_bounds=bounds)


def deformation_for(reg: RegressionModel, obj: ObjectFeatures,
                    warn_extrapolation: bool = True) -> np.ndarray:
    """Mode coefficients for the given object features; features outside the
    training range are allowed but raise a warning."""
    if warn_extrapolation and not reg.in_bounds(obj):
        warnings.warn("object features outside the training range; "
                      "deformation is extrapolated")
    q = np.array([obj.dx_obj, obj.dpsi_obj, 1.0])
    return np.array([q @ reg.W[k] @ q for k in range(reg.d)])


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------

GSM_MODES = 2


@dataclass
class GSMModel:
    """Generalized success model: mean boundary, two deformation modes, and
    the regression mapping object features to mode coefficients."""

    pdm: PDM
    regression: RegressionModel
    grasp_type: str = "side"
    version: int = MODEL_FORMAT_VERSION
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pdm.d != GSM_MODES:
            raise ValueError(f"model requires exactly {GSM_MODES} modes")
        if self.grasp_type not in ("side", "top"):
            raise ValueError("grasp_type must be 'side' or 'top'")

    @property
    def training_bounds(self) -> dict:
        return self.regression.training_bounds

    def boundary_for(self, obj: ObjectFeatures, warn_extrapolation: bool = True) -> Boundary:
        b = deformation_for(self.regression, obj, warn_extrapolation)
        return Boundary(self.pdm.reconstruct(b))

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "m": self.pdm.m,
            "d": self.pdm.d,
            "grasp_type": self.grasp_type,
            "mean": self.pdm.mean.tolist(),
            "modes": self.pdm.modes.tolist(),
            "eigenvalues": self.pdm.eigenvalues.tolist(),
            "energy": self.pdm.energy,
            "W1": self.regression.W1.tolist(),
            "W2": self.regression.W2.tolist(),
            "r_squared": self.regression.r_squared.tolist(),
            "training_bounds": self.regression.training_bounds,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GSMModel":
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        pdm = PDM(mean=np.array(d["mean"]), modes=np.array(d["modes"]),
                  eigenvalues=np.array(d["eigenvalues"]), energy=float(d["energy"]))
        reg = RegressionModel(W=np.stack([np.array(d["W1"]), np.array(d["W2"])]),
                              r_squared=np.array(d["r_squared"]),
                              training_bounds=d["training_bounds"])
        return cls(pdm=pdm, regression=reg, grasp_type=d["grasp_type"],
                   version=d["version"], extras=d.get("extras", {}))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "GSMModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def predict_success(gsm: GSMModel, robot: RobotOffset, obj: ObjectFeatures) -> bool:
    """True iff the robot offset lies inside the boundary predicted for the
    object features (even-odd polygon test)."""
    boundary = gsm.boundary_for(obj, warn_extrapolation=False)
    return bool(boundary.contains(np.array([[robot.dx_rob, robot.dy_rob]]))[0])


def train_gsm(svms: dict[ObjectFeatures, SVMModel], extraction_grid: GridSpec,
              n_landmarks: int = 20, energy_target: float = 0.95,
              optimize_placement: bool = True, grasp_type: str = "side") -> GSMModel:
    """Build the generalized model from per-pose classifiers: extract each
    decision boundary, place shared landmarks, fit the two-mode distribution
    model, and regress the mode coefficients on object features.

    Raises if two modes cannot capture the target energy fraction.
    """
    feats = list(svms.keys())
    contours = [extract_contour(svms[f], extraction_grid) for f in feats]
    if optimize_placement:
        lms, _, _, fractions = optimize_landmarks(contours, n_landmarks,
                                                  energy_target)
    else:
        fractions = np.arange(n_landmarks) / n_landmarks
        lms = _landmarks_at(contours, fractions)
    H = assemble_H(lms, feats)
    pdm = fit_pdm(H, GSM_MODES)
    if pdm.energy < energy_target:
        raise DegenerateShapeError(
            f"two modes capture only {pdm.energy:.4f} of the deformation "
            f"energy (target {energy_target})")
    B = np.vstack([pdm.project(lm) for lm in lms])  # (N, d)
    reg = fit_regression(B, feats)
    return GSMModel(pdm=pdm, regression=reg, grasp_type=grasp_type,
                    extras={"landmark_fractions": fractions.tolist()})
