"""Success-probability place maps.

A map assigns each candidate robot cell the probability that a grasp from
there succeeds, given a Gaussian belief over the object pose. Maps are built
by Monte-Carlo sampling boundaries from the generalized success model, can be
conditioned on robot position uncertainty, and support merging (joint success
for several objects), unions over table edges, and conversion to a navigation
cost map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import Boundary
from .geometry import ObjectFeatures
from .grids import ARPlaceGrid, CostGrid, GridSpec
from .shapemodel import GSMModel

DEFAULT_CELL_SIZE = 0.025
DEFAULT_N_SAMPLES = 100


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian belief over object displacement (dx_obj, dy_obj, dpsi_obj):
    distance from the table edge, lateral position along it, orientation."""

    mean: tuple[float, float, float]
    cov: tuple  # 3x3, row tuples

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape != (3,) or cov.shape != (3, 3):
            raise ValueError("belief needs a 3-vector mean and 3x3 covariance")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < -1e-12:
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", tuple(float(v) for v in mean))
        object.__setattr__(self, "cov", tuple(tuple(float(v) for v in row) for row in cov))

    @classmethod
    def isotropic(cls, mean, sigma_xy: float, sigma_psi: float) -> "GaussianBelief":
        return cls(tuple(mean), np.diag([sigma_xy ** 2, sigma_xy ** 2, sigma_psi ** 2]))

    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=float)

    def cov_array(self) -> np.ndarray:
        return np.asarray(self.cov, dtype=float)

    def scaled(self, factor: float) -> "GaussianBelief":
        return GaussianBelief(self.mean, self.cov_array() * factor)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """(n, 3) samples; the covariance square root comes from a clipped
        eigendecomposition, so semidefinite beliefs are accepted."""
        cov = self.cov_array()
        evals, evecs = np.linalg.eigh(cov)
        root = evecs * np.sqrt(np.clip(evals, 0.0, None))
        return self.mean_array() + rng.standard_normal((n, 3)) @ root.T


def sample_boundaries(gsm: GSMModel, belief, n_samples: int,
                      rng) -> list[tuple[Boundary, float]]:
    """Draw object poses from the belief and predict one boundary per draw.

    Returns (boundary, y_shift) pairs: the boundary is reconstructed in the
    object-relative frame and the sampled lateral displacement is recorded as
    a rigid translation along the table edge. Any belief object exposing
    ``sample(rng, n) -> (n, 3)`` works; Gaussian is the shipped form.
    Negative edge distances are clamped to zero, and draws are clamped to
    the regression's training bounds — outside them the quadratic deformation
    model extrapolates and the predicted boundary is unreliable.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(rng)
    draws = belief.sample(rng, n_samples)
    dx_lo, dx_hi = gsm.regression.training_bounds["dx_obj"]
    psi_lo, psi_hi = gsm.regression.training_bounds["dpsi_obj"]
    out = []
    for dx, dy, dpsi in draws:
        obj = ObjectFeatures(dx_obj=max(min(float(dx), dx_hi), 0.0),
                             dpsi_obj=min(max(float(dpsi), psi_lo), psi_hi))
        out.append((gsm.boundary_for(obj, warn_extrapolation=False), float(dy)))
    return out


def compute_map(gsm: GSMModel, belief, grid_spec: GridSpec, n_samples: int = DEFAULT_N_SAMPLES,
                rng=0, frame: str = "gsm") -> ARPlaceGrid:
    """Monte-Carlo success map: each cell holds the fraction of sampled,
    shifted boundaries that contain its center."""
    pairs = sample_boundaries(gsm, belief, n_samples, rng)
    pts = grid_spec.center_points()
    counts = np.zeros(len(pts), dtype=np.int64)
    for boundary, y_shift in pairs:
        counts += boundary.contains(pts - np.array([0.0, y_shift]))
    probs = (counts / n_samples).reshape(grid_spec.nx, grid_spec.ny)
    return ARPlaceGrid(spec=grid_spec, probs=probs, frame=frame)


def _as_cov2(robot_cov) -> np.ndarray:
    if np.isscalar(robot_cov):
        s = float(robot_cov)
        return np.diag([s * s, s * s])
    cov = np.asarray(robot_cov, dtype=float)
    if cov.shape != (2, 2):
        raise ValueError("robot covariance must be scalar sigma or 2x2")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    if np.min(np.linalg.eigvalsh(cov)) < -1e-12:
        raise ValueError("covariance must be positive semidefinite")
    return cov


def apply_robot_uncertainty(grid: ARPlaceGrid, robot_cov,
                            truncate: float = 6.0) -> ARPlaceGrid:
    """Condition the map on Gaussian robot position noise.

    Each cell becomes the kernel-weighted average of its neighbourhood, with
    the discrete kernel renormalized over the grid:
    out_k = p_k + sum_j w_jk (p_j - p_k) / sum_j w_jk. A zero covariance is
    the identity and an exactly uniform map is preserved exactly. Accepts a
    scalar sigma (isotropic) or a full 2x2 covariance.
    """
    cov = _as_cov2(robot_cov)
    evals = np.linalg.eigvalsh(cov)
    if evals[-1] < 1e-16:
        return ARPlaceGrid(spec=grid.spec, probs=grid.probs.copy(), frame=grid.frame)
    # floor tiny eigenvalues so degenerate (line-mass) covariances invert
    cov = cov + np.eye(2) * max(1e-12 * evals[-1], 1e-18)
    prec = np.linalg.inv(cov)
    h = grid.spec.cell_size
    r = int(np.ceil(truncate * np.sqrt(evals[-1]) / h))
    p = grid.probs
    num = np.zeros_like(p)
    den = np.zeros_like(p)
    nx, ny = p.shape
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            off = np.array([di * h, dj * h])
            w = float(np.exp(-0.5 * off @ prec @ off))
            if w < 1e-13:
                continue
            src_i = slice(max(di, 0), nx + min(di, 0))
            dst_i = slice(max(-di, 0), nx + min(-di, 0))
            src_j = slice(max(dj, 0), ny + min(dj, 0))
            dst_j = slice(max(-dj, 0), ny + min(-dj, 0))
            num[dst_i, dst_j] += w * (p[src_i, src_j] - p[dst_i, dst_j])
            den[dst_i, dst_j] += w
    out = p + num / den
    return ARPlaceGrid(spec=grid.spec, probs=np.clip(out, 0.0, 1.0), frame=grid.frame)


# ---------------------------------------------------------------------------
# map algebra
# ---------------------------------------------------------------------------

def _check_compatible(a: ARPlaceGrid, b: ARPlaceGrid):
    if not a.same_geometry(b):
        raise ValueError("maps must share grid geometry")
    if a.frame != b.frame:
        raise ValueError("maps must share the reference frame")


def merge(a: ARPlaceGrid, b: ARPlaceGrid) -> ARPlaceGrid:
    """Joint success map: cellwise product (independent grasps)."""
    _check_compatible(a, b)
    return ARPlaceGrid(spec=a.spec, probs=a.probs * b.probs, frame=a.frame)


def resample_to(grid: ARPlaceGrid, spec: GridSpec, fill: float = 0.0) -> ARPlaceGrid:
    """Nearest-cell resampling onto another grid; cells outside the source
    extent take the fill value. Used to align object-local maps on a shared
    world-frame grid before merging."""
    xs, ys = spec.centers()
    si = np.round((xs - grid.spec.origin_x) / grid.spec.cell_size).astype(int)
    sj = np.round((ys - grid.spec.origin_y) / grid.spec.cell_size).astype(int)
    probs = np.full((spec.nx, spec.ny), float(fill))
    ok_i = (si >= 0) & (si < grid.spec.nx)
    ok_j = (sj >= 0) & (sj < grid.spec.ny)
    probs[np.ix_(ok_i, ok_j)] = grid.probs[np.ix_(si[ok_i], sj[ok_j])]
    return ARPlaceGrid(spec=spec, probs=probs, frame=grid.frame)


def union_edges(maps: list[ARPlaceGrid]) -> ARPlaceGrid:
    """Either-edge map: cellwise maximum over maps sharing a world frame.
    Extents may differ; the result covers their union (missing cells count
    as probability 0)."""
    if not maps:
        raise ValueError("need at least one map")
    cell = maps[0].spec.cell_size
    frame = maps[0].frame
    for m in maps:
        if abs(m.spec.cell_size - cell) > 1e-12:
            raise ValueError("maps must share the cell size")
        if m.frame != frame:
            raise ValueError("maps must share the reference frame")
        rx = (m.spec.origin_x - maps[0].spec.origin_x) / cell
        ry = (m.spec.origin_y - maps[0].spec.origin_y) / cell
        if abs(rx - round(rx)) > 1e-9 or abs(ry - round(ry)) > 1e-9:
            raise ValueError("map origins must align on a common lattice")
    x0 = min(m.spec.origin_x for m in maps)
    y0 = min(m.spec.origin_y for m in maps)
    nx = max(int(round((m.spec.origin_x - x0) / cell)) + m.spec.nx for m in maps)
    ny = max(int(round((m.spec.origin_y - y0) / cell)) + m.spec.ny for m in maps)
    spec = GridSpec(x0, y0, cell, nx, ny)
    probs = np.zeros((nx, ny))
    for m in maps:
        i0 = int(round((m.spec.origin_x - x0) / cell))
        j0 = int(round((m.spec.origin_y - y0) / cell))
        region = probs[i0:i0 + m.spec.nx, j0:j0 + m.spec.ny]
        np.maximum(region, m.probs, out=region)
    return ARPlaceGrid(spec=spec, probs=probs, frame=frame)


def cost_map(grid: ARPlaceGrid, robot_xy: tuple[float, float],
             retry_penalty_s: float = 5.0, nav_speed_mps: float = 0.3) -> CostGrid:
    """Expected-cost map: (1 - P) * retry_penalty + distance / speed."""
    if nav_speed_mps <= 0:
        raise ValueError("speed must be positive")
    pts = grid.spec.center_points()
    d = np.linalg.norm(pts - np.asarray(robot_xy, dtype=float), axis=1)
    costs = (1.0 - grid.probs) * retry_penalty_s + \
        d.reshape(grid.probs.shape) / nav_speed_mps
    return CostGrid(spec=grid.spec, costs=costs, frame=grid.frame)


def best_cell(grid: ARPlaceGrid, smooth_radius: float = 0.0) -> tuple[tuple[int, int], float]:
    """Cell of maximal probability and its value; ties break on the smallest
    (row, col) index.

    With smooth_radius > 0 the argmax runs on a locally averaged copy, which
    prefers the interior of plateaus over their corners; the returned
    probability is still read from the unsmoothed map.
    """
    probs = grid.probs
    if smooth_radius > 0:
        probs = apply_robot_uncertainty(grid, smooth_radius).probs
    flat = int(np.argmax(probs))
    ij = (flat // grid.spec.ny, flat % grid.spec.ny)
    return ij, float(grid.probs[ij])


def best_cell_center(grid: ARPlaceGrid, smooth_radius: float = 0.0) -> tuple[float, float]:
    (i, j), _ = best_cell(grid, smooth_radius)
    return grid.spec.cell_center(i, j)
