"""Discrete probability / cost grids over candidate base positions, with the
text and graymap serialization formats.

Cell (i, j) has center (origin_x + i*cell_size, origin_y + j*cell_size);
i runs along x, j along y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    origin_x: float
    origin_y: float
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid must have at least one cell")

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin_x + i * self.cell_size,
                self.origin_y + j * self.cell_size)

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        """Indices of the cell whose center is nearest to (x, y)."""
        i = int(np.clip(round((x - self.origin_x) / self.cell_size), 0, self.nx - 1))
        j = int(np.clip(round((y - self.origin_y) / self.cell_size), 0, self.ny - 1))
        return i, j

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin_x + self.cell_size * np.arange(self.nx)
        ys = self.origin_y + self.cell_size * np.arange(self.ny)
        return xs, ys

    def center_points(self) -> np.ndarray:
        """All cell centers as an (nx*ny, 2) array, i-major."""
        xs, ys = self.centers()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    @classmethod
    def covering(cls, x_min, x_max, y_min, y_max, cell_size) -> "GridSpec":
        nx = int(np.ceil((x_max - x_min) / cell_size)) + 1
        ny = int(np.ceil((y_max - y_min) / cell_size)) + 1
        return cls(x_min, y_min, cell_size, nx, ny)


@dataclass
class ARPlaceGrid:
    """Per-cell probability that the manipulation action succeeds."""

    spec: GridSpec
    probs: np.ndarray
    frame: str = "gsm"  # "gsm" (object-relative) or "world"

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (self.spec.nx, self.spec.ny):
            raise ValueError("probs shape must be (nx, ny)")
        if np.any(self.probs < 0.0) or np.any(self.probs > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")

    def same_geometry(self, other: "ARPlaceGrid") -> bool:
        return self.spec == other.spec and self.frame == other.frame


@dataclass
class CostGrid:
    """Expected task time per candidate cell, in seconds."""

    spec: GridSpec
    costs: np.ndarray
    frame: str = "gsm"

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        if self.costs.shape != (self.spec.nx, self.spec.ny):
            raise ValueError("costs shape must be (nx, ny)")
        if np.any(~np.isfinite(self.costs)) or np.any(self.costs < 0.0):
            raise ValueError("costs must be finite and non-negative")


def save_grid_text(grid, path, header_lines: list[str] | None = None):
    """Text format: optional '#' comment lines, a 4-line geometry header
    (origin_x, origin_y, cell_size, nx ny), then nx rows of ny values."""
    values = grid.probs if isinstance(grid, ARPlaceGrid) else grid.costs
    s = grid.spec
    with open(path, "w") as f:
        for line in header_lines or []:
            f.write(f"# {line}\n")
        f.write(f"origin_x {s.origin_x:.17g}\n")
        f.write(f"origin_y {s.origin_y:.17g}\n")
        f.write(f"cell_size {s.cell_size:.17g}\n")
        f.write(f"nx_ny {s.nx} {s.ny}\n")
        for i in range(s.nx):
            f.write(" ".join(f"{v:.17g}" for v in values[i]) + "\n")


def load_grid_text(path, frame: str = "gsm") -> ARPlaceGrid:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if not ln.startswith("#")]
    header = dict()
    for ln in lines[:4]:
        key, _, rest = ln.partition(" ")
        header[key] = rest
    nx, ny = (int(t) for t in header["nx_ny"].split())
    spec = GridSpec(float(header["origin_x"]), float(header["origin_y"]),
                    float(header["cell_size"]), nx, ny)
    values = np.array([[float(v) for v in ln.split()] for ln in lines[4:4 + nx]])
    return ARPlaceGrid(spec=spec, probs=values, frame=frame)


def save_pgm(grid: ARPlaceGrid, path, header_lines: list[str] | None = None):
    """8-bit ASCII portable graymap; pixel value = round(255 * P).
    Image rows are y indices ascending, columns x indices ascending."""
    s = grid.spec
    pix = np.rint(255.0 * grid.probs).astype(int)
    with open(path, "w") as f:
        f.write("P2\n")
        for line in header_lines or []:
            f.write(f"# {line}\n")
        f.write(f"{s.nx} {s.ny}\n255\n")
        for j in range(s.ny):
            f.write(" ".join(str(int(pix[i, j])) for i in range(s.nx)) + "\n")
