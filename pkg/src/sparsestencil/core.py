"""Stencil kernels, grids, and the brute-force reference executor.

``naive_apply`` is the correctness oracle for every transformed execution
path in this package: it applies the stencil definition directly, offset by
offset, with double-buffered Jacobi-style time steps. Boundary cells form a
fixed Dirichlet halo that is read but never written.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

GRID_MAGIC = b"SPGR"
_GRID_HEADER = struct.Struct("<4sIII")


class Shape(str, Enum):
    """Stencil footprint: full square neighborhood or axis-aligned cross."""

    BOX = "box"
    STAR = "star"


@dataclass(frozen=True)
class StencilKernel:
    """A validated stencil kernel.

    ``coeffs`` is indexed by neighbor offset plus ``r``: shape ``(2r+1,)``
    for 1D kernels and ``(2r+1, 2r+1)`` for 2D kernels.
    """

    shape: Shape
    d: int
    r: int
    coeffs: np.ndarray

    @property
    def points(self) -> int:
        return int(self.coeffs.size)

    def row_offsets(self) -> range:
        """Vertical offsets of the kernel rows (just 0 for 1D)."""
        if self.d == 1:
            return range(0, 1)
        return range(-self.r, self.r + 1)

    def row(self, rho: int) -> np.ndarray:
        """The 2r+1 coefficients of the kernel row at vertical offset rho."""
        if self.d == 1:
            if rho != 0:
                raise ValueError("1D kernel has a single row at offset 0")
            return self.coeffs
        if not -self.r <= rho <= self.r:
            raise ValueError(f"row offset {rho} outside [-{self.r}, {self.r}]")
        return self.coeffs[rho + self.r]


def make_kernel(shape, d: int, r: int, coeffs) -> StencilKernel:
    """Validate and build a stencil kernel.

    Rejects wrong coefficient counts, radius < 1, unsupported dimensionality,
    and star kernels with nonzero off-axis entries.
    """
    shape = Shape(shape)
    if d not in (1, 2):
        raise ValueError(f"dimensionality must be 1 or 2, got {d}")
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise ValueError(f"radius must be an integer >= 1, got {r}")
    arr = np.asarray(coeffs, dtype=np.float64)
    span = 2 * r + 1
    expected = span**d
    if arr.size != expected:
        raise ValueError(
            f"kernel needs {expected} coefficients for d={d}, r={r}; got {arr.size}"
        )
    arr = arr.reshape((span,) * d).copy()
    if shape is Shape.STAR and d == 2:
        off_axis = arr.copy()
        off_axis[r, :] = 0.0
        off_axis[:, r] = 0.0
        if np.any(off_axis != 0.0):
            raise ValueError("star kernel has nonzero coefficients off both axes")
    arr.setflags(write=False)
    return StencilKernel(shape=shape, d=d, r=r, coeffs=arr)


@dataclass
class Grid:
    """A stencil grid: interior A x B plus a halo of fixed width on every side.

    ``data`` holds the full (A+2h) x (B+2h) extent; 1D problems use A = 1.
    Halo cells hold Dirichlet boundary values and are never written by a step.
    """

    data: np.ndarray
    halo: int
    step: int = 0

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ValueError("grid storage must be 2D (1D problems use A = 1)")
        if self.halo < 0 or min(self.data.shape) <= 2 * self.halo:
            raise ValueError("grid extent too small for its halo")

    @property
    def A(self) -> int:
        return self.data.shape[0] - 2 * self.halo

    @property
    def B(self) -> int:
        return self.data.shape[1] - 2 * self.halo

    @property
    def interior(self) -> np.ndarray:
        h = self.halo
        return self.data[h : h + self.A, h : h + self.B]

    def copy(self) -> "Grid":
        return Grid(self.data.copy(), self.halo, self.step)

    def astype(self, dtype) -> "Grid":
        return Grid(self.data.astype(dtype), self.halo, self.step)


def grid_from_interior(interior, halo: int, fill: float = 0.0) -> Grid:
    """Embed an interior array in a constant halo."""
    inner = np.asarray(interior, dtype=np.float64)
    if inner.ndim == 1:
        inner = inner[None, :]
    full = np.full(
        (inner.shape[0] + 2 * halo, inner.shape[1] + 2 * halo),
        fill,
        dtype=inner.dtype,
    )
    full[halo : halo + inner.shape[0], halo : halo + inner.shape[1]] = inner
    return Grid(full, halo)


def random_grid(A: int, B: int, halo: int, seed, dtype=np.float64) -> Grid:
    """Seeded random grid; halo cells are random Dirichlet values too."""
    rng = np.random.default_rng(seed)
    full = rng.uniform(-1.0, 1.0, size=(A + 2 * halo, B + 2 * halo))
    return Grid(full.astype(dtype), halo)


def naive_apply(kernel: StencilKernel, grid: Grid, steps: int) -> Grid:
    """Reference executor: direct weighted-neighbor sums, T double-buffered steps.

    Every interior point becomes sum over offsets of coeff * neighbor; offsets
    are visited in row-major kernel order, which fixes the accumulation order.
    """
    if steps < 1:
        raise ValueError(f"step count must be >= 1, got {steps}")
    if grid.halo < kernel.r:
        raise ValueError(
            f"grid halo {grid.halo} too small for stencil radius {kernel.r}"
        )
    h, A, B = grid.halo, grid.A, grid.B
    dtype = grid.data.dtype
    taps = []
    if kernel.d == 1:
        for t, delta in enumerate(range(-kernel.r, kernel.r + 1)):
            taps.append((0, delta, float(kernel.coeffs[t])))
    else:
        for i, rho in enumerate(range(-kernel.r, kernel.r + 1)):
            for j, delta in enumerate(range(-kernel.r, kernel.r + 1)):
                taps.append((rho, delta, float(kernel.coeffs[i, j])))

    cur = grid.data.astype(dtype, copy=True)
    nxt = cur.copy()
    for _ in range(steps):
        acc = np.zeros((A, B), dtype=dtype)
        for rho, delta, w in taps:
            acc += w * cur[h + rho : h + rho + A, h + delta : h + delta + B]
        nxt[h : h + A, h : h + B] = acc
        cur, nxt = nxt, cur
    return Grid(cur, h, grid.step + steps)


# ---------------------------------------------------------------------------
# I/O: flat binary grids, JSON grids, JSON kernels


def save_grid(grid: Grid, path) -> None:
    """Write the SPGR flat binary format (16-byte header + row-major f64)."""
    header = _GRID_HEADER.pack(GRID_MAGIC, grid.A, grid.B, grid.halo)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid.data, dtype="<f8").tobytes())


def load_grid(path) -> Grid:
    raw = Path(path).read_bytes()
    if len(raw) < _GRID_HEADER.size:
        raise ValueError(f"{path}: truncated grid file")
    magic, a, b, halo = _GRID_HEADER.unpack_from(raw)
    if magic != GRID_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {GRID_MAGIC!r}")
    rows, cols = a + 2 * halo, b + 2 * halo
    body = np.frombuffer(raw, dtype="<f8", offset=_GRID_HEADER.size)
    if body.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {body.size}")
    return Grid(body.reshape(rows, cols).astype(np.float64), halo)


def grid_to_dict(grid: Grid) -> dict:
    return {
        "A": grid.A,
        "B": grid.B,
        "halo": grid.halo,
        "data": grid.data.tolist(),
    }


def grid_from_dict(obj: dict) -> Grid:
    data = np.asarray(obj["data"], dtype=np.float64)
    grid = Grid(data, int(obj["halo"]))
    if grid.A != obj["A"] or grid.B != obj["B"]:
        raise ValueError("grid JSON dims inconsistent with data payload")
    return grid


def save_grid_json(grid: Grid, path) -> None:
    Path(path).write_text(json.dumps(grid_to_dict(grid)))


def load_grid_json(path) -> Grid:
    return grid_from_dict(json.loads(Path(path).read_text()))


def kernel_to_dict(kernel: StencilKernel) -> dict:
    return {
        "shape": kernel.shape.value,
        "d": kernel.d,
        "r": kernel.r,
        "coeffs": kernel.coeffs.tolist(),
    }


def kernel_from_dict(obj: dict) -> StencilKernel:
    return make_kernel(obj["shape"], int(obj["d"]), int(obj["r"]), obj["coeffs"])


def save_kernel(kernel: StencilKernel, path) -> None:
    Path(path).write_text(json.dumps(kernel_to_dict(kernel), indent=2))


def load_kernel(path) -> StencilKernel:
    return kernel_from_dict(json.loads(Path(path).read_text()))
