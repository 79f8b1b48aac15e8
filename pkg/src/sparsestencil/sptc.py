"""Software model of sparse tensor core multiply semantics.

``sparse_mma`` reproduces the select-then-MAC behavior bit for bit at the
level of float64 arithmetic: 2-bit metadata picks two of every four rows of
the dense operand before the multiply-accumulate. The warp-lane fragment
arithmetic models how one warp addresses the dense operand, including the
adjusted offsets that fold the input row swap into address calculation.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass

import numpy as np

from .transform import Parity, input_row_permutation

WARP_LANES = 32
FRAGMENT_ELEMENTS = 4  # dense-operand elements managed per thread


@dataclass(frozen=True)
class MmaShape:
    """Instruction tile dimensions, e.g. 16x8x16 for mma.sp.m16n8k16."""

    m: int = 16
    n: int = 8
    k: int = 16

    def __post_init__(self) -> None:
        if self.k % 4 != 0:
            raise ValueError(f"K dimension must be divisible by 4, got {self.k}")
        if self.m < 1 or self.n < 1:
            raise ValueError("MMA dimensions must be positive")


MMA_M16N8K16 = MmaShape(16, 8, 16)


def mac_count(m: int, n: int, k: int) -> int:
    """Multiply-accumulates issued by one sparse MMA: half the dense M*N*K."""
    if k % 2 != 0:
        raise ValueError(f"K must be even, got {k}")
    return m * n * (k // 2)


def sparse_mma(values, metadata, dense, acc=None) -> np.ndarray:
    """Metadata-driven selection followed by multiply-accumulate.

    out[m, n] = acc[m, n] + sum over segments s and slots t of
    values[m, 2s+t] * dense[4s + metadata[m, s, t], n].

    Accumulation is segment-major (s ascending, both slots of a segment
    added together), which fixes the floating-point result exactly.
    """
    values = np.asarray(values)
    dense = np.asarray(dense)
    meta = np.asarray(metadata)
    if values.ndim != 2 or dense.ndim != 2:
        raise ValueError("values and dense operands must be 2D")
    m_dim, k_half = values.shape
    k_dim, n_dim = dense.shape
    if k_dim % 4 != 0:
        raise ValueError(f"dense operand row count {k_dim} not divisible by 4")
    segs = k_dim // 4
    if k_half != 2 * segs:
        raise ValueError(
            f"values must have K/2 = {2 * segs} columns for K = {k_dim}, got {k_half}"
        )
    if meta.shape != (m_dim, segs, 2):
        raise ValueError(
            f"metadata must have shape ({m_dim}, {segs}, 2), got {meta.shape}"
        )
    if meta.min(initial=0) < 0 or meta.max(initial=0) > 3:
        raise ValueError("metadata positions must lie in {0,1,2,3}")
    if np.any(meta[..., 0] >= meta[..., 1]):
        raise ValueError("metadata position pairs must be strictly ascending")

    dtype = np.result_type(values.dtype, dense.dtype)
    if acc is None:
        out = np.zeros((m_dim, n_dim), dtype=dtype)
    else:
        acc = np.asarray(acc)
        if acc.shape != (m_dim, n_dim):
            raise ValueError(f"accumulator shape {acc.shape} != ({m_dim}, {n_dim})")
        out = acc.astype(dtype, copy=True)

    meta = meta.astype(np.int64)
    for s in range(segs):
        rows0 = 4 * s + meta[:, s, 0]
        rows1 = 4 * s + meta[:, s, 1]
        out += values[:, 2 * s, None] * dense[rows0] + values[:, 2 * s + 1, None] * dense[rows1]
    return out


# ---------------------------------------------------------------------------
# Warp-lane fragment addressing for the dense (right-hand) operand


def offset_row(lane: int, i: int) -> int:
    """Base thread-to-row mapping for the i-th element of a lane's fragment."""
    if not 0 <= lane < WARP_LANES:
        raise ValueError(f"lane must be in [0, {WARP_LANES}), got {lane}")
    if not 0 <= i < FRAGMENT_ELEMENTS:
        raise ValueError(f"element index must be in [0, 4), got {i}")
    return 2 * (lane % 4) + 8 * (i // 2) + (i % 2)


def lane_column(lane: int) -> int:
    """Fragment column owned by a lane (8-lane column groups)."""
    if not 0 <= lane < WARP_LANES:
        raise ValueError(f"lane must be in [0, {WARP_LANES}), got {lane}")
    return lane // 4


@functools.lru_cache(maxsize=None)
def _cached_mapping(L: int, parity: Parity) -> np.ndarray:
    return input_row_permutation(L, parity).mapping


def adjusted_offset(
    lane: int,
    i: int,
    k: int,
    L: int,
    parity: Parity = Parity.EVEN,
    mma: MmaShape = MMA_M16N8K16,
) -> int:
    """Row offset with the input row swap folded into address arithmetic.

    Rows are addressed within the 2L-row operand (invocation k starts at
    slab base k * K_mma, wrapped into range), then the row-swap involution
    is applied. For L = K_mma = 16 and even parity this is exactly the
    base offset plus 16 * (-1)^k for even i and no change for odd i.
    """
    if k < 0:
        raise ValueError(f"invocation index must be >= 0, got {k}")
    q = (k * mma.k + offset_row(lane, i)) % (2 * L)
    row = int(_cached_mapping(L, Parity(parity))[q])
    if not 0 <= row < 2 * L:
        raise ValueError(f"adjusted row {row} outside [0, {2 * L})")
    return row


def base_offset(lane: int, i: int, k: int, L: int, mma: MmaShape = MMA_M16N8K16) -> int:
    """Unswapped row offset: slab base plus the base mapping, wrapped into 2L."""
    if k < 0:
        raise ValueError(f"invocation index must be >= 0, got {k}")
    return (k * mma.k + offset_row(lane, i)) % (2 * L)


def load_fragment(
    tile: np.ndarray,
    lane: int,
    k: int,
    use_swap: bool,
    parity: Parity = Parity.EVEN,
    mma: MmaShape = MMA_M16N8K16,
) -> np.ndarray:
    """Fetch one lane's 4 dense-operand elements from a 2L-row tile.

    With use_swap the adjusted offsets read unpermuted data as if the row
    swap had been applied; without it the base offsets expect data already
    permuted. Either way every lane fetches exactly 4 elements.
    """
    tile = np.asarray(tile)
    if tile.ndim != 2 or tile.shape[0] % 2 != 0:
        raise ValueError("tile must be 2D with an even row count (2L rows)")
    L = tile.shape[0] // 2
    col = lane_column(lane)
    if col >= tile.shape[1]:
        raise ValueError(f"tile needs at least {col + 1} columns for lane {lane}")
    out = np.empty(FRAGMENT_ELEMENTS, dtype=tile.dtype)
    for i in range(FRAGMENT_ELEMENTS):
        if use_swap:
            row = adjusted_offset(lane, i, k, L, parity, mma)
        else:
            row = base_offset(lane, i, k, L, mma)
        out[i] = tile[row, col]
    return out


def fragment_map(
    L: int,
    k: int,
    use_swap: bool,
    parity: Parity = Parity.EVEN,
    mma: MmaShape = MMA_M16N8K16,
) -> dict[int, list[tuple[int, int]]]:
    """Debug map: lane -> [(row, column) x 4] for one invocation."""
    out: dict[int, list[tuple[int, int]]] = {}
    for lane in range(WARP_LANES):
        cells = []
        for i in range(FRAGMENT_ELEMENTS):
            if use_swap:
                row = adjusted_offset(lane, i, k, L, parity, mma)
            else:
                row = base_offset(lane, i, k, L, mma)
            cells.append((row, lane_column(lane)))
        out[lane] = cells
    return out


def fragment_map_json(L: int, k: int, use_swap: bool, parity: Parity = Parity.EVEN) -> str:
    mapping = fragment_map(L, k, use_swap, parity)
    return json.dumps({str(lane): cells for lane, cells in mapping.items()})
