"""Kernel-matrix construction, strided column swapping, and 2:4 encoding.

One stencil kernel row of 2r+1 coefficients becomes a banded L x 2L matrix
with L = 2r+2 (band width 4r+2 plus two zero pad columns). Exchanging one
parity class of columns j with columns j+L turns the band into a 2:4
structured-sparse matrix, which compresses to an L x L value matrix plus
2-bit position metadata. The matching involution on input rows restores the
original product exactly: swapped-K times permuted-X equals K times X.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

import numpy as np

PAD_COLUMNS = 2
COMPRESSED_MAGIC = b"SPCK"
_COMPRESSED_HEADER = struct.Struct("<4sHHB")


class Parity(str, Enum):
    """Which column class the strided swap moves: even- or odd-indexed."""

    EVEN = "even"
    ODD = "odd"

    @property
    def start(self) -> int:
        return 0 if self is Parity.EVEN else 1


def band_rows(r: int) -> int:
    """Kernel-matrix row count L = 2r+2, the smallest L with density <= 1/2."""
    if r < 1:
        raise ValueError(f"radius must be >= 1, got {r}")
    return 2 * r + 2


def sparsity_ratio(r: int, L: int) -> Fraction:
    """Nonzero fraction (2r+1)/(2r+L) of the unpadded banded matrix."""
    if r < 1:
        raise ValueError(f"radius must be >= 1, got {r}")
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    return Fraction(2 * r + 1, 2 * r + L)


def sptc_compatible(r: int, L: int) -> bool:
    """Sparse tensor cores need a nonzero fraction <= 1/2, i.e. L >= 2r+2."""
    return sparsity_ratio(r, L) <= Fraction(1, 2)


@dataclass
class KernelMatrix:
    """Banded (or swapped) kernel matrix of shape L x 2L."""

    values: np.ndarray
    r: int
    swapped: bool = False
    parity: Parity | None = None

    @property
    def L(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class CompressedKernel:
    """2:4 compressed form: kept values plus 2-bit position descriptors.

    ``values`` is L x L (two kept entries per 4-wide segment, original
    order); ``metadata`` is L x (L/2) x 2 with strictly ascending position
    pairs in {0,1,2,3}.
    """

    values: np.ndarray
    metadata: np.ndarray
    r: int
    parity: Parity

    @property
    def L(self) -> int:
        return self.values.shape[0]

    @property
    def segments_per_row(self) -> int:
        return self.metadata.shape[1]


@dataclass(frozen=True)
class RowPermutation:
    """Involution on input rows matching a strided column swap."""

    mapping: np.ndarray
    parity: Parity

    @property
    def size(self) -> int:
        return self.mapping.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Permute rows: result row q is input row mapping[q]."""
        return np.asarray(x)[self.mapping]

    def __call__(self, j: int) -> int:
        return int(self.mapping[j])


def build_kernel_matrix(kernel_row, r: int) -> KernelMatrix:
    """Replicate one kernel row L times along the diagonal, pad to width 2L."""
    L = band_rows(r)
    row = np.asarray(kernel_row, dtype=np.float64).ravel()
    if row.size != 2 * r + 1:
        raise ValueError(f"kernel row needs 2r+1 = {2 * r + 1} entries, got {row.size}")
    values = np.zeros((L, 2 * L), dtype=np.float64)
    for i in range(L):
        values[i, i : i + 2 * r + 1] = row
    return KernelMatrix(values=values, r=r)


def input_row_permutation(L: int, parity: Parity = Parity.EVEN) -> RowPermutation:
    """Involution exchanging rows j and j+L for the parity class j < L."""
    if L % 2 != 0:
        raise ValueError(f"L must be even, got {L}")
    parity = Parity(parity)
    mapping = np.arange(2 * L, dtype=np.int64)
    for j in range(parity.start, L, 2):
        mapping[j], mapping[j + L] = j + L, j
    mapping.setflags(write=False)
    return RowPermutation(mapping=mapping, parity=parity)


def swap_columns(values: np.ndarray, parity: Parity) -> np.ndarray:
    """Exchange parity-class columns j and j+L; self-inverse by construction."""
    values = np.asarray(values)
    L = values.shape[1] // 2
    perm = input_row_permutation(L, parity)
    return values[:, perm.mapping]


def strided_swap(matrix: KernelMatrix, parity: Parity = Parity.EVEN) -> KernelMatrix:
    """Apply the strided column swap to an unswapped kernel matrix."""
    if matrix.swapped:
        raise ValueError("kernel matrix already swapped; the swap is one-shot")
    parity = Parity(parity)
    return KernelMatrix(
        values=swap_columns(matrix.values, parity),
        r=matrix.r,
        swapped=True,
        parity=parity,
    )


@dataclass
class Check24Report:
    valid: bool
    violations: list[tuple[int, int]]


def check_2to4(matrix) -> Check24Report:
    """Report whether every aligned 4-column segment has at most 2 nonzeros."""
    values = matrix.values if isinstance(matrix, KernelMatrix) else np.asarray(matrix)
    if values.ndim != 2:
        raise ValueError("expected a 2D matrix")
    rows, width = values.shape
    if width % 4 != 0:
        raise ValueError(f"width {width} not divisible by 4")
    counts = (values.reshape(rows, width // 4, 4) != 0.0).sum(axis=2)
    bad = np.argwhere(counts > 2)
    violations = [(int(i), int(s)) for i, s in bad]
    return Check24Report(valid=not violations, violations=violations)


def encode_segment(segment) -> tuple[float, float, int, int]:
    """Compress one 4-wide segment to (value0, value1, pos0, pos1).

    Two nonzeros keep both in order; a single nonzero keeps one zero as a
    placeholder (ascending positions, placeholder after the value except at
    position 3, where it must precede); an empty segment encodes as
    (0, 0) at positions (0, 1).
    """
    seg = np.asarray(segment, dtype=np.float64)
    if seg.shape != (4,):
        raise ValueError("segment must have exactly 4 entries")
    nz = np.flatnonzero(seg != 0.0)
    if nz.size > 2:
        raise ValueError(f"segment {seg.tolist()} has {nz.size} nonzeros; 2:4 violated")
    if nz.size == 2:
        p0, p1 = int(nz[0]), int(nz[1])
        return float(seg[p0]), float(seg[p1]), p0, p1
    if nz.size == 1:
        p = int(nz[0])
        if p < 3:
            return float(seg[p]), 0.0, p, p + 1
        return 0.0, float(seg[3]), 2, 3
    return 0.0, 0.0, 0, 1


def encode(matrix: KernelMatrix) -> CompressedKernel:
    """Compress a swapped, 2:4-valid kernel matrix into value+metadata form."""
    if not matrix.swapped or matrix.parity is None:
        raise ValueError("encode expects a swapped kernel matrix")
    L, width = matrix.values.shape
    segs = width // 4
    values = np.zeros((L, 2 * segs), dtype=np.float64)
    metadata = np.zeros((L, segs, 2), dtype=np.uint8)
    for i in range(L):
        for s in range(segs):
            v0, v1, p0, p1 = encode_segment(matrix.values[i, 4 * s : 4 * s + 4])
            values[i, 2 * s] = v0
            values[i, 2 * s + 1] = v1
            metadata[i, s, 0] = p0
            metadata[i, s, 1] = p1
    return CompressedKernel(values=values, metadata=metadata, r=matrix.r, parity=matrix.parity)


def validate_metadata(metadata: np.ndarray) -> None:
    meta = np.asarray(metadata)
    if meta.ndim != 3 or meta.shape[2] != 2:
        raise ValueError("metadata must have shape (rows, segments, 2)")
    if meta.min(initial=0) < 0 or meta.max(initial=0) > 3:
        raise ValueError("metadata positions must lie in {0,1,2,3}")
    if np.any(meta[..., 0] >= meta[..., 1]):
        raise ValueError("metadata position pairs must be strictly ascending")


def decode(compressed: CompressedKernel) -> KernelMatrix:
    """Reconstruct the swapped kernel matrix; exact inverse of encode."""
    validate_metadata(compressed.metadata)
    L = compressed.L
    segs = compressed.segments_per_row
    values = np.zeros((L, 4 * segs), dtype=np.float64)
    rows = np.repeat(np.arange(L), segs * 2)
    seg_base = np.tile(np.repeat(np.arange(segs) * 4, 2), L)
    cols = seg_base + compressed.metadata.reshape(-1)
    values[rows, cols] = compressed.values.reshape(-1)
    return KernelMatrix(values=values, r=compressed.r, swapped=True, parity=compressed.parity)


# ---------------------------------------------------------------------------
# Compressed-kernel I/O: SPCK binary records plus a JSON mirror


def metadata_to_bytes(metadata: np.ndarray) -> bytes:
    """One byte per segment; descriptor 0 in bits 0-1, descriptor 1 in bits 2-3."""
    meta = np.asarray(metadata, dtype=np.uint8)
    packed = (meta[..., 0] | (meta[..., 1] << 2)).astype(np.uint8)
    return packed.tobytes()


def metadata_from_bytes(raw: bytes, L: int, segments: int) -> np.ndarray:
    packed = np.frombuffer(raw, dtype=np.uint8)
    if packed.size != L * segments:
        raise ValueError(f"expected {L * segments} metadata bytes, got {packed.size}")
    packed = packed.reshape(L, segments)
    meta = np.stack([packed & 0b11, (packed >> 2) & 0b11], axis=2).astype(np.uint8)
    validate_metadata(meta)
    return meta


def _parity_code(parity: Parity) -> int:
    return 0 if parity is Parity.EVEN else 1


def _parity_from_code(code: int) -> Parity:
    if code not in (0, 1):
        raise ValueError(f"bad parity code {code}")
    return Parity.EVEN if code == 0 else Parity.ODD


def compressed_record_bytes(compressed: CompressedKernel) -> bytes:
    header = _COMPRESSED_HEADER.pack(
        COMPRESSED_MAGIC, compressed.r, compressed.L, _parity_code(compressed.parity)
    )
    body = np.ascontiguousarray(compressed.values, dtype="<f8").tobytes()
    return header + body + metadata_to_bytes(compressed.metadata)


def _record_from_buffer(raw: bytes, offset: int) -> tuple[CompressedKernel, int]:
    magic, r, L, parity_code = _COMPRESSED_HEADER.unpack_from(raw, offset)
    if magic != COMPRESSED_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {COMPRESSED_MAGIC!r}")
    pos = offset + _COMPRESSED_HEADER.size
    values = np.frombuffer(raw, dtype="<f8", count=L * L, offset=pos).reshape(L, L)
    pos += L * L * 8
    segments = L // 2
    meta = metadata_from_bytes(raw[pos : pos + L * segments], L, segments)
    pos += L * segments
    return (
        CompressedKernel(
            values=values.astype(np.float64),
            metadata=meta,
            r=r,
            parity=_parity_from_code(parity_code),
        ),
        pos,
    )


def save_compressed_set(kernels: list[CompressedKernel], path) -> None:
    """Write one or more SPCK records back to back."""
    with open(path, "wb") as fh:
        for ck in kernels:
            fh.write(compressed_record_bytes(ck))


def load_compressed_set(path) -> list[CompressedKernel]:
    raw = Path(path).read_bytes()
    out: list[CompressedKernel] = []
    offset = 0
    while offset < len(raw):
        ck, offset = _record_from_buffer(raw, offset)
        out.append(ck)
    if not out:
        raise ValueError(f"{path}: no compressed-kernel records found")
    return out


def compressed_to_dict(compressed: CompressedKernel) -> dict:
    return {
        "r": compressed.r,
        "L": compressed.L,
        "parity": compressed.parity.value,
        "values": compressed.values.tolist(),
        "metadata": compressed.metadata.tolist(),
    }


def compressed_from_dict(obj: dict) -> CompressedKernel:
    meta = np.asarray(obj["metadata"], dtype=np.uint8)
    validate_metadata(meta)
    return CompressedKernel(
        values=np.asarray(obj["values"], dtype=np.float64),
        metadata=meta,
        r=int(obj["r"]),
        parity=Parity(obj["parity"]),
    )


def save_compressed_json(kernels: list[CompressedKernel], path) -> None:
    Path(path).write_text(
        json.dumps([compressed_to_dict(ck) for ck in kernels], indent=2)
    )
