"""Three-level tile planning and packed memory layouts.

Planning covers block tiles (global to shared memory), warp tiles (shared
to registers), and instruction tiles. Packing rearranges the compressed
kernel values and metadata so each thread's elements sit contiguously and
consecutive MMA invocations occupy consecutive buffer ranges; the benefit
is asserted through a countable metric, the number of contiguous runs a
warp's fetch decomposes into.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sptc import FRAGMENT_ELEMENTS, MMA_M16N8K16, WARP_LANES, MmaShape
from .transform import CompressedKernel, band_rows, validate_metadata

METADATA_BITS_PER_PAIR = 4
REGISTER_BITS = 32
SELECTOR_GROUPS = WARP_LANES // 8  # metadata comes from one 8-thread group
PACKED_MAGIC = b"SPPK"
_PACKED_HEADER = struct.Struct("<4sHHII")

KIND_VALUES = 0
KIND_METADATA = 1


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class TilingPlan:
    """Derived quantities for one block/warp/instruction tiling choice."""

    a_block: int
    b_block: int
    a_warp: int
    b_warp: int
    mma: MmaShape
    r: int
    grid_a: int
    grid_b: int
    L: int = field(init=False)
    invocations_k: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "L", band_rows(self.r))
        object.__setattr__(self, "invocations_k", _ceil_div(2 * self.L, self.mma.k))

    @property
    def shared_input_extent(self) -> tuple[int, int]:
        return (self.a_block + 2 * self.r, self.b_block)

    @property
    def shared_input_elements(self) -> int:
        rows, cols = self.shared_input_extent
        return rows * cols

    @property
    def warps_per_block(self) -> int:
        return (self.a_block // self.a_warp) * (self.b_block // self.b_warp)

    @property
    def invocations_per_warp_pass(self) -> int:
        return (
            (self.a_warp // self.mma.m)
            * (self.b_warp // self.mma.n)
            * self.invocations_k
        )

    @property
    def block_tiles(self) -> int:
        return (self.grid_a // self.a_block) * (self.grid_b // self.b_block)

    @property
    def invocations_per_block_pass(self) -> int:
        return self.warps_per_block * self.invocations_per_warp_pass

    @property
    def kernel_in_registers(self) -> bool:
        # The kernel operand is reused by every tile, so it never stages
        # through shared memory.
        return True

    @property
    def fragment_registers_per_thread(self) -> int:
        kernel_regs = (self.mma.m * (self.mma.k // 2) // WARP_LANES) * self.invocations_k
        input_regs = self.mma.k * self.mma.n // WARP_LANES
        acc_regs = (self.mma.m * self.mma.n // WARP_LANES) * (
            (self.a_warp // self.mma.m) * (self.b_warp // self.mma.n)
        )
        return kernel_regs + input_regs + acc_regs

    @property
    def metadata_selectors(self) -> list[int]:
        return [k % SELECTOR_GROUPS for k in range(self.invocations_k)]

    @property
    def metadata_registers_per_thread_packed(self) -> int:
        bits_per_thread = self.mma.m * (self.mma.k // 4) * METADATA_BITS_PER_PAIR // WARP_LANES
        return _ceil_div(self.invocations_k * bits_per_thread, REGISTER_BITS)

    @property
    def metadata_registers_per_thread_unpacked(self) -> int:
        # One dedicated register per invocation when metadata is not shared.
        return self.invocations_k


def plan(
    A: int,
    B: int,
    r: int,
    a_block: int = 64,
    b_block: int = 64,
    a_warp: int = 16,
    b_warp: int = 8,
    mma: MmaShape = MMA_M16N8K16,
) -> TilingPlan:
    """Validate tile dimensions and derive all plan quantities."""
    if r < 1:
        raise ValueError(f"radius must be >= 1, got {r}")
    if a_warp % mma.m != 0:
        raise ValueError(f"warp tile rows {a_warp} not a multiple of M_mma {mma.m}")
    if b_warp % mma.n != 0:
        raise ValueError(f"warp tile cols {b_warp} not a multiple of N_mma {mma.n}")
    if a_block % a_warp != 0:
        raise ValueError(f"block tile rows {a_block} not a multiple of warp rows {a_warp}")
    if b_block % b_warp != 0:
        raise ValueError(f"block tile cols {b_block} not a multiple of warp cols {b_warp}")
    if a_block > A or b_block > B:
        raise ValueError(
            f"block tile {a_block}x{b_block} exceeds problem size {A}x{B}"
        )
    if A % a_block != 0 or B % b_block != 0:
        raise ValueError("problem size must split into whole block tiles")
    return TilingPlan(
        a_block=a_block,
        b_block=b_block,
        a_warp=a_warp,
        b_warp=b_warp,
        mma=mma,
        r=r,
        grid_a=A,
        grid_b=B,
    )


def plan_to_dict(p: TilingPlan) -> dict:
    return {
        "block_tile": [p.a_block, p.b_block],
        "warp_tile": [p.a_warp, p.b_warp],
        "mma": [p.mma.m, p.mma.n, p.mma.k],
        "radius": p.r,
        "L": p.L,
        "grid": [p.grid_a, p.grid_b],
        "shared_input_extent": list(p.shared_input_extent),
        "shared_input_elements": p.shared_input_elements,
        "block_tiles": p.block_tiles,
        "warps_per_block": p.warps_per_block,
        "invocations_k": p.invocations_k,
        "invocations_per_warp_pass": p.invocations_per_warp_pass,
        "invocations_per_block_pass": p.invocations_per_block_pass,
        "kernel_in_registers": p.kernel_in_registers,
        "fragment_registers_per_thread": p.fragment_registers_per_thread,
        "metadata_selectors": p.metadata_selectors,
        "metadata_registers_per_thread_packed": p.metadata_registers_per_thread_packed,
        "metadata_registers_per_thread_unpacked": p.metadata_registers_per_thread_unpacked,
    }


# ---------------------------------------------------------------------------
# Fragment ownership within one mma.sp.m16n8k16 invocation.
#
# The exact micro-order is fixed here and pinned by bijectivity and
# round-trip tests: each lane owns 4 kernel values per invocation and each
# 8-thread group supplies the metadata for one invocation.


def _require_canonical(mma: MmaShape) -> None:
    if (mma.m, mma.n, mma.k) != (16, 8, 16):
        raise ValueError("packed layouts are defined for the 16x8x16 instruction")


def kernel_fragment_slot(lane: int, elem: int) -> tuple[int, int]:
    """(row, local column) of a lane's elem-th kernel value in a 16x8 fragment."""
    if not 0 <= lane < WARP_LANES:
        raise ValueError(f"lane must be in [0, {WARP_LANES}), got {lane}")
    if not 0 <= elem < FRAGMENT_ELEMENTS:
        raise ValueError(f"element index must be in [0, 4), got {elem}")
    return lane // 4 + 8 * (elem // 2), 2 * (lane % 4) + (elem % 2)


def metadata_fragment_slot(thread: int, entry: int) -> tuple[int, int]:
    """(row, segment) of one metadata pair owned by a thread in its 8-group."""
    if not 0 <= thread < 8:
        raise ValueError(f"metadata thread index must be in [0, 8), got {thread}")
    if not 0 <= entry < 8:
        raise ValueError(f"metadata entry index must be in [0, 8), got {entry}")
    return 2 * thread + entry // 4, entry % 4


@dataclass(frozen=True)
class PackedLayout:
    """Bijective index map from (invocation, thread, element) to a flat buffer."""

    kind: int
    L: int
    invocations: int
    slots_per_invocation: int
    mma: MmaShape = MMA_M16N8K16

    @property
    def total_length(self) -> int:
        return self.invocations * self.slots_per_invocation

    @property
    def threads(self) -> int:
        return WARP_LANES if self.kind == KIND_VALUES else 8

    @property
    def elements_per_thread(self) -> int:
        return self.slots_per_invocation // self.threads

    def position(self, thread: int, elem: int, invocation: int) -> int:
        if not 0 <= invocation < self.invocations:
            raise ValueError(f"invocation must be in [0, {self.invocations})")
        if not 0 <= thread < self.threads or not 0 <= elem < self.elements_per_thread:
            raise ValueError("thread or element index out of range")
        return (
            invocation * self.slots_per_invocation
            + thread * self.elements_per_thread
            + elem
        )

    @property
    def selector_table(self) -> list[int]:
        return [k % SELECTOR_GROUPS for k in range(self.invocations)]


def pack_kernel_values(
    compressed: CompressedKernel, mma: MmaShape = MMA_M16N8K16
) -> tuple[PackedLayout, np.ndarray]:
    """Pack compressed kernel values per thread and per invocation.

    Buffer order: invocation blocks are sequential; inside a block each
    lane's 4 elements are contiguous. Fragment slots outside the real
    L x L value matrix (instruction padding) hold zeros.
    """
    _require_canonical(mma)
    L = compressed.L
    invocations = _ceil_div(2 * L, mma.k)
    k_half = mma.k // 2
    layout = PackedLayout(
        kind=KIND_VALUES,
        L=L,
        invocations=invocations,
        slots_per_invocation=WARP_LANES * FRAGMENT_ELEMENTS,
        mma=mma,
    )
    buf = np.zeros(layout.total_length, dtype=np.float64)
    for k in range(invocations):
        for lane in range(WARP_LANES):
            for e in range(FRAGMENT_ELEMENTS):
                row, local = kernel_fragment_slot(lane, e)
                col = k * k_half + local
                if row < L and col < compressed.values.shape[1]:
                    buf[layout.position(lane, e, k)] = compressed.values[row, col]
    return layout, buf


def unpack_kernel_values(layout: PackedLayout, buf: np.ndarray) -> np.ndarray:
    """Recover the L x L value matrix from a packed buffer, bit exact."""
    if layout.kind != KIND_VALUES:
        raise ValueError("layout does not describe kernel values")
    L = layout.L
    k_half = layout.mma.k // 2
    values = np.zeros((L, L), dtype=np.float64)
    for k in range(layout.invocations):
        for lane in range(WARP_LANES):
            for e in range(FRAGMENT_ELEMENTS):
                row, local = kernel_fragment_slot(lane, e)
                col = k * k_half + local
                if row < L and col < L:
                    values[row, col] = buf[layout.position(lane, e, k)]
    return values


def pack_metadata(
    compressed: CompressedKernel, mma: MmaShape = MMA_M16N8K16
) -> tuple[PackedLayout, np.ndarray, list[int]]:
    """Pack metadata pairs per active thread, invocations concatenated.

    Returns the layout, a (total, 2) uint8 pair buffer, and the sparsity
    selector table naming the 8-thread group active per invocation. Padded
    fragment slots hold the canonical empty pair (0, 1).
    """
    _require_canonical(mma)
    L = compressed.L
    invocations = _ceil_div(2 * L, mma.k)
    segs_per_inv = mma.k // 4
    layout = PackedLayout(
        kind=KIND_METADATA,
        L=L,
        invocations=invocations,
        slots_per_invocation=mma.m * segs_per_inv,
        mma=mma,
    )
    buf = np.zeros((layout.total_length, 2), dtype=np.uint8)
    buf[:, 1] = 1
    for k in range(invocations):
        for thread in range(8):
            for entry in range(8):
                row, seg_local = metadata_fragment_slot(thread, entry)
                seg = k * segs_per_inv + seg_local
                if row < L and seg < compressed.metadata.shape[1]:
                    buf[layout.position(thread, entry, k)] = compressed.metadata[row, seg]
    return layout, buf, layout.selector_table


def unpack_metadata(layout: PackedLayout, buf: np.ndarray) -> np.ndarray:
    """Recover the (L, L/2, 2) metadata array from a packed pair buffer."""
    if layout.kind != KIND_METADATA:
        raise ValueError("layout does not describe metadata")
    L = layout.L
    segs_per_inv = layout.mma.k // 4
    segments = L // 2
    meta = np.zeros((L, segments, 2), dtype=np.uint8)
    meta[..., 1] = 1
    for k in range(layout.invocations):
        for thread in range(8):
            for entry in range(8):
                row, seg_local = metadata_fragment_slot(thread, entry)
                seg = k * segs_per_inv + seg_local
                if row < L and seg < segments:
                    meta[row, seg] = buf[layout.position(thread, entry, k)]
    validate_metadata(meta)
    return meta


# ---------------------------------------------------------------------------
# Coalescing metric: contiguous runs in a warp's fetch address stream


def run_count(addresses) -> int:
    """Number of maximal consecutive-ascending runs in an address stream."""
    addrs = list(addresses)
    if not addrs:
        return 0
    runs = 1
    for prev, cur in zip(addrs, addrs[1:]):
        if cur != prev + 1:
            runs += 1
    return runs


def kernel_fetch_addresses(L: int, packed: bool, mma: MmaShape = MMA_M16N8K16) -> list[int]:
    """Warp fetch addresses for the whole kernel operand, in issue order.

    Unpacked addresses index the row-major L x L value matrix (instruction
    padding is skipped, no fetch is issued for it); packed addresses index
    the packed buffer, where every slot exists.
    """
    _require_canonical(mma)
    invocations = _ceil_div(2 * L, mma.k)
    k_half = mma.k // 2
    addrs: list[int] = []
    for k in range(invocations):
        for lane in range(WARP_LANES):
            for e in range(FRAGMENT_ELEMENTS):
                if packed:
                    addrs.append(
                        k * WARP_LANES * FRAGMENT_ELEMENTS + lane * FRAGMENT_ELEMENTS + e
                    )
                    continue
                row, local = kernel_fragment_slot(lane, e)
                col = k * k_half + local
                if row < L and col < L:
                    addrs.append(row * L + col)
    return addrs


def metadata_fetch_addresses(L: int, packed: bool, mma: MmaShape = MMA_M16N8K16) -> list[int]:
    """Fetch addresses (in pair units) for all metadata, in issue order."""
    _require_canonical(mma)
    invocations = _ceil_div(2 * L, mma.k)
    segs_per_inv = mma.k // 4
    segments = L // 2
    addrs: list[int] = []
    for k in range(invocations):
        for thread in range(8):
            for entry in range(8):
                if packed:
                    addrs.append(k * mma.m * segs_per_inv + thread * 8 + entry)
                    continue
                row, seg_local = metadata_fragment_slot(thread, entry)
                seg = k * segs_per_inv + seg_local
                if row < L and seg < segments:
                    addrs.append(row * segments + seg)
    return addrs


# ---------------------------------------------------------------------------
# Packed buffer dump: SPPK binary with a 16-byte header


def save_packed(layout: PackedLayout, buf: np.ndarray, path) -> None:
    header = _PACKED_HEADER.pack(PACKED_MAGIC, layout.kind, layout.L, layout.total_length, 0)
    with open(path, "wb") as fh:
        fh.write(header)
        if layout.kind == KIND_VALUES:
            fh.write(np.ascontiguousarray(buf, dtype="<f8").tobytes())
        else:
            fh.write(np.ascontiguousarray(buf, dtype=np.uint8).tobytes())


def load_packed(path) -> tuple[PackedLayout, np.ndarray]:
    raw = Path(path).read_bytes()
    magic, kind, L, length, _reserved = _PACKED_HEADER.unpack_from(raw)
    if magic != PACKED_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {PACKED_MAGIC!r}")
    mma = MMA_M16N8K16
    invocations = _ceil_div(2 * L, mma.k)
    if kind == KIND_VALUES:
        slots = WARP_LANES * FRAGMENT_ELEMENTS
        buf = np.frombuffer(raw, dtype="<f8", offset=_PACKED_HEADER.size).astype(np.float64)
    elif kind == KIND_METADATA:
        slots = mma.m * (mma.k // 4)
        buf = np.frombuffer(raw, dtype=np.uint8, offset=_PACKED_HEADER.size).copy()
        buf = buf.reshape(-1, 2)
    else:
        raise ValueError(f"{path}: unknown packed-buffer kind {kind}")
    layout = PackedLayout(kind=kind, L=L, invocations=invocations, slots_per_invocation=slots)
    if layout.total_length != length or len(buf) != length:
        raise ValueError(f"{path}: length mismatch in packed buffer")
    return layout, buf
