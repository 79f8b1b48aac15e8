"""Stencil computation as 2:4 structured-sparse matrix multiplication.

The package turns 1D/2D box and star stencils into banded kernel matrices,
converts them to 2:4 structured-sparse form via strided column swapping,
runs them on a software model of sparse tensor core semantics, and checks
the result against a brute-force reference executor. Analytical cost models
reproduce published per-point compute and memory-access numbers.
"""
from .core import (
    Grid,
    Shape,
    StencilKernel,
    grid_from_interior,
    load_grid,
    load_kernel,
    make_kernel,
    naive_apply,
    random_grid,
    save_grid,
    save_kernel,
)
from .costmodel import CostParams, CostTriple, Method, cost, per_point, redundancy_factors
from .pipeline import ExecConfig, ExecStats, execute, transform_stencil, verify
from .sptc import MMA_M16N8K16, MmaShape, load_fragment, mac_count, sparse_mma
from .tiling import TilingPlan, pack_kernel_values, pack_metadata, plan
from .transform import (
    CompressedKernel,
    KernelMatrix,
    Parity,
    RowPermutation,
    build_kernel_matrix,
    check_2to4,
    decode,
    encode,
    input_row_permutation,
    sparsity_ratio,
    sptc_compatible,
    strided_swap,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "Shape",
    "StencilKernel",
    "grid_from_interior",
    "load_grid",
    "load_kernel",
    "make_kernel",
    "naive_apply",
    "random_grid",
    "save_grid",
    "save_kernel",
    "CostParams",
    "CostTriple",
    "Method",
    "cost",
    "per_point",
    "redundancy_factors",
    "ExecConfig",
    "ExecStats",
    "execute",
    "transform_stencil",
    "verify",
    "MMA_M16N8K16",
    "MmaShape",
    "load_fragment",
    "mac_count",
    "sparse_mma",
    "TilingPlan",
    "pack_kernel_values",
    "pack_metadata",
    "plan",
    "CompressedKernel",
    "KernelMatrix",
    "Parity",
    "RowPermutation",
    "build_kernel_matrix",
    "check_2to4",
    "decode",
    "encode",
    "input_row_permutation",
    "sparsity_ratio",
    "sptc_compatible",
    "strided_swap",
    "__version__",
]
