"""Command-line interface.

Subcommands: transform, verify, analyze, plan, run, and make-grid (a
convenience generator for binary grid files). Exit codes: 0 on success,
1 on verification failure, 2 on configuration or usage errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import costmodel, pipeline, tiling
from .core import load_grid, load_kernel, random_grid, save_grid
from .costmodel import CostParams, Method
from .pipeline import ExecConfig
from .sptc import MmaShape
from .transform import Parity, save_compressed_json, save_compressed_set

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2


def _dump(obj, args) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if getattr(args, "out_json", None):
        with open(args.out_json, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _parse_pair(text: str, name: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"{name} must look like AxB, got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_mma(text: str) -> MmaShape:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ValueError(f"--mma must look like MxNxK, got {text!r}")
    return MmaShape(int(parts[0]), int(parts[1]), int(parts[2]))


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _cmd_transform(args) -> int:
    kernel = load_kernel(args.kernel)
    ts = pipeline.transform_stencil(kernel, Parity(args.parity))
    kernels = [ck for _rho, ck in ts.rows]
    save_compressed_set(kernels, args.out)
    if args.json:
        save_compressed_json(kernels, args.json)
    summary = {
        "kernel_rows": len(kernels),
        "L": ts.L,
        "parity": ts.parity.value,
        "out": str(args.out),
        "permutation": ts.permutation.mapping.tolist(),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_verify(args) -> int:
    kernel = load_kernel(args.kernel)
    cfg = ExecConfig(
        parity=Parity(args.parity),
        precision=args.precision,
        packing=not args.no_packing,
    )
    report = pipeline.verify(
        kernel,
        sizes=_int_list(args.sizes),
        seed=args.seed,
        steps=args.steps,
        cfg=cfg,
        tolerance=args.tolerance,
    )
    if args.json:
        print(pipeline.report_json(report))
    else:
        for case in report["cases"]:
            status = "pass" if case["pass"] else "FAIL"
            detail = case.get("max_rel_error", case.get("error"))
            print(f"{status} size={case['size']} {detail}")
        print("all_pass:", report["all_pass"])
    return EXIT_OK if report["all_pass"] else EXIT_VERIFY_FAILED


def _analyze_rows(r: int, c: int, l_tc: int) -> list[dict]:
    table = costmodel.quantitative_table(r, c, l_tc)
    factors = costmodel.redundancy_factors(r, c, l_tc)
    rows = []
    for method in Method:
        entry = table["per_point"][method.value]
        if method is Method.SPTC:
            compute = entry["compute_ceil"]["value"]
            extra = {
                "compute_exact": entry["compute_exact"]["value"],
                "compute_mode_discrepancy": entry["compute_mode_discrepancy"],
            }
        else:
            compute = entry["compute"]["value"]
            extra = {}
        row = {
            "method": method.value,
            "r": r,
            "c": c,
            "compute": compute,
            "input_access": entry["input_access"]["value"],
            "param_access": entry["param_access"]["value"],
        }
        if method in factors:
            ratio = factors[method]
            row["compute_vs_lb"] = float(ratio.compute)
            row["input_vs_lb"] = float(ratio.input_access)
            row["param_vs_lb"] = float(ratio.param_access)
        row.update(extra)
        rows.append(row)
    return rows


def _cmd_analyze(args) -> int:
    r_values = _int_list(args.r) if args.sweep else [int(args.r)]
    c_values = _int_list(args.c) if args.sweep else [int(args.c)]
    methods = (
        [m.value for m in Method]
        if args.methods == "all"
        else [Method(m).value for m in args.methods.split(",")]
    )
    rows = []
    for r in r_values:
        for c in c_values:
            rows.extend(
                row for row in _analyze_rows(r, c, args.l_tc) if row["method"] in methods
            )
    if args.format == "json":
        print(json.dumps(rows, indent=2, sort_keys=True))
        return EXIT_OK
    fieldnames = [
        "method",
        "r",
        "c",
        "compute",
        "compute_exact",
        "compute_mode_discrepancy",
        "input_access",
        "param_access",
        "compute_vs_lb",
        "input_vs_lb",
        "param_vs_lb",
    ]
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=fieldnames, restval="")
    writer.writeheader()
    writer.writerows(rows)
    sys.stdout.write(out.getvalue())
    return EXIT_OK


def _cmd_plan(args) -> int:
    a_block, b_block = _parse_pair(args.block, "--block")
    a_warp, b_warp = _parse_pair(args.warp, "--warp")
    if args.grid:
        grid_a, grid_b = _parse_pair(args.grid, "--grid")
    else:
        grid_a, grid_b = a_block, b_block
    tp = tiling.plan(
        grid_a, grid_b, args.r, a_block, b_block, a_warp, b_warp, _parse_mma(args.mma)
    )
    _dump(tiling.plan_to_dict(tp), args)
    return EXIT_OK


def _cmd_run(args) -> int:
    kernel = load_kernel(args.kernel)
    grid = load_grid(args.grid)
    cfg = ExecConfig(
        parity=Parity(args.parity),
        precision=args.precision,
        packing=not args.no_packing,
    )
    out, stats = pipeline.execute(kernel, grid, args.steps, cfg)
    if args.out:
        save_grid(out, args.out)
    payload: dict = {"stats": stats.as_dict()}
    if args.stats:
        params = CostParams(a=grid.A, b=grid.B, r=kernel.r, c=args.c)
        payload["model_cross_check"] = costmodel.measured_vs_model(stats, params)
    checksum = float(np.sum(out.interior, dtype=np.float64))
    payload["output_checksum"] = checksum
    _dump(payload, args)
    return EXIT_OK


def _cmd_make_grid(args) -> int:
    a, b = _parse_pair(args.size, "--size")
    grid = random_grid(a, b, args.halo, seed=args.seed)
    save_grid(grid, args.out)
    print(json.dumps({"size": [a, b], "halo": args.halo, "out": str(args.out)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsestencil",
        description="Stencil computation as 2:4 structured-sparse matrix multiplication.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="compress a stencil kernel row by row")
    p.add_argument("--kernel", required=True, help="kernel JSON file")
    p.add_argument("--parity", choices=["even", "odd"], default="even")
    p.add_argument("--out", required=True, help="output .spck file")
    p.add_argument("--json", help="also write a JSON mirror to this path")
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("verify", help="oracle equivalence over random grids")
    p.add_argument("--kernel", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated interior sizes")
    p.add_argument("--steps", type=int, default=2)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--parity", choices=["even", "odd"], default="even")
    p.add_argument("--precision", choices=["fp64", "fp32"], default="fp64")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--no-packing", action="store_true")
    p.add_argument("--json", action="store_true", help="emit the full JSON report")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("analyze", help="per-point cost tables and redundancy factors")
    p.add_argument("--r", default="3", help="radius (comma list with --sweep)")
    p.add_argument("--c", default="8", help="tile side (comma list with --sweep)")
    p.add_argument("--l-tc", type=int, default=16, help="TCStencil matrix size")
    p.add_argument("--methods", default="all")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--sweep", action="store_true", help="cross-product of --r and --c lists")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("plan", help="derive a tiling plan report")
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--block", default="64x64")
    p.add_argument("--warp", default="16x8")
    p.add_argument("--mma", default="16x8x16")
    p.add_argument("--grid", help="problem size AxB (defaults to one block)")
    p.add_argument("--json", dest="out_json", help="write the report to this path")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("run", help="execute a stencil on a grid file")
    p.add_argument("--kernel", required=True)
    p.add_argument("--grid", required=True, help="input .spgr grid file")
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--parity", choices=["even", "odd"], default="even")
    p.add_argument("--precision", choices=["fp64", "fp32"], default="fp64")
    p.add_argument("--no-packing", action="store_true")
    p.add_argument("--stats", action="store_true", help="include the model cross-check")
    p.add_argument("--c", type=int, default=8, help="tile side for the model cross-check")
    p.add_argument("--out", help="write the output grid to this path")
    p.add_argument("--json", dest="out_json", help="write the report to this path")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("make-grid", help="generate a random binary grid file")
    p.add_argument("--size", required=True, help="interior size AxB")
    p.add_argument("--halo", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG_ERROR if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
