import json

import numpy as np
import pytest

from sparsestencil.cli import main
from sparsestencil.core import make_kernel, random_grid, save_grid, save_kernel
from sparsestencil.transform import load_compressed_set


@pytest.fixture
def box_kernel_file(tmp_path):
    rng = np.random.default_rng(0)
    k = make_kernel("box", 2, 3, rng.uniform(-1, 1, 49))
    path = tmp_path / "k.json"
    save_kernel(k, path)
    return path


@pytest.fixture
def kernel_1d_file(tmp_path):
    k = make_kernel("box", 1, 1, [0.25, 0.5, 0.25])
    path = tmp_path / "k1.json"
    save_kernel(k, path)
    return path


class TestTransformCommand:
    def test_writes_records_and_json(self, tmp_path, box_kernel_file, capsys):
        out = tmp_path / "k.spck"
        mirror = tmp_path / "k.spck.json"
        rc = main(
            [
                "transform",
                "--kernel",
                str(box_kernel_file),
                "--parity",
                "even",
                "--out",
                str(out),
                "--json",
                str(mirror),
            ]
        )
        assert rc == 0
        kernels = load_compressed_set(out)
        assert len(kernels) == 7  # 2r+1 rows
        assert all(ck.L == 8 for ck in kernels)
        assert len(json.loads(mirror.read_text())) == 7
        summary = json.loads(capsys.readouterr().out)
        assert summary["kernel_rows"] == 7
        assert summary["L"] == 8

    def test_missing_kernel_file_is_config_error(self, tmp_path):
        rc = main(
            ["transform", "--kernel", str(tmp_path / "nope.json"), "--out", "x.spck"]
        )
        assert rc == 2


class TestVerifyCommand:
    def test_pass_exit_zero_and_deterministic_json(self, kernel_1d_file, capsys):
        args = [
            "verify",
            "--kernel",
            str(kernel_1d_file),
            "--sizes",
            "64,128",
            "--steps",
            "2",
            "--seed",
            "42",
            "--json",
        ]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        second = capsys.readouterr().out
        assert first == second
        report = json.loads(first)
        assert report["all_pass"]

    def test_unattainable_tolerance_exits_one(self, kernel_1d_file, capsys):
        rc = main(
            [
                "verify",
                "--kernel",
                str(kernel_1d_file),
                "--sizes",
                "64",
                "--tolerance",
                "1e-30",
            ]
        )
        assert rc == 1

    def test_bad_flag_is_config_error(self, kernel_1d_file):
        assert main(["verify", "--kernel", str(kernel_1d_file)]) == 2


class TestAnalyzeCommand:
    def test_csv_contains_flagged_compute_modes(self, capsys):
        assert main(["analyze", "--r", "3", "--c", "8", "--format", "csv"]) == 0
        out = capsys.readouterr().out
        assert "method" in out.splitlines()[0]
        sptc_line = next(line for line in out.splitlines() if line.startswith("sptc"))
        assert "64.0" in sptc_line and "56.0" in sptc_line

    def test_json_rows(self, capsys):
        assert main(["analyze", "--r", "3", "--c", "8", "--format", "json"]) == 0
        rows = json.loads(capsys.readouterr().out)
        by_method = {row["method"]: row for row in rows}
        assert by_method["lower_bound"]["compute"] == 49.0
        assert by_method["tcstencil"]["compute"] == 286.72
        assert by_method["sptc"]["param_access"] == 7.0

    def test_sweep_mode(self, capsys):
        assert (
            main(
                [
                    "analyze",
                    "--sweep",
                    "--r",
                    "1,2",
                    "--c",
                    "4,8",
                    "--methods",
                    "lower_bound,sptc",
                    "--format",
                    "json",
                ]
            )
            == 0
        )
        rows = json.loads(capsys.readouterr().out)
        assert len(rows) == 2 * 2 * 2

    def test_unknown_method_is_config_error(self):
        assert main(["analyze", "--methods", "warpstencil"]) == 2


class TestPlanCommand:
    def test_json_report(self, capsys):
        rc = main(
            ["plan", "--r", "3", "--block", "64x64", "--warp", "16x8", "--mma", "16x8x16"]
        )
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["shared_input_elements"] == 4480
        assert report["invocations_per_warp_pass"] == 1

    def test_bad_block_spec(self):
        assert main(["plan", "--r", "3", "--block", "64"]) == 2


class TestRunCommand:
    def test_run_with_stats_and_model_check(self, tmp_path, box_kernel_file, capsys):
        grid = random_grid(64, 64, 3, seed=5)
        grid_path = tmp_path / "g.spgr"
        save_grid(grid, grid_path)
        out_path = tmp_path / "out.spgr"
        rc = main(
            [
                "run",
                "--kernel",
                str(box_kernel_file),
                "--grid",
                str(grid_path),
                "--steps",
                "2",
                "--stats",
                "--c",
                "8",
                "--out",
                str(out_path),
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["stats"]["total_macs"] == 56 * 64 * 64 * 2
        assert payload["model_cross_check"]["macs_within_envelope"]
        assert out_path.exists()

    def test_width_mismatch_is_config_error(self, tmp_path, box_kernel_file):
        grid = random_grid(60, 60, 3, seed=5)  # 60 not a multiple of L=8
        grid_path = tmp_path / "g.spgr"
        save_grid(grid, grid_path)
        rc = main(
            ["run", "--kernel", str(box_kernel_file), "--grid", str(grid_path)]
        )
        assert rc == 2


class TestMakeGridCommand:
    def test_generates_loadable_grid(self, tmp_path):
        out = tmp_path / "g.spgr"
        rc = main(["make-grid", "--size", "16x24", "--halo", "2", "--out", str(out)])
        assert rc == 0
        from sparsestencil.core import load_grid

        g = load_grid(out)
        assert (g.A, g.B, g.halo) == (16, 24, 2)
