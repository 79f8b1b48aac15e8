import numpy as np
import pytest

from sparsestencil.core import grid_from_interior, make_kernel, naive_apply, random_grid
from sparsestencil.costmodel import CostParams, measured_vs_model
from sparsestencil.pipeline import (
    ExecConfig,
    execute,
    report_json,
    transform_stencil,
    verify,
)
from sparsestencil.transform import Parity, decode


def rel_error(got, want):
    scale = max(np.max(np.abs(want)), 1e-300)
    return np.max(np.abs(got - want)) / scale


def random_kernel(shape, d, r, seed):
    rng = np.random.default_rng(seed)
    n = 2 * r + 1
    if d == 1 or shape == "box":
        return make_kernel(shape, d, r, rng.uniform(-1, 1, n**d))
    coeffs = np.zeros((n, n))
    coeffs[r, :] = rng.uniform(-1, 1, n)
    coeffs[:, r] = rng.uniform(-1, 1, n)
    return make_kernel("star", 2, r, coeffs)


class TestTransformStencil:
    def test_1d_single_compressed_kernel(self):
        ts = transform_stencil(make_kernel("box", 1, 1, [1.0, 2.0, 3.0]))
        assert len(ts.rows) == 1
        assert ts.rows[0][0] == 0
        assert ts.L == 4

    def test_box_2d2r_five_kernels(self):
        k = random_kernel("box", 2, 2, seed=0)
        ts = transform_stencil(k)
        assert [rho for rho, _ in ts.rows] == [-2, -1, 0, 1, 2]
        for _, ck in ts.rows:
            assert ck.L == 6
            assert decode(ck).width == 12

    def test_star_2d2r_off_center_rows_use_placeholders(self):
        k = random_kernel("star", 2, 2, seed=1)
        ts = transform_stencil(k, Parity.EVEN)
        for rho, ck in ts.rows:
            dec = decode(ck)
            per_row_nonzeros = np.count_nonzero(dec.values, axis=1)
            if rho != 0:
                assert np.all(per_row_nonzeros == 1)
        # placeholder slots appear: some kept values are exact zeros
        off_center = dict(ts.rows)[1]
        assert np.any(off_center.values == 0.0)

    def test_permutation_shared_and_only_depends_on_l(self):
        a = transform_stencil(random_kernel("box", 2, 2, seed=2))
        b = transform_stencil(random_kernel("star", 2, 2, seed=3))
        assert np.array_equal(a.permutation.mapping, b.permutation.mapping)

    def test_unsupported_dimensionality(self):
        k = make_kernel("box", 1, 1, [1.0, 2.0, 3.0])
        object.__setattr__(k, "d", 3)
        with pytest.raises(ValueError, match="dimensionality"):
            transform_stencil(k)


class TestExecute:
    def test_identity_kernel_is_fixed_point(self):
        coeffs = np.zeros((3, 3))
        coeffs[1, 1] = 1.0
        k = make_kernel("box", 2, 1, coeffs)
        g = random_grid(16, 16, 1, seed=4)
        out, _ = execute(k, g, 3)
        assert np.array_equal(out.interior, g.interior)

    def test_all_ones_box_on_constant_grid(self):
        k = make_kernel("box", 2, 1, np.ones(9))
        g = grid_from_interior(np.full((8, 8), 1.5), halo=1, fill=1.5)
        out, _ = execute(k, g, 1)
        assert np.all(out.interior == 9 * 1.5)

    def test_box_2d3r_matches_oracle(self):
        k = random_kernel("box", 2, 3, seed=5)
        g = random_grid(128, 128, 3, seed=6)
        out, _ = execute(k, g, 2)
        want = naive_apply(k, g, 2)
        assert rel_error(out.interior, want.interior) < 1e-10

    def test_r7_two_invocation_path_matches_oracle(self):
        k = random_kernel("box", 2, 7, seed=7)
        g = random_grid(32, 32, 7, seed=8)
        out, stats = execute(k, g, 1)
        want = naive_apply(k, g, 1)
        assert rel_error(out.interior, want.interior) < 1e-10
        assert stats.fetch_runs_packed < stats.fetch_runs_unpacked

    def test_1d_matches_oracle(self):
        k = random_kernel("box", 1, 2, seed=9)
        g = random_grid(1, 1152, 2, seed=10)
        out, _ = execute(k, g, 4)
        want = naive_apply(k, g, 4)
        assert rel_error(out.interior, want.interior) < 1e-10

    def test_fp32_path_runs(self):
        k = random_kernel("box", 2, 1, seed=11)
        g = random_grid(32, 32, 1, seed=12)
        out, _ = execute(k, g, 1, ExecConfig(precision="fp32"))
        want = naive_apply(k, g.astype(np.float32), 1)
        assert out.interior.dtype == np.float32
        assert rel_error(out.interior, want.interior) < 1e-4

    def test_grid_width_must_be_multiple_of_l(self):
        k = random_kernel("box", 2, 2, seed=13)  # L = 6
        g = random_grid(32, 32, 2, seed=14)
        with pytest.raises(ValueError, match="multiple"):
            execute(k, g, 1)

    def test_halo_too_small(self):
        k = random_kernel("box", 2, 3, seed=15)
        g = random_grid(32, 32, 2, seed=16)
        with pytest.raises(ValueError, match="halo"):
            execute(k, g, 1)

    def test_explicit_incompatible_tiles_rejected(self):
        k = random_kernel("box", 2, 1, seed=17)
        g = random_grid(32, 32, 1, seed=18)
        with pytest.raises(ValueError):
            execute(k, g, 1, ExecConfig(a_block=48, b_block=48))

    def test_bad_precision_rejected(self):
        with pytest.raises(ValueError, match="precision"):
            ExecConfig(precision="fp16")


class TestStats:
    def test_per_point_counters_at_r3(self):
        k = random_kernel("box", 2, 3, seed=19)
        g = random_grid(64, 64, 3, seed=20)
        _, stats = execute(k, g, 1)
        pts = 64 * 64
        assert stats.total_macs == 56 * pts
        assert stats.input_elements == 14 * pts
        assert stats.param_elements == 7 * pts
        assert stats.dense_macs == 2 * stats.total_macs

    def test_model_cross_check_envelope(self):
        k = random_kernel("box", 2, 3, seed=21)
        g = random_grid(64, 64, 3, seed=22)
        _, stats = execute(k, g, 2)
        report = measured_vs_model(stats, CostParams(a=64, b=64, r=3, c=8))
        assert report["macs_within_envelope"]
        assert report["relative_deviation"]["input"] == 0.0
        assert report["relative_deviation"]["param"] == 0.0

    def test_input_loads_per_tile_decomposition(self):
        # per kernel row and step, the gather touches 2L elements per output
        # chunk of L points: (c + 2r) ceil-adjusted to the padded window,
        # times c, for a c x c tile
        k = random_kernel("box", 2, 3, seed=23)
        g = random_grid(64, 64, 3, seed=24)
        _, stats = execute(k, g, 1)
        c, r, L = 8, 3, 8
        tiles = (64 * 64) // (c * c)
        per_tile_per_row = 2 * L * (c * c // L)
        assert stats.input_elements == tiles * per_tile_per_row * (2 * r + 1)

    def test_stats_deterministic_across_runs(self):
        k = random_kernel("star", 2, 1, seed=25)
        g = random_grid(32, 32, 1, seed=26)
        _, s1 = execute(k, g, 2)
        _, s2 = execute(k, g, 2)
        assert s1.as_dict() == s2.as_dict()

    def test_tile_counts_present_for_2d(self):
        k = random_kernel("box", 2, 1, seed=27)
        g = random_grid(64, 64, 1, seed=28)
        _, stats = execute(k, g, 1)
        assert stats.tile_counts["block_tiles"] == 1
        assert stats.tile_counts["warps_per_block"] == 32
        assert stats.tile_counts["shared_input_elements"] == (64 + 2) * 64

    def test_mma_invocation_count(self):
        k = random_kernel("box", 2, 3, seed=29)
        g = random_grid(64, 64, 3, seed=30)
        _, stats = execute(k, g, 1)
        cols = 64 * (64 // 8)
        assert stats.mma_invocations == 7 * (cols // 8)  # one k-slab at L=8
        assert stats.sparse_mma_calls == 7


class TestParityAndPacking:
    def test_both_parities_match_oracle(self):
        k = random_kernel("box", 2, 2, seed=31)
        g = random_grid(48, 48, 2, seed=32)
        want = naive_apply(k, g, 2)
        for parity in (Parity.EVEN, Parity.ODD):
            out, _ = execute(k, g, 2, ExecConfig(parity=parity))
            assert rel_error(out.interior, want.interior) < 1e-10

    def test_parities_bitwise_identical_at_r1(self):
        # with L = 4 both parities induce the same segment partition, so the
        # two-segment sums commute and outputs agree bitwise
        k = random_kernel("box", 2, 1, seed=33)
        g = random_grid(32, 32, 1, seed=34)
        even, _ = execute(k, g, 3, ExecConfig(parity=Parity.EVEN))
        odd, _ = execute(k, g, 3, ExecConfig(parity=Parity.ODD))
        assert np.array_equal(even.interior, odd.interior)

    def test_parities_agree_within_rounding_at_r2(self):
        # for r >= 2 the parities partition segments differently, so outputs
        # agree only up to float accumulation order
        k = random_kernel("box", 2, 2, seed=35)
        g = random_grid(48, 48, 2, seed=36)
        even, _ = execute(k, g, 1, ExecConfig(parity=Parity.EVEN))
        odd, _ = execute(k, g, 1, ExecConfig(parity=Parity.ODD))
        assert rel_error(odd.interior, even.interior) < 1e-13

    def test_packing_toggle_is_bitwise_identical(self):
        k = random_kernel("box", 2, 3, seed=37)
        g = random_grid(64, 64, 3, seed=38)
        on, s_on = execute(k, g, 2, ExecConfig(packing=True))
        off, s_off = execute(k, g, 2, ExecConfig(packing=False))
        assert np.array_equal(on.interior, off.interior)
        assert s_on.fetch_runs_active <= s_off.fetch_runs_active


class TestVerify:
    def test_report_structure_and_pass(self):
        k = random_kernel("box", 2, 1, seed=39)
        report = verify(k, sizes=[32, 64], seed=1, steps=2)
        assert report["all_pass"]
        assert [c["size"] for c in report["cases"]] == [[32, 32], [64, 64]]
        assert all(c["max_rel_error"] < 1e-10 for c in report["cases"])
        assert report["cross_checks"]["packing_bitwise_identical"]

    def test_incompatible_size_becomes_failing_entry(self):
        k = random_kernel("box", 2, 2, seed=40)  # L = 6
        report = verify(k, sizes=[32, 48], seed=1, steps=1)
        assert not report["cases"][0]["pass"]
        assert "error" in report["cases"][0]
        assert report["cases"][1]["pass"]
        assert not report["all_pass"]

    def test_report_bytes_deterministic(self):
        k = random_kernel("star", 2, 1, seed=41)
        a = report_json(verify(k, sizes=[32], seed=7, steps=2))
        b = report_json(verify(k, sizes=[32], seed=7, steps=2))
        assert a == b

    def test_1d_sizes(self):
        k = random_kernel("box", 1, 1, seed=42)
        report = verify(k, sizes=[256], seed=3, steps=2)
        assert report["cases"][0]["size"] == [1, 256]
        assert report["all_pass"]
