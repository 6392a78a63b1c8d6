import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framecast.grid import (
    as_field,
    as_frame,
    build_pyramid,
    divergence,
    downsample,
    forward_gradient,
    gradient,
    resize_bilinear,
    sample_bilinear,
)

from oracles import make_texture


def ramp_x(h, w):
    return np.tile(np.arange(w, dtype=np.float32) / (w - 1), (h, 1))


class TestValidation:
    def test_rejects_non_2d(self):
        with pytest.raises(ValueError, match="2-D"):
            as_field(np.zeros(5, np.float32))

    def test_rejects_tiny(self):
        with pytest.raises(ValueError, match="2x2"):
            as_field(np.zeros((1, 5), np.float32))

    def test_rejects_nan(self):
        bad = np.zeros((4, 4), np.float32)
        bad[1, 1] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            as_field(bad)

    def test_frame_range_check(self):
        with pytest.raises(ValueError, match="\\[0, 1\\]"):
            as_frame(np.full((4, 4), 1.5, np.float32))


class TestSampleBilinear:
    def test_integer_coords_exact(self):
        rng = np.random.default_rng(0)
        f = rng.random((7, 9)).astype(np.float32)
        xs, ys = np.meshgrid(np.arange(9, dtype=np.float32), np.arange(7, dtype=np.float32))
        assert np.array_equal(sample_bilinear(f, xs, ys), f)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_integer_coords_exact_property(self, seed):
        rng = np.random.default_rng(seed)
        h, w = int(rng.integers(2, 12)), int(rng.integers(2, 12))
        f = rng.random((h, w)).astype(np.float32)
        xs, ys = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
        assert np.array_equal(sample_bilinear(f, xs, ys), f)

    def test_exact_on_ramp(self):
        f = ramp_x(4, 8)
        assert sample_bilinear(f, 2.5, 0.0) == pytest.approx(2.5 / 7, abs=1e-7)

    def test_clamps_to_border(self):
        rng = np.random.default_rng(1)
        f = rng.random((5, 6)).astype(np.float32)
        assert sample_bilinear(f, -10.0, 0.0) == f[0, 0]
        assert sample_bilinear(f, 100.0, 100.0) == f[-1, -1]

    def test_scalar_and_array_queries_agree(self):
        f = make_texture(8, 8, seed=2)
        xs = np.array([0.3, 5.7])
        ys = np.array([2.2, 6.1])
        batch = sample_bilinear(f, xs, ys)
        for i in range(2):
            assert batch[i] == sample_bilinear(f, xs[i], ys[i])


class TestGradient:
    def test_constant_field(self):
        gx, gy = gradient(np.full((6, 6), 0.4, np.float32))
        assert not gx.any() and not gy.any()

    def test_ramp_interior(self):
        f = ramp_x(5, 9)
        gx, gy = gradient(f)
        assert gx[1:-1, 1:-1] == pytest.approx(1.0 / 8, abs=1e-7)
        assert not gy.any()

    def test_matches_per_pixel_oracle_exactly(self):
        rng = np.random.default_rng(3)
        f = rng.random((8, 8)).astype(np.float32)
        gx, gy = gradient(f)
        for i in range(8):
            for j in range(8):
                if j == 0:
                    ex = f[i, 1] - f[i, 0]
                elif j == 7:
                    ex = f[i, 7] - f[i, 6]
                else:
                    ex = (f[i, j + 1] - f[i, j - 1]) * np.float32(0.5)
                assert gx[i, j] == ex
                if i == 0:
                    ey = f[1, j] - f[0, j]
                elif i == 7:
                    ey = f[7, j] - f[6, j]
                else:
                    ey = (f[i + 1, j] - f[i - 1, j]) * np.float32(0.5)
                assert gy[i, j] == ey


class TestDivergence:
    def test_zero_input(self):
        z = np.zeros((5, 5), np.float32)
        assert not divergence(z, z).any()

    def test_constant_interior(self):
        c = np.full((6, 6), 0.7, np.float32)
        div = divergence(c, c)
        assert div[1:-1, 1:-1] == pytest.approx(0.0, abs=1e-7)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_adjoint_identity(self, seed):
        # <grad u, p> == -<u, div p> with inner products done by brute force
        rng = np.random.default_rng(seed)
        u = rng.standard_normal((6, 6)).astype(np.float32)
        px = rng.standard_normal((6, 6)).astype(np.float32)
        py = rng.standard_normal((6, 6)).astype(np.float32)
        gx, gy = forward_gradient(u)
        lhs = 0.0
        for i in range(6):
            for j in range(6):
                lhs += float(gx[i, j]) * float(px[i, j]) + float(gy[i, j]) * float(py[i, j])
        div = divergence(px, py)
        rhs = 0.0
        for i in range(6):
            for j in range(6):
                rhs += float(u[i, j]) * float(div[i, j])
        scale = max(abs(lhs), abs(rhs), 1e-3)
        assert abs(lhs + rhs) / scale < 1e-5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shapes differ"):
            divergence(np.zeros((4, 4), np.float32), np.zeros((5, 4), np.float32))


class TestDownsample:
    def test_constant_preserved(self):
        out = downsample(np.full((20, 20), 0.35, np.float32), 0.5)
        assert out.shape == (10, 10)
        assert out == pytest.approx(0.35, abs=1e-6)

    def test_output_dims(self):
        out = downsample(make_texture(64, 64), 0.5)
        assert out.shape == (32, 32)

    def test_ceil_dims(self):
        out = downsample(make_texture(17, 21), 0.5)
        assert out.shape == (9, 11)

    def test_mean_preserved_on_smooth_field(self):
        f = make_texture(48, 48, seed=4, cutoff=0.05)
        out = downsample(f, 0.5)
        assert abs(float(out.mean()) - float(f.mean())) < 1e-3

    def test_degenerate_size_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            downsample(np.zeros((2, 2), np.float32), 0.5)


class TestPyramid:
    def test_level_count_64(self):
        levels = build_pyramid(make_texture(64, 64), 0.5, 16)
        assert [lv.shape for lv in levels] == [(64, 64), (32, 32), (16, 16)]

    def test_level_count_17(self):
        levels = build_pyramid(make_texture(17, 17), 0.5, 16)
        assert len(levels) == 1

    def test_monotonically_shrinking(self):
        levels = build_pyramid(make_texture(60, 40), 0.7, 8)
        for finer, coarser in zip(levels, levels[1:]):
            assert coarser.shape[0] < finer.shape[0]
            assert coarser.shape[1] < finer.shape[1]

    def test_level_zero_is_input(self):
        f = make_texture(32, 32, seed=5)
        levels = build_pyramid(f, 0.5, 16)
        assert np.array_equal(levels[0], f)

    def test_deterministic(self):
        f = make_texture(40, 40, seed=6)
        a = build_pyramid(f, 0.5, 8)
        b = build_pyramid(f, 0.5, 8)
        for la, lb in zip(a, b):
            assert np.array_equal(la, lb)


def test_resize_roundtrip_identity():
    f = make_texture(12, 18, seed=7)
    assert np.array_equal(resize_bilinear(f, (12, 18)), f)


def test_no_nan_from_finite_inputs():
    f = make_texture(16, 16, seed=8)
    gx, gy = gradient(f)
    fx, fy = forward_gradient(f)
    for arr in (gx, gy, fx, fy, divergence(gx, gy), downsample(f, 0.5)):
        assert np.isfinite(arr).all()
