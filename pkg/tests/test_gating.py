import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthrefine.core_depth import DepthMap, DifferenceMap
from depthrefine.errors import DimensionMismatch
from depthrefine.gating import (
    GateMap,
    LatentGrid,
    blend,
    decode_adjoint,
    decode_latent,
    decode_unclamped,
    downsample_gate,
    encode_latent,
    sample_noise,
)


def nmap(values):
    return DepthMap(np.asarray(values, dtype=float), None, "normalized")


def bilinear_scalar(coarse, factor, H, W):
    """Reference upsampler evaluated pixel by pixel."""
    h, w = coarse.shape
    out = np.empty((H, W))
    for py in range(H):
        for px in range(W):
            y = min(max((py + 0.5) / factor - 0.5, 0.0), h - 1)
            x = min(max((px + 0.5) / factor - 0.5, 0.0), w - 1)
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            out[py, px] = ((1 - fy) * (1 - fx) * coarse[y0, x0] + (1 - fy) * fx * coarse[y0, x1]
                           + fy * (1 - fx) * coarse[y1, x0] + fy * fx * coarse[y1, x1])
    return out


class TestEncodeDecode:
    def test_factor_one_identity(self):
        m = nmap(np.random.default_rng(0).uniform(-1, 1, (5, 7)))
        z = encode_latent(m, 1, 1)
        np.testing.assert_array_equal(z.values[0], m.values)
        np.testing.assert_array_equal(decode_latent(z).values, m.values)

    def test_block_mean(self):
        z = encode_latent(nmap([[0.0, 0.1], [0.2, 0.3]]), 2, 1)
        assert z.values.shape == (1, 1, 1)
        assert z.values[0, 0, 0] == pytest.approx(0.15)

    def test_block_mean_integers(self):
        # the 2x2 block {0, 1, 2, 3} averages to 1.5
        grid = np.array([[0.0, 1.0], [2.0, 3.0]])
        z = LatentGrid(np.zeros((1, 1, 1)), 2, (2, 2))
        from depthrefine.gating import _area_downsample

        assert _area_downsample(grid, 2)[0, 0] == 1.5
        assert z.source_shape == (2, 2)

    def test_channels_replicated(self):
        z = encode_latent(nmap(np.full((8, 8), 0.25)), 4, 4)
        assert z.values.shape == (4, 2, 2)
        assert np.all(z.values == 0.25)

    @pytest.mark.parametrize("c", [-1.0, -0.3, 0.0, 0.8])
    def test_constant_round_trip(self, c):
        m = nmap(np.full((10, 13), c))
        z = encode_latent(m, 4, 4)
        np.testing.assert_allclose(decode_latent(z).values, c, atol=1e-15)

    def test_edge_replication_padding(self):
        m = nmap(np.tile(np.linspace(-1, 1, 10), (6, 1)))
        z = encode_latent(m, 4, 1)
        assert z.values.shape == (1, 2, 3)
        assert z.source_shape == (6, 10)
        assert decode_latent(z).values.shape == (6, 10)
        # the last block holds columns 8, 9 and two replicas of column 9
        assert z.values[0, 0, 2] == pytest.approx((m.values[0, 8] + 3 * m.values[0, 9]) / 4)

    def test_decode_matches_scalar_bilinear(self):
        rng = np.random.default_rng(1)
        z = LatentGrid(rng.uniform(-1, 1, (3, 4, 5)), 4, (16, 20))
        ref = bilinear_scalar(z.values.mean(axis=0), 4, 16, 20)
        np.testing.assert_allclose(decode_unclamped(z), ref, atol=1e-14)

    def test_ramp_error_bounded_by_half_block_range(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            gy, gx = rng.uniform(-0.02, 0.02, 2)
            yy, xx = np.mgrid[0:32, 0:32]
            ramp = np.clip(gy * yy + gx * xx + rng.uniform(-0.2, 0.2), -1, 1)
            m = nmap(ramp)
            for factor in (2, 4):
                back = decode_latent(encode_latent(m, factor, 4)).values
                half_block_range = 0.5 * (abs(gy) + abs(gx)) * (factor - 1)
                assert np.max(np.abs(back - ramp)) <= half_block_range + 1e-12
                blocks = encode_latent(m, factor, 1).values[0]
                np.testing.assert_allclose(back, np.clip(bilinear_scalar(blocks, factor, 32, 32), -1, 1), atol=1e-12)

    def test_decode_clamps(self):
        z = LatentGrid(np.full((2, 2, 2), 3.0), 2, (4, 4))
        assert decode_latent(z).values.max() == 1.0

    @pytest.mark.parametrize("factor,shape", [(1, (6, 5)), (2, (8, 6)), (4, (9, 14))])
    def test_adjoint_dot_product(self, factor, shape):
        rng = np.random.default_rng(factor)
        h, w = -(-shape[0] // factor), -(-shape[1] // factor)
        z = LatentGrid(rng.normal(size=(3, h, w)), factor, shape)
        g = rng.normal(size=shape)
        lhs = np.sum(decode_unclamped(z) * g)
        rhs = np.sum(z.values * decode_adjoint(g, z))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestGate:
    def test_zero_and_one(self):
        valid = np.ones((8, 8), bool)
        assert np.all(downsample_gate(DifferenceMap(np.zeros((8, 8)), valid), (2, 2)).values == 0)
        assert np.all(downsample_gate(DifferenceMap(np.ones((8, 8)), valid), (2, 2)).values == 1)

    def test_block_mean(self):
        e = DifferenceMap(np.array([[0.0, 0.0], [1.0, 1.0]]), np.ones((2, 2), bool))
        assert downsample_gate(e, (1, 1)).values[0, 0] == 0.5

    def test_inconsistent_dims(self):
        e = DifferenceMap(np.zeros((8, 8)), np.ones((8, 8), bool))
        with pytest.raises(DimensionMismatch):
            downsample_gate(e, (3, 2))


def _latent(v):
    return LatentGrid(np.asarray(v, dtype=float).reshape(1, 1, -1))


class TestBlend:
    def test_gate_zero_is_clean(self):
        rng = np.random.default_rng(0)
        z = LatentGrid(rng.normal(size=(4, 6, 6)))
        noise = sample_noise(rng, z)
        out = blend(z, noise, GateMap(np.zeros((6, 6))))
        np.testing.assert_array_equal(out.values, z.values)

    def test_gate_one_is_noise(self):
        rng = np.random.default_rng(1)
        z = LatentGrid(rng.normal(size=(4, 6, 6)))
        noise = sample_noise(rng, z)
        out = blend(z, noise, GateMap(np.ones((6, 6))))
        np.testing.assert_array_equal(out.values, noise.values)

    def test_convex_combination(self):
        out = blend(_latent([4.0]), _latent([0.0]), GateMap(np.array([[0.25]])))
        assert out.values.item() == 3.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            blend(_latent([1.0, 2.0]), _latent([1.0]), GateMap(np.zeros((1, 2))))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0, 1))
    def test_linear_in_gate(self, seed, alpha):
        rng = np.random.default_rng(seed)
        z = LatentGrid(rng.normal(size=(2, 3, 3)))
        n = LatentGrid(rng.normal(size=(2, 3, 3)))
        g1, g2 = GateMap(rng.random((3, 3))), GateMap(rng.random((3, 3)))
        mixed = blend(z, n, GateMap(alpha * g1.values + (1 - alpha) * g2.values)).values
        combo = alpha * blend(z, n, g1).values + (1 - alpha) * blend(z, n, g2).values
        np.testing.assert_allclose(mixed, combo, atol=1e-12)
