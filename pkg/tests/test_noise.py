import io

import numpy as np
import pytest

from temsim.noise import (
    NoiseIncrements,
    attach_regimes,
    coarsen_noise,
    load_noise,
    make_noise,
    save_noise,
)
from temsim.rng import CHANNEL_BROWNIAN, CHANNEL_CHAIN, CHANNEL_POISSON, \
    path_streams, substream


class TestStreams:
    def test_reproducible(self):
        a = substream(42, 3, CHANNEL_BROWNIAN).standard_normal(8)
        b = substream(42, 3, CHANNEL_BROWNIAN).standard_normal(8)
        np.testing.assert_array_equal(a, b)

    def test_channels_distinct(self):
        draws = {
            ch: substream(42, 0, ch).random(6).tolist()
            for ch in (CHANNEL_BROWNIAN, CHANNEL_POISSON, CHANNEL_CHAIN)
        }
        assert draws[CHANNEL_BROWNIAN] != draws[CHANNEL_POISSON]
        assert draws[CHANNEL_BROWNIAN] != draws[CHANNEL_CHAIN]

    def test_paths_distinct(self):
        a = substream(42, 0, CHANNEL_BROWNIAN).random(6)
        b = substream(42, 1, CHANNEL_BROWNIAN).random(6)
        assert not np.array_equal(a, b)

    def test_negative_path_rejected(self):
        with pytest.raises(ValueError):
            substream(1, -1, 0)


class TestMakeNoise:
    def test_zero_intensity_no_jumps(self):
        noise = make_noise(0.01, 500, 0.0, path_streams(0, 0))
        assert np.all(noise.poisson == 0)

    def test_poisson_mean(self):
        # mean of increments is lambda * delta; tolerance 3 standard errors
        noise = make_noise(0.01, 1_000_000, 1.0, path_streams(123, 0))
        tol = 3.0 * np.sqrt(0.01 / 1_000_000)
        assert abs(noise.poisson.mean() - 0.01) <= tol

    def test_brownian_variance(self):
        noise = make_noise(0.01, 1_000_000, 0.0, path_streams(7, 0))
        assert noise.brownian.var() == pytest.approx(0.01, rel=0.01)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_noise(0.0, 10, 1.0, path_streams(0, 0))
        with pytest.raises(ValueError):
            make_noise(0.01, 10, -1.0, path_streams(0, 0))
        with pytest.raises(ValueError):
            NoiseIncrements(delta=0.01, brownian=np.zeros(3),
                            poisson=np.array([0, -1, 0]))


class TestCoarsen:
    def test_identity_factor(self):
        noise = make_noise(0.01, 16, 1.0, path_streams(0, 0))
        assert coarsen_noise(noise, 1) is noise

    def test_block_sums(self):
        noise = NoiseIncrements(delta=0.5, brownian=np.array([1.0, 2.0, 3.0, 4.0]),
                                poisson=np.array([1, 0, 2, 1]))
        coarse = coarsen_noise(noise, 2)
        np.testing.assert_array_equal(coarse.brownian, [3.0, 7.0])
        np.testing.assert_array_equal(coarse.poisson, [1, 3])
        assert coarse.delta == 1.0

    def test_conservation_exact(self):
        noise = make_noise(2**-10, 2**12, 2.0, path_streams(5, 2))
        noise = attach_regimes(noise, np.ones(2**12 + 1, dtype=np.int64))
        for factor in (2, 8, 64):
            coarse = coarsen_noise(noise, factor)
            assert coarse.poisson.sum() == noise.poisson.sum()
            assert coarse.brownian.sum() == pytest.approx(noise.brownian.sum(),
                                                          rel=1e-12)

    def test_regime_subsampling(self):
        regimes = np.arange(9)
        noise = attach_regimes(
            NoiseIncrements(delta=0.1, brownian=np.zeros(8),
                            poisson=np.zeros(8, dtype=np.int64)),
            regimes,
        )
        coarse = coarsen_noise(noise, 4)
        np.testing.assert_array_equal(coarse.regimes, [0, 4, 8])

    def test_divisibility_enforced(self):
        noise = make_noise(0.01, 10, 0.0, path_streams(0, 0))
        with pytest.raises(ValueError):
            coarsen_noise(noise, 3)


class TestBinaryRecord:
    def test_round_trip(self):
        noise = make_noise(0.001, 64, 1.5, path_streams(77, 4))
        noise = attach_regimes(
            noise, np.random.default_rng(0).integers(1, 3, 65))
        buffer = io.BytesIO()
        save_noise(noise, buffer, seed=77, path_index=4, tau_steps=1000,
                   jump_intensity=1.5)
        buffer.seek(0)
        loaded, header = load_noise(buffer)
        np.testing.assert_array_equal(loaded.brownian, noise.brownian)
        np.testing.assert_array_equal(loaded.poisson, noise.poisson)
        np.testing.assert_array_equal(loaded.regimes, noise.regimes)
        assert loaded.delta == noise.delta
        assert header == {"seed": 77, "path_index": 4, "delta": 0.001,
                          "tau_steps": 1000, "jump_intensity": 1.5}

    def test_round_trip_without_regimes(self):
        noise = make_noise(0.5, 3, 0.0, path_streams(0, 0))
        buffer = io.BytesIO()
        save_noise(noise, buffer, seed=0, path_index=0, tau_steps=2,
                   jump_intensity=0.0)
        buffer.seek(0)
        loaded, _ = load_noise(buffer)
        assert loaded.regimes is None

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError):
            load_noise(io.BytesIO(b"JUNKJUNKJUNKJUNK" * 8))
