"""Clustered channel generator, Doppler evolution and CSI scaling."""


import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thp_hybrid.channel import (ChannelProcess, array_response, effective_csi, evolve_channel,
                                make_channel_set, sample_channel, sample_rays, scale_channels,
                                write_rays_csv)
from thp_hybrid.config import SystemConfig
from thp_hybrid.core import DimensionError

from conftest import crandn


class TestArrayResponse:
    def test_broadside(self):
        np.testing.assert_allclose(array_response(0.0, 4), np.full(4, 0.5))

    def test_endfire_two_elements(self):
        np.testing.assert_allclose(array_response(np.pi / 2, 2), [1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-15)

    @given(st.floats(-np.pi, np.pi), st.integers(1, 64))
    def test_unit_norm(self, theta, N):
        assert np.linalg.norm(array_response(theta, N)) == pytest.approx(1.0)

    def test_batched_shape(self):
        assert array_response(np.zeros((3, 5)), 8).shape == (3, 5, 8)

    def test_empty_array_rejected(self):
        with pytest.raises(DimensionError):
            array_response(0.0, 0)


class TestSampleChannel:
    def test_zero_error_gives_exact_estimate(self):
        _, cs = sample_channel(SystemConfig(sigma_e=0.0), 3)
        for h, hb in zip(cs.H, cs.H_bar):
            np.testing.assert_array_equal(h, hb)

    def test_error_identity_exact(self):
        _, cs = sample_channel(SystemConfig(sigma_e=0.3), 4)
        for h, hb, d in zip(cs.H, cs.H_bar, cs.dH):
            np.testing.assert_array_equal(h, hb + 0.3 * d)

    def test_deterministic(self):
        cfg = SystemConfig()
        _, a = sample_channel(cfg, 11)
        _, b = sample_channel(cfg, 11)
        for x, y in zip(a.H + a.H_bar, b.H + b.H_bar):
            assert x.tobytes() == y.tobytes()

    def test_shapes(self):
        cfg = SystemConfig(M=3, N_d=(2, 4, 6), R_d=(1, 2, 2), D_m=1, N_s=8, R_s=4)
        _, cs = sample_channel(cfg, 0)
        assert [h.shape for h in cs.H] == [(2, 8), (4, 8), (6, 8)]

    def test_mean_energy_matches_cluster_count(self):
        cfg = SystemConfig()
        rng = np.random.default_rng(5)
        energy = [np.linalg.norm(sample_rays(cfg, rng).channel(4, 16)) ** 2 for _ in range(10_000)]
        assert np.mean(energy) == pytest.approx(cfg.n_clusters, rel=0.05)

    def test_rays_csv(self, tmp_path):
        rays, _ = sample_channel(SystemConfig(), 0)
        write_rays_csv(rays, tmp_path / "rays.csv")
        lines = (tmp_path / "rays.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 3 * 5


class TestEvolve:
    def test_zero_step_identity(self):
        rays, _ = sample_channel(SystemConfig(), 0)
        assert evolve_channel(rays[0], 0.0, 100.0) is rays[0]

    def test_static_doppler_identity(self):
        rays, _ = sample_channel(SystemConfig(), 0)
        np.testing.assert_array_equal(evolve_channel(rays[0], 1.0, 0.0).channel(4, 16), rays[0].channel(4, 16))

    def test_negative_step_rejected(self):
        rays, _ = sample_channel(SystemConfig(), 0)
        with pytest.raises(ValueError):
            evolve_channel(rays[0], -1e-3, 10.0)

    def test_ray_magnitudes_preserved(self):
        rays, _ = sample_channel(SystemConfig(), 1)
        r = rays[0]
        e = evolve_channel(r, 0.37, 50.0)
        np.testing.assert_allclose(np.abs(r.gain[:, None] * np.exp(1j * e.phase)),
                                   np.abs(r.gain[:, None] * np.exp(1j * r.phase)))
        assert not np.allclose(e.phase, r.phase)

    def test_steps_compose(self):
        rays, _ = sample_channel(SystemConfig(), 2)
        a = evolve_channel(evolve_channel(rays[1], 1e-3, 20.0), 2e-3, 20.0)
        b = evolve_channel(rays[1], 3e-3, 20.0)
        np.testing.assert_allclose(a.channel(4, 16), b.channel(4, 16), atol=1e-12)


class TestScaling:
    def test_unit_noise_is_identity(self, rng):
        cs = make_channel_set([crandn(rng, 3, 4)], [crandn(rng, 3, 4)], [1.0], [0.1])
        np.testing.assert_array_equal(cs.H_hat[0], cs.H_bar[0])

    def test_halving(self, rng):
        cs = make_channel_set([crandn(rng, 3, 4)], [crandn(rng, 3, 4)], [2.0], [0.1])
        np.testing.assert_allclose(cs.H_hat[0], cs.H_bar[0] / 2)
        assert cs.sigma_e_hat[0] == pytest.approx(0.05)

    @given(st.floats(0.01, 100))
    @settings(max_examples=25)
    def test_norm_homogeneity(self, s):
        rng = np.random.default_rng(1)
        cs = make_channel_set([crandn(rng, 2, 3)], [crandn(rng, 2, 3)], [1.0], [0.0])
        scaled = scale_channels(cs, s)
        assert np.linalg.norm(scaled.H_hat[0]) == pytest.approx(np.linalg.norm(cs.H_bar[0]) / s)

    def test_non_positive_sigma_rejected(self, rng):
        cs = make_channel_set([crandn(rng, 2, 2)], [crandn(rng, 2, 2)], [1.0], [0.0])
        with pytest.raises(ValueError):
            scale_channels(cs, 0.0)

    def test_assumed_error_only_changes_estimate_level(self):
        _, cs = sample_channel(SystemConfig(), 0)
        nr = cs.assume_sigma_e(0.0)
        assert np.all(nr.sigma_e_hat == 0) and np.all(nr.sigma_e == cs.sigma_e)
        assert nr.H_hat is cs.H_hat


class TestEffectiveCsi:
    def test_identity_analog(self, rng):
        H = [crandn(rng, 3, 4)]
        np.testing.assert_array_equal(effective_csi(H, [np.eye(3)], np.eye(4))[0], H[0])

    def test_zero_channel(self, rng):
        out = effective_csi([np.zeros((3, 4))], [crandn(rng, 2, 3)], crandn(rng, 4, 2))
        assert not out[0].any()

    def test_shape(self, rng):
        out = effective_csi([crandn(rng, 4, 6), crandn(rng, 3, 6)], [crandn(rng, 2, 4), crandn(rng, 1, 3)],
                            crandn(rng, 6, 3))
        assert [h.shape for h in out] == [(2, 3), (1, 3)]

    def test_mismatch(self, rng):
        with pytest.raises(DimensionError):
            effective_csi([crandn(rng, 4, 6)], [crandn(rng, 2, 3)], crandn(rng, 6, 3))


class TestChannelProcess:
    def test_same_key_same_estimate(self):
        p = ChannelProcess(SystemConfig(), 3, f_d=20.0)
        a, b = p.observe(0.01, key=(0, 5)), p.observe(0.01, key=(0, 5))
        np.testing.assert_array_equal(a.H_bar[0], b.H_bar[0])
        assert not np.allclose(a.H_bar[0], p.observe(0.01, key=(0, 6)).H_bar[0])

    def test_lag_observes_the_past(self):
        p = ChannelProcess(SystemConfig(sigma_e=0.0), 3, f_d=20.0)
        np.testing.assert_allclose(p.observe(0.01, lag=0.004).H[0], p.true_channels(0.006)[0])

    def test_lag_clamped_at_start(self):
        p = ChannelProcess(SystemConfig(sigma_e=0.0), 3, f_d=20.0)
        np.testing.assert_allclose(p.observe(0.001, lag=0.01).H[1], p.true_channels(0.0)[1])

    def test_static_process_constant(self):
        p = ChannelProcess(SystemConfig(), 2, f_d=0.0)
        np.testing.assert_array_equal(p.true_channels(0.0)[0], p.true_channels(5.0)[0])

    def test_truth_set_is_error_free(self):
        truth = ChannelProcess(SystemConfig(), 2, f_d=10.0).truth_set(0.02)
        np.testing.assert_array_equal(truth.H[0], truth.H_bar[0])
        assert np.all(truth.sigma_e == 0)
