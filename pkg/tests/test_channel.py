import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzfmtl.channel import (PhysicalPath, channel_from_paths, generate_channel,
                             load_realization, save_realization, spatial_doa, steering_vector,
                             user_sector)
from thzfmtl.system import DESK_PROFILE, PAPER_PROFILE, child_rng, subcarrier_frequencies


class TestSteeringVector:
    def test_broadside(self):
        np.testing.assert_allclose(steering_vector(0.0, 4), 0.5 * np.ones(4))

    def test_endfire_two_elements(self):
        np.testing.assert_allclose(steering_vector(1.0, 2), np.array([1, -1]) / np.sqrt(2),
                                   atol=1e-15)

    @given(st.floats(-1, 1))
    @settings(max_examples=50)
    def test_unit_norm(self, doa):
        assert np.linalg.norm(steering_vector(doa, 64)) == pytest.approx(1.0, abs=1e-12)

    def test_vectorised_shape(self):
        assert steering_vector(np.zeros((2, 3)), 5).shape == (2, 3, 5)


class TestSpatialDoa:
    def test_examples(self):
        assert spatial_doa(0.8, 300e9, 300e9) == 0.8
        assert spatial_doa(0.8, 1.025 * 300e9, 300e9) == pytest.approx(0.82)
        assert spatial_doa(0.0, 310e9, 300e9) == 0.0

    def test_rejects_nonpositive_frequency(self):
        with pytest.raises(ValueError):
            spatial_doa(0.1, 0.0, 300e9)


class TestGenerateChannel:
    def test_single_path_equals_scaled_steering(self):
        f = np.array([300e9])
        h, _ = channel_from_paths([[0.25]], [[1.0]], [[0.0]], f, 300e9, 64)
        np.testing.assert_allclose(h[0, 0], 8.0 * steering_vector(0.25, 64), atol=1e-12)

    def test_paper_shape(self):
        real = generate_channel(PAPER_PROFILE.replace(num_users=1, num_subcarriers=2),
                                child_rng(0, "c"))
        assert real.channels.shape == (1, 2, 1024)

    @given(gain=st.complex_numbers(min_magnitude=0.01, max_magnitude=10),
           doa=st.floats(-0.99, 0.99), tau=st.floats(0, 2e-8))
    @settings(max_examples=50)
    def test_single_path_norm(self, gain, doa, tau):
        f = subcarrier_frequencies(DESK_PROFILE)
        h, _ = channel_from_paths([[doa]], [[gain]], [[tau]], f, 300e9, 64)
        np.testing.assert_allclose(np.linalg.norm(h, axis=-1), 8.0 * abs(gain), rtol=1e-10)

    @given(seed=st.integers(0, 2 ** 32))
    @settings(max_examples=25, deadline=None)
    def test_spatial_doa_invariant(self, seed):
        real = generate_channel(DESK_PROFILE, child_rng(seed, "c"))
        expect = real.frequencies[None, :, None] / real.carrier_freq_hz \
            * real.physical_doas[:, None, :]
        assert np.array_equal(real.spatial_doas, expect)
        assert np.all(np.isfinite(real.channels))
        assert np.all(np.linalg.norm(real.channels, axis=-1) > 0)
        assert np.all(np.abs(real.physical_doas) < 1) and np.all(real.delays >= 0)

    def test_beam_split_magnitude(self):
        cfg = PAPER_PROFILE
        f = subcarrier_frequencies(cfg)
        split = np.max(np.abs(spatial_doa(1.0, f, cfg.carrier_freq_hz) - 1.0))
        B, M, fc = cfg.bandwidth_hz, cfg.num_subcarriers, cfg.carrier_freq_hz
        assert split == pytest.approx(B * (M - 1) / (2 * M * fc), rel=1e-12)
        assert split == pytest.approx(0.0248, abs=1e-4)

    def test_reproducible(self):
        a = generate_channel(DESK_PROFILE, child_rng(3, "c"))
        b = generate_channel(DESK_PROFILE, child_rng(3, "c"))
        assert np.array_equal(a.channels, b.channels)

    def test_sectors(self):
        K = DESK_PROFILE.num_users
        real = generate_channel(DESK_PROFILE, child_rng(0, "c"),
                                [user_sector(k, K) for k in range(K)])
        for k in range(K):
            lo, hi = user_sector(k, K)
            assert np.all((real.physical_doas[k] >= lo) & (real.physical_doas[k] < hi))

    def test_gain_magnitudes(self):
        real = generate_channel(DESK_PROFILE.replace(num_users=50), child_rng(0, "c"))
        np.testing.assert_allclose(np.abs(real.gains[:, 0]), 1.0)
        nlos = np.abs(real.gains[:, 1:])
        assert nlos.min() >= 0.1 and nlos.max() <= 0.4

    def test_bad_sector(self):
        with pytest.raises(ValueError):
            generate_channel(DESK_PROFILE, child_rng(0, "c"), (0.5, 0.2))

    def test_user_sector(self):
        assert user_sector(0, 8) == (-1.0, -0.75)


class TestPhysicalPath:
    def test_validation(self):
        with pytest.raises(ValueError):
            PhysicalPath(1.5, 1.0, 0.0)
        with pytest.raises(ValueError):
            PhysicalPath(0.1, 1.0, -1e-9)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        real = generate_channel(DESK_PROFILE, child_rng(0, "c"))
        save_realization(real, tmp_path / "r.bin")
        back = load_realization(tmp_path / "r.bin")
        for name in ("channels", "physical_doas", "gains", "delays", "spatial_doas",
                     "frequencies"):
            assert np.array_equal(getattr(real, name), getattr(back, name))

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"nope" * 10)
        with pytest.raises(ValueError):
            load_realization(tmp_path / "x")
