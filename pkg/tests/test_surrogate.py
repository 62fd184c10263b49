"""DeepONet surrogate: forward pass, serialization, resampling."""

import numpy as np
import pytest

from nopf import (SurrogateArchitecture, forward, forward_batch, init_params,
                  load_params, resample_profile, save_params, trunk_basis)
from nopf.surrogate import WeightFileError, branch_features

SMALL = SurrogateArchitecture(state_dim=2, input_grid_size=9,
                              branch_layers=(16, 16), trunk_layers=(12,),
                              latent_dim=5, activation="tanh")


def random_params(seed=0, arch=SMALL):
    params = init_params(arch, seed=seed)
    rng = np.random.default_rng(seed + 1)
    params.input_mean = rng.normal(size=arch.branch_input_dim)
    params.input_scale = rng.uniform(0.5, 2.0, arch.branch_input_dim)
    params.output_mean = rng.normal(size=arch.state_dim)
    params.output_scale = rng.uniform(0.5, 2.0, arch.state_dim)
    params.creation_seed = seed
    return params


def random_query(rng, arch=SMALL):
    return (rng.normal(size=arch.state_dim), rng.normal(size=arch.input_grid_size),
            float(rng.uniform(0.5, 3.0)))


class TestArchitecture:
    def test_widths(self):
        assert SMALL.branch_dims == (12, 16, 16, 10)
        assert SMALL.trunk_dims == (1, 12, 5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            SurrogateArchitecture(latent_dim=0)
        with pytest.raises(ValueError):
            SurrogateArchitecture(branch_layers=(0,))
        with pytest.raises(ValueError):
            SurrogateArchitecture(activation="sigmoid")

    def test_roundtrip_dict(self):
        assert SurrogateArchitecture.from_dict(SMALL.to_dict()) == SMALL


class TestForward:
    def test_zero_weights_output_bias(self):
        params = init_params(SMALL, seed=0)
        for w, b in params.branch_weights + params.trunk_weights:
            w[:] = 0.0
            b[:] = 0.0
        params.output_bias = np.array([1.5, -2.0])
        out = forward(params, np.zeros(2), np.zeros(9), 1.0, [0.0, 0.4, 1.0])
        assert np.allclose(out, [[1.5, -2.0]] * 3, atol=0)

    def test_per_point_independence(self):
        params = random_params(3)
        rng = np.random.default_rng(4)
        state, profile, d_hat = random_query(rng)
        single = forward(params, state, profile, d_hat, [0.3])
        many = forward(params, state, profile, d_hat, [0.1, 0.3, 0.9])
        assert np.array_equal(single[0], many[1])

    def test_determinism(self):
        params = random_params(5)
        rng = np.random.default_rng(6)
        state, profile, d_hat = random_query(rng)
        s = np.linspace(0, 1, 7)
        a = forward(params, state, profile, d_hat, s)
        b = forward(params, state, profile, d_hat, s)
        assert np.array_equal(a, b)

    def test_basis_cache_matches(self):
        params = random_params(7)
        rng = np.random.default_rng(8)
        state, profile, d_hat = random_query(rng)
        s = np.linspace(0, 1, 11)
        basis = trunk_basis(params, s)
        assert np.array_equal(forward(params, state, profile, d_hat, s, basis=basis),
                              forward(params, state, profile, d_hat, s))

    def test_batch_matches_single(self):
        params = random_params(9)
        rng = np.random.default_rng(10)
        states = rng.normal(size=(6, 2))
        profiles = rng.normal(size=(6, 9))
        d_hats = rng.uniform(0.5, 3, 6)
        s = np.linspace(0, 1, 5)
        batch = forward_batch(params, states, profiles, d_hats, s)
        for i in range(6):
            single = forward(params, states[i], profiles[i], d_hats[i], s)
            assert np.allclose(batch[i], single, rtol=1e-12, atol=1e-12)

    def test_normalization_consistency(self):
        # stored statistics equal explicit pre-normalization with identity stats
        params = random_params(11)
        ident = random_params(11)
        ident.input_mean = np.zeros_like(params.input_mean)
        ident.input_scale = np.ones_like(params.input_scale)
        rng = np.random.default_rng(12)
        state, profile, d_hat = random_query(rng)
        feats = (branch_features(state, profile, d_hat) - params.input_mean) / params.input_scale
        n, g = 2, 9
        out_a = forward(params, state, profile, d_hat, [0.5])
        out_b = forward(ident, feats[:n], feats[n:n + g], feats[n + g], [0.5])
        assert np.allclose(out_a, out_b, atol=1e-13)

    def test_shape_validation(self):
        params = random_params(13)
        with pytest.raises(ValueError, match="profile"):
            forward(params, np.zeros(2), np.zeros(5), 1.0, [0.5])
        with pytest.raises(ValueError, match="state"):
            forward(params, np.zeros(3), np.zeros(9), 1.0, [0.5])
        with pytest.raises(ValueError, match="coordinates"):
            forward(params, np.zeros(2), np.zeros(9), 1.0, [1.5])

    def test_non_finite_output_raises(self):
        params = random_params(14)
        # poison the final (linear) branch layer so the inf reaches the output
        params.branch_weights[-1][0][:, 0] = np.inf
        with pytest.raises(FloatingPointError):
            forward(params, np.ones(2), np.ones(9), 1.0, [0.5])


class TestResample:
    def test_identity_same_size(self):
        u = np.arange(7.0)
        out = resample_profile(u, 7)
        assert np.array_equal(out, u)
        assert out is not u

    def test_linear_exact(self):
        src = np.linspace(0, 1, 11)
        out = resample_profile(src, 29)
        assert np.allclose(out, np.linspace(0, 1, 29), atol=1e-15)

    def test_constant(self):
        assert np.allclose(resample_profile(np.full(5, 2.5), 17), 2.5)

    def test_too_small(self):
        with pytest.raises(ValueError):
            resample_profile(np.ones(5), 1)


class TestSerialization:
    def test_roundtrip_bit_exact(self, tmp_path):
        params = random_params(20)
        path = tmp_path / "weights.nopf"
        save_params(params, path)
        loaded = load_params(path)
        rng = np.random.default_rng(21)
        s = np.linspace(0, 1, 9)
        for _ in range(100):
            state, profile, d_hat = random_query(rng)
            a = forward(params, state, profile, d_hat, s)
            b = forward(loaded, state, profile, d_hat, s)
            assert np.array_equal(a, b)
        assert loaded.creation_seed == 20

    def test_truncated_file(self, tmp_path):
        params = random_params(22)
        path = tmp_path / "weights.nopf"
        save_params(params, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-17])
        with pytest.raises(WeightFileError, match="truncated"):
            load_params(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "weights.nopf"
        path.write_bytes(b"JUNK!" + b"\x00" * 64)
        with pytest.raises(WeightFileError, match="magic"):
            load_params(path)

    def test_trailing_bytes(self, tmp_path):
        params = random_params(23)
        path = tmp_path / "weights.nopf"
        save_params(params, path)
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(WeightFileError, match="trailing"):
            load_params(path)

    def test_mismatched_grid_size_names_field(self, tmp_path):
        import json
        import struct
        params = random_params(24)
        path = tmp_path / "weights.nopf"
        save_params(params, path)
        blob = path.read_bytes()
        (meta_len,) = struct.unpack("<I", blob[5:9])
        meta = json.loads(blob[9:9 + meta_len])
        meta["architecture"]["input_grid_size"] = 99  # inconsistent with payload
        new_meta = json.dumps(meta, sort_keys=True).encode()
        path.write_bytes(blob[:5] + struct.pack("<I", len(new_meta)) + new_meta
                         + blob[9 + meta_len:])
        with pytest.raises(WeightFileError, match="input_grid_size"):
            load_params(path)

    def test_save_is_deterministic(self, tmp_path):
        params = random_params(25)
        p1 = tmp_path / "a.nopf"
        p2 = tmp_path / "b.nopf"
        save_params(params, p1)
        save_params(params, p2)
        assert p1.read_bytes() == p2.read_bytes()
