"""Wall rounding, distribution diagnostics, and the packed weight format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from volumize.data import gen_blobs
from volumize.errors import CheckpointError, ConfigError, DomainError
from volumize.linalg import SeededRng, he_uniform_init, stable_hash
from volumize.net import LayerSpec, init_network
from volumize.optimizers import OptimizerSpec
from volumize.quantizer import (
    QuantizationScheme,
    load_quantized_weights,
    mass_near_walls,
    quantize,
    quantize_network,
    quantized_training,
    save_quantized_weights,
    weight_histogram,
)
from volumize.training import train_model
from volumize.volumization import VolumizationConfig, derive_layer_volumes

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


# --- quantize -----------------------------------------------------------

class TestQuantize:
    def test_ternary_example(self):
        got = quantize([0.6, 0.3, -0.3, -0.7], 1.0, "ternary")
        assert_array_equal(got, [1.0, 0.0, 0.0, -1.0])

    def test_binary_example(self):
        got = quantize([0.0, 0.3, -0.7], 1.0, "binary")
        assert_array_equal(got, [1.0, 1.0, -1.0])

    def test_binary_tie_goes_positive(self):
        assert quantize(np.array([0.0]), 0.25, "binary")[0] == 0.25
        assert quantize(np.array([-0.0]), 0.25, "binary")[0] == 0.25

    def test_ternary_band_is_closed(self):
        # exactly V/2 in magnitude still rounds to zero, on both sides
        got = quantize([0.5, -0.5, np.nextafter(0.5, 1.0)], 1.0, "ternary")
        assert_array_equal(got, [0.0, 0.0, 1.0])

    @given(st.lists(finite, min_size=1, max_size=32),
           st.floats(min_value=1e-3, max_value=1e3),
           st.sampled_from(["binary", "ternary"]))
    @settings(max_examples=200, deadline=None)
    def test_codomain_and_idempotence(self, ws, vol, mode):
        w = np.array(ws)
        q = quantize(w, vol, mode)
        walls = {-vol, vol} if mode == "binary" else {-vol, 0.0, vol}
        assert set(np.unique(q)) <= walls
        assert_array_equal(quantize(q, vol, mode), q)

    @given(st.lists(finite, min_size=1, max_size=32),
           st.floats(min_value=1e-3, max_value=1e3),
           st.sampled_from(["binary", "ternary"]))
    @settings(max_examples=200, deadline=None)
    def test_odd_away_from_the_tie(self, ws, vol, mode):
        w = np.array(ws)
        w = w[w != 0.0]
        assert_array_equal(quantize(-w, vol, mode), -quantize(w, vol, mode))

    def test_shape_preserved(self):
        w = np.arange(12, dtype=float).reshape(3, 4) - 6.0
        assert quantize(w, 2.0, "ternary").shape == (3, 4)

    @pytest.mark.parametrize("vol", [0.0, -1.0, -np.inf])
    def test_rejects_nonpositive_vol(self, vol):
        with pytest.raises(DomainError):
            quantize([0.1], vol, "binary")

    def test_rejects_unknown_mode(self):
        with pytest.raises(ConfigError):
            quantize([0.1], 1.0, "trinary")


class TestQuantizeNetwork:
    def test_rounds_weights_and_biases_in_place(self, rng):
        net = init_network([LayerSpec(6, 10, activation="relu"),
                            LayerSpec(10, 3)], rng)
        cfg = VolumizationConfig(v=0.5, alpha=0.5)
        vols = derive_layer_volumes(net, cfg)
        by_name = {lv.tensor: lv.vol for lv in vols}
        quantize_network(net, vols, "ternary")
        for name, t in net.param_tensors():
            v = by_name[name]
            assert set(np.unique(t)) <= {-v, 0.0, v}

    def test_missing_volume_entry(self, small_net):
        cfg = VolumizationConfig(v=0.5, alpha=0.5)
        vols = derive_layer_volumes(small_net, cfg)[:-1]
        with pytest.raises(ConfigError):
            quantize_network(small_net, vols, "binary")


# --- distribution diagnostics -------------------------------------------

class TestMassNearWalls:
    def test_all_on_walls(self):
        assert mass_near_walls([0.7, -0.7, 0.7], 0.7) == 1.0

    def test_none_near_walls(self):
        assert mass_near_walls([0.0, 0.1, -0.2], 1.0) == 0.0

    def test_band_is_relative_to_vol(self):
        # |w| within 5% of V counts; 0.94 does not, 0.96 does (V=1)
        assert mass_near_walls([0.94], 1.0, delta=0.05) == 0.0
        assert mass_near_walls([0.96], 1.0, delta=0.05) == 1.0
        assert mass_near_walls([-0.96], 1.0, delta=0.05) == 1.0

    def test_fresh_uniform_layer_matches_truncated_band(self):
        # w ~ U(-a, a) with walls at V = a: only the inward half of the
        # +-delta band lies in the support, so the expected mass is delta
        w, a = he_uniform_init(SeededRng(77), 400, 400, fan=400)
        got = mass_near_walls(w, a, delta=0.05)
        assert got == pytest.approx(0.05, abs=0.01)

    def test_empty_is_zero(self):
        assert mass_near_walls(np.empty(0), 1.0) == 0.0

    def test_vol_and_delta_validation(self):
        with pytest.raises(DomainError):
            mass_near_walls([0.1], 0.0)
        with pytest.raises(DomainError):
            mass_near_walls([0.1], 1.0, delta=1.0)
        with pytest.raises(DomainError):
            mass_near_walls([0.1], 1.0, delta=0.0)


class TestWeightHistogram:
    def test_counts_cover_every_parameter(self, small_net):
        hists = weight_histogram(small_net, bins=16)
        assert len(hists) == len(small_net.layers)
        for h, layer in zip(hists, small_net.layers):
            assert h.counts.sum() == layer.w.size + layer.b.size
            assert len(h.bin_edges) == 17

    def test_range_is_symmetric(self, small_net):
        for h in weight_histogram(small_net):
            assert h.bin_edges[0] == -h.bin_edges[-1]

    def test_mass_without_vols_is_nan(self, small_net):
        for h in weight_histogram(small_net):
            assert np.isnan(h.mass_near_walls)
            assert np.isnan(h.vol)

    def test_mass_with_vols(self, small_net):
        cfg = VolumizationConfig(v=0.5, alpha=0.5)
        vols = derive_layer_volumes(small_net, cfg)
        for layer in small_net.layers:
            layer.w[...] = np.sign(layer.w)  # park far outside the band
        hists = weight_histogram(small_net, vols=vols)
        by_name = {lv.tensor: lv.vol for lv in vols}
        for i, h in enumerate(hists):
            assert h.vol == by_name[f"layer{i}.weight"]
            assert 0.0 <= h.mass_near_walls <= 1.0

    def test_rejects_tiny_bin_count(self, small_net):
        with pytest.raises(ConfigError):
            weight_histogram(small_net, bins=2)


# --- quantized training --------------------------------------------------

def _toy_data():
    return gen_blobs(SeededRng(stable_hash("quant-data")), n_classes=3,
                     n_per_class=30, dim=5, spread=0.5)


class TestQuantizedTraining:
    def test_period_beyond_horizon_matches_plain_training(self, sgd_spec):
        data = _toy_data()
        cfg = VolumizationConfig(v=0.5, alpha=0.5)
        seed = stable_hash("quant-plain")
        net_a = init_network([LayerSpec(5, 12, activation="relu"), LayerSpec(12, 3)], SeededRng(seed))
        net_b = init_network([LayerSpec(5, 12, activation="relu"), LayerSpec(12, 3)], SeededRng(seed))
        plain = train_model(net_a, data, sgd_spec, cfg,
                            SeededRng(seed).spawn("train"), epochs=6, batch_size=16)
        res = quantized_training(net_b, data, sgd_spec, cfg,
                                 QuantizationScheme("ternary", period_epochs=100),
                                 SeededRng(seed).spawn("train"), epochs=6, batch_size=16)
        assert res.quantize_epochs == []
        assert res.trajectory.train_loss == plain.train_loss
        assert_array_equal(res.float_net.layers[0].w, net_a.layers[0].w)

    def test_rounding_epochs_and_final_epoch_exempt(self, sgd_spec):
        data = _toy_data()
        cfg = VolumizationConfig(v=0.5, alpha=0.0)
        net = init_network([LayerSpec(5, 12, activation="relu"), LayerSpec(12, 3)], SeededRng(3))
        res = quantized_training(net, data, sgd_spec, cfg,
                                 QuantizationScheme("ternary", period_epochs=2),
                                 SeededRng(3).spawn("train"), epochs=9, batch_size=16)
        assert res.quantize_epochs == [2, 4, 6, 8]

    def test_quantized_net_is_rounded_copy_of_float_net(self, sgd_spec):
        data = _toy_data()
        cfg = VolumizationConfig(v=0.5, alpha=0.0)
        net = init_network([LayerSpec(5, 12, activation="relu"), LayerSpec(12, 3)], SeededRng(5))
        res = quantized_training(net, data, sgd_spec, cfg,
                                 QuantizationScheme("binary", period_epochs=3),
                                 SeededRng(5).spawn("train"), epochs=7, batch_size=16)
        vols = derive_layer_volumes(res.float_net, cfg)
        want = res.float_net.clone()
        quantize_network(want, vols, "binary")
        for (_, a), (_, b) in zip(res.quantized_net.param_tensors(),
                                  want.param_tensors()):
            assert_array_equal(a, b)
        # float_net stayed un-rounded
        assert any(
            set(np.unique(t)) - {-lv.vol, 0.0, lv.vol}
            for (_, t), lv in zip(res.float_net.param_tensors(), vols)
        )

    @pytest.mark.parametrize("cfg", [
        VolumizationConfig(v=np.inf, alpha=0.5),
        VolumizationConfig(v=0.5, alpha=1.0),
        VolumizationConfig(v=0.0, alpha=0.5),
    ])
    def test_requires_active_walls(self, sgd_spec, cfg):
        net = init_network([LayerSpec(5, 12, activation="relu"), LayerSpec(12, 3)], SeededRng(1))
        with pytest.raises(ConfigError):
            quantized_training(net, _toy_data(), sgd_spec, cfg,
                               QuantizationScheme(), SeededRng(1).spawn("train"), epochs=4)

    def test_scheme_validation(self):
        with pytest.raises(ConfigError):
            QuantizationScheme(mode="octal")
        with pytest.raises(ConfigError):
            QuantizationScheme(period_epochs=0)


# --- packed on-disk format ----------------------------------------------

def _packed_net(seed=11):
    net = init_network([LayerSpec(7, 9, activation="tanh"), LayerSpec(9, 4)], SeededRng(seed))
    cfg = VolumizationConfig(v=0.4, alpha=0.5)
    return net, derive_layer_volumes(net, cfg)


class TestPackedFormat:
    @pytest.mark.parametrize("mode", ["binary", "ternary"])
    def test_round_trip_is_exact(self, tmp_path, mode):
        net, vols = _packed_net()
        path = tmp_path / "w.vzq"
        save_quantized_weights(path, net.param_tensors(), vols, mode)
        got_mode, tensors = load_quantized_weights(path)
        assert got_mode == mode
        by_name = {lv.tensor: lv.vol for lv in vols}
        assert [n for n, _ in tensors] == [n for n, _ in net.param_tensors()]
        for (name, got), (_, orig) in zip(tensors, net.param_tensors()):
            assert got.shape == orig.shape
            assert_array_equal(got, quantize(orig, by_name[name], mode))

    def test_two_bits_per_weight(self, tmp_path):
        # size should be dominated by the packed codes, not float storage
        net, vols = _packed_net()
        n = net.n_params
        p_bin = tmp_path / "b.vzq"
        p_ter = tmp_path / "t.vzq"
        save_quantized_weights(p_bin, net.param_tensors(), vols, "binary")
        save_quantized_weights(p_ter, net.param_tensors(), vols, "ternary")
        overhead = 200  # header + per-tensor names/dims/V + crc
        assert p_bin.stat().st_size <= n / 8 + overhead
        assert p_ter.stat().st_size <= n / 4 + overhead
        assert p_ter.stat().st_size > p_bin.stat().st_size

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.vzq"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="^integrity:"):
            load_quantized_weights(path)

    def test_corrupted_byte(self, tmp_path):
        net, vols = _packed_net()
        path = tmp_path / "w.vzq"
        save_quantized_weights(path, net.param_tensors(), vols, "ternary")
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="^integrity:"):
            load_quantized_weights(path)

    def test_unsupported_version(self, tmp_path):
        net, vols = _packed_net()
        path = tmp_path / "w.vzq"
        save_quantized_weights(path, net.param_tensors(), vols, "binary")
        blob = bytearray(path.read_bytes())
        blob[4] = 2  # version byte sits right after the magic
        import zlib
        blob[-4:] = (zlib.crc32(bytes(blob[4:-4])) & 0xFFFFFFFF).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="^version:"):
            load_quantized_weights(path)

    def test_truncated_file(self, tmp_path):
        net, vols = _packed_net()
        path = tmp_path / "w.vzq"
        save_quantized_weights(path, net.param_tensors(), vols, "binary")
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError):
            load_quantized_weights(path)

    def test_invalid_ternary_code_rejected(self, tmp_path):
        net, vols = _packed_net(seed=2)
        path = tmp_path / "w.vzq"
        save_quantized_weights(path, net.param_tensors(), vols, "ternary")
        blob = bytearray(path.read_bytes())
        # first tensor's codes start after:
        # magic4 ver1 mode1 count4 nlen2 name ndim1 dims4*2 V8
        name_len = len("layer0.weight")
        off = 4 + 1 + 1 + 4 + 2 + name_len + 1 + 8 + 8
        blob[off] |= 0b11
        import zlib
        blob[-4:] = (zlib.crc32(bytes(blob[4:-4])) & 0xFFFFFFFF).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="0b11"):
            load_quantized_weights(path)

    def test_save_rejects_bad_inputs(self, tmp_path):
        net, vols = _packed_net()
        with pytest.raises(ConfigError):
            save_quantized_weights(tmp_path / "x", net.param_tensors(), vols,
                                   "float8")
        with pytest.raises(ConfigError):
            save_quantized_weights(tmp_path / "x", net.param_tensors(),
                                   vols[:-1], "binary")
