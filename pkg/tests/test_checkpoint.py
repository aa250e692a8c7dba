"""Checkpoint container: bit-exact round-trips, aliases, sidecar config."""

import numpy as np
import pytest

from dualdec import checkpoint as C
from dualdec import model as M
from dualdec import tensor as T
from dualdec.model import ModelConfig, ModelParams


def tiny_params(seed=0):
    cfg = ModelConfig(vocab_size=23, hidden=8, heads=2, enc_layers=1,
                      und_layers=1, gen_layers=1, max_positions=12).validate()
    return ModelParams(cfg, seed=seed)


class TestContainer:
    def test_arrays_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "a": rng.normal(size=(3, 4)),
            "b.c": rng.normal(size=(7,)),
            "scalarish": rng.normal(size=(1,)),
        }
        path = tmp_path / "arrs.ckpt"
        C.save_arrays(path, arrays, aliases={"alias.a": "a"})
        loaded, aliases = C.load_arrays(path)
        assert aliases == {"alias.a": "a"}
        for name, arr in arrays.items():
            assert loaded[name].dtype == np.float64
            assert loaded[name].tobytes() == arr.astype("<f8").tobytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(C.CheckpointError):
            C.load_arrays(path)

    def test_alias_to_missing_target_rejected(self, tmp_path):
        with pytest.raises(C.CheckpointError):
            C.save_arrays(tmp_path / "x.ckpt", {"a": np.zeros(2)}, aliases={"q": "nope"})


class TestModelCheckpoint:
    def test_model_round_trip_forward_bit_identical(self, tmp_path):
        params = tiny_params(seed=4)
        ids = np.array([[2, 9, 10, 3]])
        pad = np.ones_like(ids, bool)
        with T.no_grad():
            before = M.understand(M.encode(ids, pad, params), pad, params).data
        path = tmp_path / "model.ckpt"
        C.save_model(path, params)
        loaded, leftover, _meta = C.load_model(path)
        assert leftover == {}
        with T.no_grad():
            after = M.understand(M.encode(ids, pad, loaded), pad, loaded).data
        assert np.array_equal(before, after)

    def test_sidecar_config_round_trip(self, tmp_path):
        params = tiny_params(seed=5)
        path = tmp_path / "model.ckpt"
        C.save_model(path, params, extra_meta={"note": "hello"})
        cfg, extra = C.read_sidecar(path)
        assert cfg == params.config
        assert extra["note"] == "hello"

    def test_extra_arrays_kept_separate(self, tmp_path):
        params = tiny_params(seed=6)
        head = {"head.cls.w": T.parameter(np.ones((8, 3)))}
        path = tmp_path / "ft.ckpt"
        C.save_model(path, params, extra_arrays=head)
        _params, leftover, _ = C.load_model(path)
        assert set(leftover) == {"head.cls.w"}
        assert np.array_equal(leftover["head.cls.w"], np.ones((8, 3)))

    def test_missing_array_detected(self, tmp_path):
        params = tiny_params(seed=7)
        arrays = {k: t.data for k, t in params.named().items()}
        arrays.pop("enc.0.attn.q.w")
        path = tmp_path / "broken.ckpt"
        C.save_arrays(path, arrays)
        C.write_sidecar(path, params.config)
        with pytest.raises(C.CheckpointError, match="enc.0.attn.q.w"):
            C.load_model(path)

    def test_missing_sidecar_detected(self, tmp_path):
        params = tiny_params(seed=8)
        path = tmp_path / "nosidecar.ckpt"
        C.save_arrays(path, {k: t.data for k, t in params.named().items()})
        with pytest.raises(C.CheckpointError, match="sidecar"):
            C.load_model(path)
