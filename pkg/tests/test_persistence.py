import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CANONICAL, canonical_config
from ctxsel.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from ctxsel.config import RunConfig, from_dict, load_config, to_dict
from ctxsel.exceptions import ConfigError, CorruptionError, MigrationError
from ctxsel.grpo import AdamState, GrpoConfig, adamw_step
from ctxsel.policy import PolicyConfig, PolicyParams, init_params
from ctxsel.textio import read_matrix, write_matrix


class TestConfig:
    def test_canonical_loads(self):
        cfg = load_config(CANONICAL)
        assert (cfg.k, cfg.geometry.n, cfg.grpo.group_size, cfg.rewards.e, cfg.rewards.q) == (3, 8, 10, 8, 16)

    def test_defaults_follow_published_settings(self):
        cfg = RunConfig()
        assert cfg.grpo.learning_rate == 1e-3 and cfg.grpo.iterations == 20 and cfg.grpo.group_size == 10
        assert (cfg.policy.n_cross, cfg.policy.n_linear) == (1, 2)
        assert cfg.schedule.T == 3

    def test_round_trip(self):
        cfg = canonical_config(seed=11, strategy="global_local")
        assert from_dict(RunConfig, json.loads(json.dumps(to_dict(cfg)))) == cfg

    @pytest.mark.parametrize("data", [{"sede": 1}, {"grpo": {"lr": 0.1}}, {"geometry": {"n": 4, "depth": 2}}])
    def test_unknown_keys(self, data):
        with pytest.raises(ConfigError, match="unknown"):
            from_dict(RunConfig, data)

    @pytest.mark.parametrize("data", [{"k": "3"}, {"k": 2.5}, {"record_time": 1}, {"grpo": 5}, {"schedule": {"alphas": 0.5}}])
    def test_type_errors(self, data):
        with pytest.raises(ConfigError):
            from_dict(RunConfig, data)

    @pytest.mark.parametrize("data", [{"strategy": "oracle"}, {"k": 0}, {"k": 9}, {"jobs": 0}, {"grpo": {"group_size": 1}}])
    def test_invalid_values(self, data):
        with pytest.raises(ConfigError):
            from_dict(RunConfig, data)

    def test_bad_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")
        (tmp_path / "list.json").write_text("[]")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "list.json")

    def test_overrides(self):
        cfg = load_config(CANONICAL, seed=5, jobs=None)
        assert cfg.seed == 5 and cfg.jobs == 1

    def test_every_field_addressable(self):
        data = to_dict(RunConfig())
        assert set(data) == {f for f in RunConfig.__dataclass_fields__}
        assert from_dict(RunConfig, data) == RunConfig()


def _random_state(seed, cfg=PolicyConfig(dim=6, n_cross=2, n_linear=3)):
    rng = np.random.default_rng(seed)
    p = init_params(cfg, rng)
    p = PolicyParams(cfg, {k: rng.normal(size=v.shape) for k, v in p.tensors.items()})
    _, opt = adamw_step(p.tensors, {k: rng.normal(size=v.shape) for k, v in p.tensors.items()}, AdamState(), GrpoConfig())
    return p, opt


class TestCheckpoint:
    @given(st.integers(0, 10_000))
    def test_round_trip(self, tmp_path_factory, seed):
        path = tmp_path_factory.mktemp("ck") / "a.ckpt"
        p, opt = _random_state(seed)
        save_checkpoint(p, opt, path)
        q, opt2 = load_checkpoint(path)
        assert q.config == p.config and opt2.step == opt.step
        for k in p.tensors:
            assert q.tensors[k].tobytes() == p.tensors[k].tobytes()
            assert opt2.m[k].tobytes() == opt.m[k].tobytes() and opt2.v[k].tobytes() == opt.v[k].tobytes()

    def test_fresh_optimizer_state(self, tmp_path):
        p, _ = _random_state(0)
        save_checkpoint(p, None, tmp_path / "a.ckpt")
        _, opt = load_checkpoint(tmp_path / "a.ckpt")
        assert opt.step == 0 and not opt.m

    def test_flipped_magic(self, tmp_path):
        p, opt = _random_state(1)
        save_checkpoint(p, opt, tmp_path / "a.ckpt")
        data = bytearray((tmp_path / "a.ckpt").read_bytes())
        data[0] ^= 0xFF
        (tmp_path / "a.ckpt").write_bytes(bytes(data))
        with pytest.raises(CorruptionError):
            load_checkpoint(tmp_path / "a.ckpt")

    @pytest.mark.parametrize("cut", [3, 12, 40, 200, 1])
    def test_truncated(self, tmp_path, cut):
        p, opt = _random_state(2)
        save_checkpoint(p, opt, tmp_path / "a.ckpt")
        data = (tmp_path / "a.ckpt").read_bytes()
        (tmp_path / "a.ckpt").write_bytes(data[: len(data) - cut] if cut > 3 else data[:cut])
        with pytest.raises(CorruptionError):
            load_checkpoint(tmp_path / "a.ckpt")

    def test_bit_flip_in_payload(self, tmp_path):
        p, opt = _random_state(3)
        save_checkpoint(p, opt, tmp_path / "a.ckpt")
        data = bytearray((tmp_path / "a.ckpt").read_bytes())
        data[len(data) // 2] ^= 0x01
        (tmp_path / "a.ckpt").write_bytes(bytes(data))
        with pytest.raises(CorruptionError):
            load_checkpoint(tmp_path / "a.ckpt")

    def test_version_mismatch(self, tmp_path):
        p, opt = _random_state(4)
        save_checkpoint(p, opt, tmp_path / "a.ckpt")
        data = bytearray((tmp_path / "a.ckpt").read_bytes())
        data[8:12] = struct.pack("<I", FORMAT_VERSION + 1)
        (tmp_path / "a.ckpt").write_bytes(bytes(data))
        with pytest.raises(MigrationError):
            load_checkpoint(tmp_path / "a.ckpt")

    def test_little_endian_float64_payload(self, tmp_path):
        cfg = PolicyConfig(dim=1, n_cross=1, n_linear=1)
        p = PolicyParams(cfg, {k: np.full(s, 0.5) for k, s in init_params(cfg, np.random.default_rng(0)).expected_shapes().items()})
        save_checkpoint(p, None, tmp_path / "a.ckpt")
        assert struct.pack("<d", 0.5) in (tmp_path / "a.ckpt").read_bytes()
        assert b"param/cross0.wq" in (tmp_path / "a.ckpt").read_bytes()


class TestMatrixFiles:
    @given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 1000))
    def test_round_trip_exact(self, tmp_path_factory, f, c, seed):
        path = tmp_path_factory.mktemp("m") / "x.txt"
        m = np.random.default_rng(seed).normal(size=(f, c)) * 10.0 ** np.random.default_rng(seed).integers(-300, 300)
        clips = list(range(0, f, 2))
        write_matrix(path, m, clips)
        back, clips_back = read_matrix(path)
        assert back.tobytes() == m.tobytes() and clips_back == clips

    def test_format(self, tmp_path):
        write_matrix(tmp_path / "x.txt", [[1.0, 0.1], [2.0, -3.0]], [0, 1])
        assert (tmp_path / "x.txt").read_text() == "2 2\n1 0.10000000000000001\n2 -3\nclips: 0 1\n"

    def test_without_clips(self, tmp_path):
        write_matrix(tmp_path / "x.txt", np.eye(2))
        assert read_matrix(tmp_path / "x.txt")[1] is None

    @pytest.mark.parametrize("text", ["", "2\n1 2\n", "2 2\n1 2\n", "1 2\n1 x\n", "1 1\n1\nnoise\n"])
    def test_malformed(self, tmp_path, text):
        (tmp_path / "x.txt").write_text(text)
        with pytest.raises(CorruptionError):
            read_matrix(tmp_path / "x.txt")
