"""Run configuration: nested dataclasses loaded strictly from JSON."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import STRATEGIES
from .exceptions import ConfigError
from .generator import Geometry, NoiseSchedule
from .grpo import GrpoConfig
from .rewards import RewardConfig
from .synthenv import EnvSpec

__all__ = ["EnvParams", "PolicyArch", "BaselineParams", "RunConfig", "load_config", "from_dict", "to_dict"]


@dataclass(frozen=True)
class EnvParams:
    """Synthetic-environment constants (geometry, schedule and scene count live on RunConfig)."""

    seed: int = 0
    id_dim: int = 2
    sem_dim: int = 4
    n_subject: int = 3
    n_background: int = 3
    n_distractor: int = 2
    token_noise: float = 0.05
    bg_semantic: float = 1.0
    bg_texture: float = 0.3
    distractor_norm: float = 3.0
    blend: float = 0.25
    leak: float = 0.5
    key_gain: float = 2.0
    query_noise_gain: float = 0.3
    shuffle_layout: bool = True


@dataclass(frozen=True)
class PolicyArch:
    n_cross: int = 1
    n_linear: int = 2


@dataclass(frozen=True)
class BaselineParams:
    anchor_frames: int = 1
    recent_frames: typing.Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    k: int = 3
    strategy: str = "policy"
    n_scenes: int = 4
    output_dir: str = "runs/default"
    geometry: Geometry = field(default_factory=lambda: Geometry(n=8, h=1, w=1, dim=16))
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    env: EnvParams = field(default_factory=EnvParams)
    policy: PolicyArch = field(default_factory=PolicyArch)
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    baseline: BaselineParams = field(default_factory=BaselineParams)
    reset_policy_per_scene: bool = False
    jobs: int = 1
    record_time: bool = False

    def __post_init__(self):
        if self.strategy != "policy" and self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.k > self.geometry.tokens_per_segment:
            raise ConfigError("k exceeds the history available at scene 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def env_spec(self) -> EnvSpec:
        return EnvSpec(
            geometry=self.geometry,
            schedule=self.schedule,
            n_scenes=self.n_scenes,
            **dataclasses.asdict(self.env),
        )


def _convert(tp, value, where: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return from_dict(tp, value, where)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return None if value is None else _convert(args[0], value, where)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        (inner, _) = typing.get_args(tp)
        return tuple(_convert(inner, v, where) for v in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp}")


def from_dict(cls, data: dict, where: str = "config"):
    """Build dataclass ``cls`` from ``data``; unknown keys are errors."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {k: _convert(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def to_dict(obj) -> dict:
    def fix(v):
        if isinstance(v, tuple):
            return [fix(x) for x in v]
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        return v

    return fix(dataclasses.asdict(obj))


def load_config(path, **overrides) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return from_dict(RunConfig, data)
