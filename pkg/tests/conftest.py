import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ctxsel.config import RunConfig, from_dict

settings.register_profile("ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

ROOT = Path(__file__).resolve().parents[1]
CANONICAL = ROOT / "configs" / "canonical.json"


def canonical_config(**overrides) -> RunConfig:
    data = json.loads(CANONICAL.read_text())
    data.update(overrides)
    return from_dict(RunConfig, data)


def central_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2 * h)
    return out


def max_rel_err(a, b, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def canonical_training():
    """Scene-1 training on the canonical config: (config, env, state, params, opt, segment, trace, oracle, seconds)."""
    import time

    from ctxsel.experiment import init_policy
    from ctxsel.grpo import train_scene
    from ctxsel.synthenv import build_env, oracle_best_selection

    cfg = canonical_config()
    env = build_env(cfg.env_spec())
    state = env.initial_state()
    prompt = env.prompt(1)
    oracle = oracle_best_selection(env, state, prompt, cfg.k, cfg.rewards)
    params, opt = init_policy(cfg)
    t0 = time.perf_counter()
    params, opt, seg, trace = train_scene(
        state, prompt, params, opt, env.generator, env.providers, cfg.grpo,
        k=cfg.k, scene=1, base_seed=cfg.seed, reward_config=cfg.rewards, oracle_set=oracle[0], jobs=1,
    )
    return cfg, env, state, params, opt, seg, trace, oracle, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
