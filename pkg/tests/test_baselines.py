import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxsel.baselines import STRATEGIES, baseline_select
from ctxsel.exceptions import BudgetError, ConfigError


def test_sliding_window():
    assert baseline_select("sliding_window", 10, 3).indices == (7, 8, 9)


@pytest.mark.parametrize("L", [1, 5, 40])
def test_vanilla_takes_everything(L):
    assert baseline_select("vanilla", L, 3).indices == tuple(range(L))


def test_global_local():
    assert set(baseline_select("global_local", 10, 3).indices) == {0, 8, 9}


def test_global_local_multi_token_frames():
    sel = baseline_select("global_local", 12, 6, tokens_per_frame=2)
    assert sel.indices == (0, 1, 8, 9, 10, 11)


def test_random_global_local_structure():
    rng = np.random.default_rng(0)
    for _ in range(20):
        idx = baseline_select("random_global_local", 20, 6, rng).indices
        assert idx[0] == 0 and set(idx[-3:]) == {17, 18, 19}
        assert len(set(idx)) == 6 and all(0 < i < 17 for i in idx[1:3])


def test_random_global_local_recent_override():
    idx = baseline_select("random_global_local", 20, 5, np.random.default_rng(1), recent_frames=1).indices
    assert idx[0] == 0 and idx[-1] == 19 and len(idx) == 5


def test_random_frame_whole_frames():
    rng = np.random.default_rng(3)
    for _ in range(10):
        idx = baseline_select("random_frame", 12, 4, rng, tokens_per_frame=2).indices
        frames = [i // 2 for i in idx]
        assert all(frames.count(f) == 2 for f in set(frames))


@pytest.mark.parametrize("strategy", ["random_frame", "global_local", "random_global_local"])
def test_frame_divisibility(strategy):
    with pytest.raises(ConfigError):
        baseline_select(strategy, 12, 3, np.random.default_rng(0), tokens_per_frame=2)


def test_unknown_and_missing_rng():
    with pytest.raises(ConfigError):
        baseline_select("nearest", 10, 3)
    with pytest.raises(ConfigError):
        baseline_select("random_token", 10, 3)


def test_budget_exceeded():
    with pytest.raises(BudgetError):
        baseline_select("sliding_window", 2, 3)


@given(st.sampled_from([s for s in STRATEGIES if s != "vanilla"]), st.integers(1, 6), st.integers(0, 30), st.integers(0, 999))
def test_budget_conservation(strategy, k, extra, seed):
    L = k + extra + 1
    sel = baseline_select(strategy, L, k, np.random.default_rng(seed))
    assert sel.k == k and len(set(sel.indices)) == k
    assert all(0 <= i < L for i in sel.indices)


def test_random_strategies_seeded():
    a = baseline_select("random_token", 30, 5, np.random.default_rng(4)).indices
    b = baseline_select("random_token", 30, 5, np.random.default_rng(4)).indices
    assert a == b
