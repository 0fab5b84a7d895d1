"""Rule-based context selection strategies used as baselines."""

from __future__ import annotations

import numpy as np

from .exceptions import BudgetError, ConfigError
from .plackett_luce import RankingSelection, pl_logprob

__all__ = ["STRATEGIES", "baseline_select"]

STRATEGIES = (
    "vanilla",
    "random_token",
    "random_frame",
    "sliding_window",
    "global_local",
    "random_global_local",
)


def _frames_budget(k: int, tokens_per_frame: int, strategy: str) -> int:
    if k % tokens_per_frame:
        raise ConfigError(f"{strategy}: k={k} is not a multiple of {tokens_per_frame} tokens per frame")
    return k // tokens_per_frame


def _frame_tokens(frames, tokens_per_frame: int) -> list[int]:
    return [f * tokens_per_frame + s for f in frames for s in range(tokens_per_frame)]


def baseline_select(
    strategy: str,
    history_length: int,
    k: int,
    rng: np.random.Generator | None = None,
    *,
    tokens_per_frame: int = 1,
    anchor_frames: int = 1,
    recent_frames: int | None = None,
) -> RankingSelection:
    """Select context tokens by a fixed rule.

    Frame-level strategies pick whole frames and need ``k`` to be a multiple
    of ``tokens_per_frame``. ``recent_frames`` sets how many of the
    non-anchor frames of ``random_global_local`` come from the most recent
    end (default: half, rounded up); the rest are drawn uniformly from the
    frames in between. The returned log-probability is that of a uniform
    ranking and carries no meaning for training.
    """
    L = history_length
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    if strategy == "vanilla":
        idx = list(range(L))
        return RankingSelection(tuple(idx), L, pl_logprob(np.zeros(L), idx))
    if not 1 <= k <= L:
        raise BudgetError(f"cannot select k={k} of {L} tokens")
    needs_rng = strategy.startswith("random")
    if needs_rng and rng is None:
        raise ConfigError(f"{strategy} needs a random generator")

    if strategy == "random_token":
        idx = [int(i) for i in rng.choice(L, size=k, replace=False)]
    elif strategy == "sliding_window":
        idx = list(range(L - k, L))
    else:
        tpf = tokens_per_frame
        n_frames = L // tpf
        budget = _frames_budget(k, tpf, strategy)
        if strategy == "random_frame":
            frames = [int(f) for f in rng.choice(n_frames, size=budget, replace=False)]
        else:
            anchors = list(range(min(anchor_frames, budget)))
            rest = budget - len(anchors)
            if strategy == "global_local":
                frames = anchors + list(range(n_frames - rest, n_frames))
            else:
                n_recent = (rest + 1) // 2 if recent_frames is None else min(recent_frames, rest)
                recent = list(range(n_frames - n_recent, n_frames))
                middle = [f for f in range(len(anchors), n_frames - n_recent)]
                n_mid = rest - n_recent
                if n_mid > len(middle):
                    raise BudgetError("not enough intermediate frames")
                mid = sorted(int(f) for f in rng.choice(middle, size=n_mid, replace=False)) if n_mid else []
                frames = anchors + mid + recent
            if len(set(frames)) != len(frames):
                raise BudgetError(f"{strategy}: anchor and recent frames overlap for k={k}, L={L}")
        idx = _frame_tokens(frames, tpf)
    return RankingSelection(tuple(idx), L, pl_logprob(np.zeros(L), idx))
