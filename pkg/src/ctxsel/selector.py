"""Estimator-style front ends: a trainable context selector and the rule-based baselines.

Both follow the scikit-learn conventions (constructor arguments are
hyper-parameters, learned state ends with ``_``, ``get_params``/``set_params``
work), so they can be cloned, grid-searched and compared side by side.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .baselines import STRATEGIES, baseline_select
from .exceptions import ConfigError, ShapeError
from .generator import GenerationState, ToyGenerator
from .grpo import AdamState, GrpoConfig, greedy_topk, train_scene
from .plackett_luce import RankingSelection, sample_topk
from .policy import PolicyConfig, PolicyParams, init_params, score_context
from .rewards import Providers, RewardConfig

__all__ = ["ContextSelector", "BaselineSelector", "check_history", "check_prompt"]


def check_history(history, dim: int | None = None) -> np.ndarray:
    h = check_array(history, dtype=np.float64, ensure_2d=True)
    if dim is not None and h.shape[1] != dim:
        raise ShapeError(f"history has {h.shape[1]} features, expected {dim}")
    return h


def check_prompt(prompt, dim: int | None = None) -> np.ndarray:
    p = check_array(np.atleast_2d(prompt), dtype=np.float64)
    if dim is not None and p.shape[1] != dim:
        raise ShapeError(f"prompt has {p.shape[1]} features, expected {dim}")
    return p


class ContextSelector(BaseEstimator):
    """Learned top-k context selection, trained per scene by GRPO.

    Parameters
    ----------
    k : int
        Number of history tokens kept as context.
    dim : int
        Token feature width.
    n_cross, n_linear : int
        Cross-attention blocks and linear layers in the scoring network.
    group_size, n_iter, learning_rate, clip_range, inner_epochs, weight_decay, std_floor
        GRPO and AdamW settings for each call to :meth:`fit`.
    random_state : int
        Seed for parameter initialisation and for every rollout stream.
    warm_start : bool
        Keep training the current parameters on the next :meth:`fit` call
        instead of re-initialising.
    n_jobs : int
        Threads used for the rollouts of one group.
    """

    def __init__(
        self,
        k=3,
        dim=16,
        n_cross=1,
        n_linear=2,
        group_size=10,
        n_iter=20,
        learning_rate=1e-3,
        clip_range=0.2,
        inner_epochs=1,
        weight_decay=0.01,
        std_floor=1e-6,
        random_state=0,
        warm_start=True,
        n_jobs=1,
    ):
        self.k = k
        self.dim = dim
        self.n_cross = n_cross
        self.n_linear = n_linear
        self.group_size = group_size
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.clip_range = clip_range
        self.inner_epochs = inner_epochs
        self.weight_decay = weight_decay
        self.std_floor = std_floor
        self.random_state = random_state
        self.warm_start = warm_start
        self.n_jobs = n_jobs

    def grpo_config(self) -> GrpoConfig:
        return GrpoConfig(
            group_size=self.group_size,
            clip=self.clip_range,
            learning_rate=self.learning_rate,
            iterations=self.n_iter,
            inner_epochs=self.inner_epochs,
            std_floor=self.std_floor,
            weight_decay=self.weight_decay,
        )

    def initialize(self) -> "ContextSelector":
        cfg = PolicyConfig(self.dim, self.n_cross, self.n_linear)
        rng = np.random.default_rng(np.random.SeedSequence([self.random_state, 0x1417]))
        self.params_ = init_params(cfg, rng)
        self.opt_state_ = AdamState()
        self.trace_ = []
        return self

    def fit(
        self,
        state: GenerationState,
        prompt,
        *,
        generator: ToyGenerator,
        providers: Providers,
        scene: int = 1,
        reward_config: RewardConfig | None = None,
        oracle_set=None,
        start_iteration: int = 0,
        stop_iteration: int | None = None,
        record_time: bool = False,
    ) -> "ContextSelector":
        """Train on one scene. The greedily selected segment is stored in ``segment_``."""
        if not self.warm_start or not hasattr(self, "params_"):
            self.initialize()
        prompt = check_prompt(prompt, self.dim)
        self.params_, self.opt_state_, self.segment_, trace = train_scene(
            state,
            prompt,
            self.params_,
            self.opt_state_,
            generator,
            providers,
            self.grpo_config(),
            k=self.k,
            scene=scene,
            base_seed=self.random_state,
            reward_config=reward_config,
            start_iteration=start_iteration,
            stop_iteration=stop_iteration,
            oracle_set=oracle_set,
            jobs=self.n_jobs,
            record_time=record_time,
        )
        self.trace_ = list(self.trace_) + trace
        return self

    def decision_function(self, history, prompt) -> np.ndarray:
        """Per-token scores."""
        check_is_fitted(self, "params_")
        return score_context(
            self.params_, check_history(history, self.dim), check_prompt(prompt, self.dim)
        )

    def predict(self, history, prompt) -> tuple[int, ...]:
        """Greedy top-k token indices, highest score first."""
        return greedy_topk(self.decision_function(history, prompt), self.k)

    def sample(self, history, prompt, rng: np.random.Generator) -> RankingSelection:
        return sample_topk(self.decision_function(history, prompt), self.k, rng)

    def set_policy(self, params: PolicyParams, opt_state: AdamState | None = None) -> "ContextSelector":
        """Install parameters (e.g. from a checkpoint)."""
        cfg = params.config
        if (cfg.dim, cfg.n_cross, cfg.n_linear) != (self.dim, self.n_cross, self.n_linear):
            raise ConfigError("checkpoint architecture differs from the estimator's")
        params.validate()
        self.params_ = params
        self.opt_state_ = opt_state or AdamState()
        if not hasattr(self, "trace_"):
            self.trace_ = []
        return self


class BaselineSelector(BaseEstimator):
    """Fixed-rule selection with the same ``predict`` surface as :class:`ContextSelector`.

    There is nothing to learn; :meth:`fit` only validates the settings.
    """

    def __init__(self, strategy="sliding_window", k=3, tokens_per_frame=1, anchor_frames=1, recent_frames=None):
        self.strategy = strategy
        self.k = k
        self.tokens_per_frame = tokens_per_frame
        self.anchor_frames = anchor_frames
        self.recent_frames = recent_frames

    def fit(self, *args, **kwargs) -> "BaselineSelector":
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        self.fitted_ = True
        return self

    def select(self, history_length: int, rng: np.random.Generator | None = None) -> RankingSelection:
        return baseline_select(
            self.strategy,
            history_length,
            self.k,
            rng,
            tokens_per_frame=self.tokens_per_frame,
            anchor_frames=self.anchor_frames,
            recent_frames=self.recent_frames,
        )

    def predict(self, history, prompt=None, rng: np.random.Generator | None = None) -> tuple[int, ...]:
        h = check_history(history)
        return self.select(h.shape[0], rng).indices
