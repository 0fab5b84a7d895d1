"""Learned top-k context selection for segment-wise autoregressive generation.

A scoring network ranks history tokens, a Plackett-Luce policy samples which
ones the generator may attend to, and group-relative policy optimisation
trains the network against content, prompt-alignment and artifact rewards.
"""

from .baselines import STRATEGIES, baseline_select
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .exceptions import (
    BudgetError,
    CapacityError,
    ConfigError,
    CorruptionError,
    CtxSelError,
    DegenerateVectorError,
    EmptyContextError,
    MigrationError,
    NumericError,
)
from .experiment import run_experiment
from .generator import Geometry, NoiseSchedule, ToyGenerator, append_segment, denoise_segment
from .grpo import GrpoConfig, compute_advantages, grpo_objective, train_scene
from .plackett_luce import RankingSelection, enumerate_pl_distribution, pl_logprob, pl_logprob_grad, sample_topk
from .policy import PolicyConfig, init_params, score_context
from .rewards import RewardConfig, cross_scene_sim, hybrid_reward
from .selector import BaselineSelector, ContextSelector
from .synthenv import EnvSpec, build_env, oracle_best_selection

__version__ = "0.1.0"

__all__ = [
    "STRATEGIES",
    "baseline_select",
    "load_checkpoint",
    "save_checkpoint",
    "RunConfig",
    "load_config",
    "BudgetError",
    "CapacityError",
    "ConfigError",
    "CorruptionError",
    "CtxSelError",
    "DegenerateVectorError",
    "EmptyContextError",
    "MigrationError",
    "NumericError",
    "run_experiment",
    "Geometry",
    "NoiseSchedule",
    "ToyGenerator",
    "append_segment",
    "denoise_segment",
    "GrpoConfig",
    "compute_advantages",
    "grpo_objective",
    "train_scene",
    "RankingSelection",
    "enumerate_pl_distribution",
    "pl_logprob",
    "pl_logprob_grad",
    "sample_topk",
    "PolicyConfig",
    "init_params",
    "score_context",
    "RewardConfig",
    "cross_scene_sim",
    "hybrid_reward",
    "BaselineSelector",
    "ContextSelector",
    "EnvSpec",
    "build_env",
    "oracle_best_selection",
]
