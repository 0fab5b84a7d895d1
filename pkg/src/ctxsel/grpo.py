"""Group-relative policy optimisation of the context-scoring network.

No KL term and no value network: advantages are rewards standardised within
the group, and the policy ascends the clipped importance-ratio surrogate.
"""

from __future__ import annotations

import logging
import math
import time
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, CtxSelError, InvalidSegmentError, NumericError, PreconditionError, ShapeError
from .generator import GenerationState, SegmentState, ToyGenerator, denoise_segment
from .plackett_luce import RankingSelection, pl_logprob, pl_logprob_grad, sample_topk
from .policy import PolicyParams, record_forward, score_context, score_context_backward
from .rewards import Providers, RewardBreakdown, RewardConfig, hybrid_reward

__all__ = [
    "GrpoConfig",
    "AdamState",
    "GroupRollout",
    "IterationStats",
    "rollout_rng",
    "compute_advantages",
    "grpo_objective",
    "grpo_objective_grad",
    "adamw_step",
    "greedy_topk",
    "policy_gradient",
    "train_scene",
]

log = logging.getLogger(__name__)

_COMMIT_STREAM = 0xC0FFEE


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 10
    clip: float = 0.2
    learning_rate: float = 1e-3
    iterations: int = 20
    inner_epochs: int = 1
    std_floor: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.group_size < 2:
            raise ConfigError("group_size must be >= 2")
        if not 0.0 < self.clip < 1.0:
            raise ConfigError("clip must lie in (0, 1)")
        if self.iterations < 0 or self.inner_epochs < 1:
            raise ConfigError("iterations must be >= 0 and inner_epochs >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")


def rollout_rng(base_seed: int, scene: int, iteration: int, rollout: int) -> np.random.Generator:
    """Independent stream for one rollout, reproducible from its coordinates."""
    return np.random.default_rng(np.random.SeedSequence([base_seed, scene, iteration, rollout]))


def compute_advantages(rewards, std_floor: float = 1e-6) -> np.ndarray:
    """Standardise rewards within the group (population std).

    Groups whose std falls below ``std_floor`` get all-zero advantages.
    Centring and the variance are exact rational arithmetic on the given
    floats, so the result depends only on the exact deviations from the
    mean: adding a constant to every reward gives bit-identical advantages
    whenever the shifted rewards are themselves exact.
    """
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if r.size < 2:
        raise PreconditionError("advantages need a group of at least 2")
    if not np.all(np.isfinite(r)):
        raise NumericError("non-finite reward")
    g = r.size
    exact = [Fraction(float(x)) for x in r]
    mean = sum(exact) / g
    dev = [x - mean for x in exact]
    std = math.sqrt(sum(d * d for d in dev) / g)
    if std < std_floor:
        return np.zeros(g)
    scale = Fraction(std)
    return np.array([float(d / scale) for d in dev])


def _ratios(logprob_new, logprob_old) -> np.ndarray:
    new = np.asarray(logprob_new, dtype=np.float64)
    old = np.asarray(logprob_old, dtype=np.float64)
    if new.shape != old.shape:
        raise ShapeError("logprob arrays differ in length")
    with np.errstate(over="ignore", invalid="ignore"):
        rho = np.exp(new - old)
    if not np.all(np.isfinite(rho)):
        raise NumericError("non-finite importance ratio")
    return rho


def grpo_objective(logprob_new, logprob_old, advantages, clip: float) -> float:
    """Mean over the group of ``min(rho * A, clip(rho, 1-clip, 1+clip) * A)``."""
    rho = _ratios(logprob_new, logprob_old)
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.shape != rho.shape:
        raise ShapeError("advantages differ in length")
    per = np.minimum(rho * adv, np.clip(rho, 1.0 - clip, 1.0 + clip) * adv)
    return float(per.mean())


def grpo_objective_grad(logprob_new, logprob_old, advantages, clip: float) -> np.ndarray:
    """d objective / d logprob_new. Zero for samples held by the clipped branch."""
    rho = _ratios(logprob_new, logprob_old)
    adv = np.asarray(advantages, dtype=np.float64)
    unclipped = rho * adv <= np.clip(rho, 1.0 - clip, 1.0 + clip) * adv
    return np.where(unclipped, rho * adv, 0.0) / rho.size


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, tensors: dict[str, np.ndarray]) -> "AdamState":
        return cls(0, {k: np.zeros_like(t) for k, t in tensors.items()},
                   {k: np.zeros_like(t) for k, t in tensors.items()})

    def copy(self) -> "AdamState":
        return AdamState(self.step, {k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()})


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: GrpoConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One AdamW descent step on ``grads``; returns new arrays, inputs are untouched."""
    if set(grads) != set(params):
        raise ShapeError("gradient names differ from parameter names")
    if not state.m:
        state = AdamState.zeros_like(params)
    t = state.step + 1
    b1, b2, lr = config.beta1, config.beta2, config.learning_rate
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ShapeError(f"shape mismatch for {name}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        decayed = p - lr * config.weight_decay * p
        new_p[name] = decayed - lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(t, new_m, new_v)


def greedy_topk(scores, k: int) -> tuple[int, ...]:
    """Indices of the ``k`` highest scores, best first; ties keep the lower index."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return tuple(int(i) for i in order[:k])


@dataclass
class GroupRollout:
    selections: list[RankingSelection]
    segments: list[SegmentState | None]
    rewards: list[RewardBreakdown]
    logprob_old: np.ndarray
    advantages: np.ndarray

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.rewards])


@dataclass
class IterationStats:
    scene: int
    iteration: int
    mean_reward: float
    max_reward: float
    min_reward: float
    mean_content: float
    mean_clip: float
    mean_artifact: float
    advantage_std: float
    oracle_overlap: int | None
    wall_clock: float


def policy_gradient(
    params: PolicyParams,
    history: np.ndarray,
    prompt: np.ndarray,
    selections,
    logprob_old,
    advantages,
    clip: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Surrogate objective and its gradient with respect to every policy tensor.

    The objective depends on the parameters only through the shared score
    vector, so the per-sample log-likelihood gradients are summed in score
    space and pushed through the network in one backward pass.
    """
    tape, out = record_forward(params, history, prompt)
    scores = out.value[:, 0]
    logprob_new = np.array([pl_logprob(scores, s.indices) for s in selections])
    objective = grpo_objective(logprob_new, logprob_old, advantages, clip)
    weights = grpo_objective_grad(logprob_new, logprob_old, advantages, clip)
    upstream = np.zeros_like(scores)
    for w, sel in zip(weights, selections):
        if w != 0.0:
            upstream += w * pl_logprob_grad(scores, sel.indices)
    grads = score_context_backward(params, history, prompt, upstream, tape=tape)
    return objective, grads


def _rollout(state, scores, k, prompt, generator, providers, reward_config, rng):
    sel = sample_topk(scores, k, rng)
    try:
        seg = denoise_segment(state, sel, prompt, generator, rng)
        reward = hybrid_reward(seg, state, prompt, providers, reward_config)
    except InvalidSegmentError:
        return sel, None, RewardBreakdown.failed()
    return sel, seg, reward


def train_scene(
    state: GenerationState,
    prompt,
    params: PolicyParams,
    opt_state: AdamState,
    generator: ToyGenerator,
    providers: Providers,
    config: GrpoConfig,
    *,
    k: int,
    scene: int,
    base_seed: int,
    reward_config: RewardConfig | None = None,
    start_iteration: int = 0,
    stop_iteration: int | None = None,
    oracle_set: tuple[int, ...] | None = None,
    jobs: int = 1,
    record_time: bool = False,
    commit: bool = True,
) -> tuple[PolicyParams, AdamState, SegmentState | None, list[IterationStats]]:
    """Optimise the policy for one scene against a frozen history, then commit.

    Iterations ``start_iteration .. stop_iteration - 1`` are run (default: all
    ``config.iterations``), so training can be resumed from a checkpoint with
    identical results. The committed segment uses the greedy top-k selection
    of the final scores.
    """
    if not state.segments:
        raise PreconditionError("train_scene needs at least one committed segment")
    reward_config = reward_config or RewardConfig()
    prompt = np.atleast_2d(np.asarray(prompt, dtype=np.float64))
    history = state.history_features()
    stop = config.iterations if stop_iteration is None else stop_iteration
    params = params.copy()
    trace: list[IterationStats] = []
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None

    def _iteration(it):
        nonlocal params, opt_state
        t0 = time.perf_counter()
        scores = score_context(params, history, prompt)

        def run(r, scores=scores, it=it):
            return _rollout(state, scores, k, prompt, generator, providers, reward_config,
                            rollout_rng(base_seed, scene, it, r))

        results = list(pool.map(run, range(config.group_size)) if pool else map(run, range(config.group_size)))
        sels = [r[0] for r in results]
        group = GroupRollout(
            selections=sels,
            segments=[r[1] for r in results],
            rewards=[r[2] for r in results],
            logprob_old=np.array([s.logprob for s in sels]),
            advantages=np.zeros(config.group_size),
        )
        group.advantages = compute_advantages(group.totals, config.std_floor)
        for _ in range(config.inner_epochs):
            _, grads = policy_gradient(
                params, history, prompt, sels, group.logprob_old, group.advantages, config.clip
            )
            ascent = {name: -g for name, g in grads.items()}
            new_tensors, opt_state = adamw_step(params.tensors, ascent, opt_state, config)
            params = PolicyParams(params.config, new_tensors)
        totals = group.totals
        overlap = None
        if oracle_set is not None:
            overlap = len(set(greedy_topk(scores, k)) & set(oracle_set))
        stats = IterationStats(
            scene=scene,
            iteration=it,
            mean_reward=float(totals.mean()),
            max_reward=float(totals.max()),
            min_reward=float(totals.min()),
            mean_content=float(np.mean([r.content for r in group.rewards])),
            mean_clip=float(np.mean([r.clip for r in group.rewards])),
            mean_artifact=float(np.mean([r.artifact for r in group.rewards])),
            advantage_std=float(group.advantages.std()),
            oracle_overlap=overlap,
            wall_clock=time.perf_counter() - t0 if record_time else 0.0,
        )
        log.debug("scene %d iter %d mean reward %.4f", scene, it, totals.mean())
        return stats

    try:
        for it in range(start_iteration, stop):
            try:
                trace.append(_iteration(it))
            except CtxSelError as exc:
                exc.iteration = it
                raise
    finally:
        if pool:
            pool.shutdown()

    segment = None
    if commit:
        final = score_context(params, history, prompt)
        segment = denoise_segment(
            state, greedy_topk(final, k), prompt, generator,
            rollout_rng(base_seed, scene, _COMMIT_STREAM, 0), prompt_id=scene,
        )
    return params, opt_state, segment, trace
