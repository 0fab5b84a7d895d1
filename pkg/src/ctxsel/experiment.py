"""Multi-scene experiment: scene 0 from the environment, then one selected-context segment per prompt."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import baseline_select
from .checkpoint import save_checkpoint
from .config import RunConfig, to_dict
from .exceptions import CtxSelError
from .generator import GenerationState, append_segment, denoise_segment
from .grpo import _COMMIT_STREAM, AdamState, IterationStats, greedy_topk, rollout_rng, train_scene
from .policy import PolicyConfig, init_params, score_context
from .rewards import RewardBreakdown, cross_scene_sim, hybrid_reward
from .synthenv import MAX_ORACLE_K, MAX_ORACLE_L, SyntheticEnv, build_env, oracle_best_selection
from .textio import format_float, write_matrix

__all__ = ["METRICS_HEADER", "SceneResult", "ExperimentResult", "run_experiment", "init_policy", "metrics_rows"]

log = logging.getLogger(__name__)

METRICS_HEADER = (
    "scene",
    "iteration",
    "phase",
    "mean_reward",
    "max_reward",
    "min_reward",
    "mean_content",
    "mean_clip",
    "mean_artifact",
    "advantage_std",
    "oracle_overlap",
    "wall_clock",
)


@dataclass
class SceneResult:
    scene: int
    selection: tuple[int, ...]
    reward: RewardBreakdown
    trace: list[IterationStats] = field(default_factory=list)
    oracle_set: tuple[int, ...] | None = None
    oracle_reward: float | None = None


@dataclass
class ExperimentResult:
    config: RunConfig
    state: GenerationState
    scenes: list[SceneResult]
    phi_embeddings: np.ndarray
    frame_clips: list[int]
    cross_scene_sim_phi: float | None

    @property
    def mean_clip(self) -> float:
        return float(np.mean([s.reward.clip for s in self.scenes])) if self.scenes else float("nan")

    @property
    def mean_content(self) -> float:
        return float(np.mean([s.reward.content for s in self.scenes])) if self.scenes else float("nan")

    def summary(self) -> dict:
        return {
            "strategy": self.config.strategy,
            "seed": self.config.seed,
            "k": self.config.k,
            "n_scenes": self.config.n_scenes,
            "cross_scene_sim_phi": self.cross_scene_sim_phi,
            "mean_content": self.mean_content if self.scenes else None,
            "mean_clip": self.mean_clip if self.scenes else None,
            "scenes": [
                {
                    "scene": s.scene,
                    "selection": list(s.selection),
                    "content": s.reward.content,
                    "clip": s.reward.clip,
                    "artifact": s.reward.artifact,
                    "total": s.reward.total,
                    "oracle_set": None if s.oracle_set is None else list(s.oracle_set),
                    "oracle_reward": s.oracle_reward,
                }
                for s in self.scenes
            ],
        }


def init_policy(config: RunConfig):
    cfg = PolicyConfig(config.geometry.dim, config.policy.n_cross, config.policy.n_linear)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x1417]))
    return init_params(cfg, rng), AdamState()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def metrics_rows(scenes: list[SceneResult]) -> list[list[str]]:
    rows = []
    for s in scenes:
        for t in s.trace:
            rows.append([_fmt(x) for x in (
                t.scene, t.iteration, "train", t.mean_reward, t.max_reward, t.min_reward,
                t.mean_content, t.mean_clip, t.mean_artifact, t.advantage_std, t.oracle_overlap, t.wall_clock,
            )])
        r = s.reward
        final_it = s.trace[-1].iteration + 1 if s.trace else 0
        overlap = None if s.oracle_set is None else len(set(s.selection) & set(s.oracle_set))
        rows.append([_fmt(x) for x in (
            s.scene, final_it, "commit", r.total, r.total, r.total,
            r.content, r.clip, float(r.artifact), 0.0, overlap, 0.0,
        )])
    return rows


def _metrics_text(scenes: list[SceneResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    w.writerows(metrics_rows(scenes))
    return buf.getvalue()


def _oracle(env, state, prompt, config):
    if state.history_length > MAX_ORACLE_L or config.k > MAX_ORACLE_K:
        return None, None
    return oracle_best_selection(env, state, prompt, config.k, config.rewards)


def _run_scene(env: SyntheticEnv, state, scene, config: RunConfig, policy):
    prompt = env.prompt(scene)
    oracle_set, oracle_reward = _oracle(env, state, prompt, config)
    if config.strategy == "policy":
        params, opt_state = policy
        if config.reset_policy_per_scene:
            params, opt_state = init_policy(config)
        params, opt_state, seg, trace = train_scene(
            state, prompt, params, opt_state, env.generator, env.providers, config.grpo,
            k=config.k, scene=scene, base_seed=config.seed, reward_config=config.rewards,
            oracle_set=oracle_set, jobs=config.jobs, record_time=config.record_time,
        )
        selection = greedy_topk(score_context(params, state.history_features(), prompt), config.k)
        policy = (params, opt_state)
    else:
        rng = rollout_rng(config.seed, scene, _COMMIT_STREAM, 0)
        sel = baseline_select(
            config.strategy, state.history_length, config.k, rng,
            tokens_per_frame=config.geometry.tokens_per_frame,
            anchor_frames=config.baseline.anchor_frames,
            recent_frames=config.baseline.recent_frames,
        )
        # the baseline's own random draws come first on the commit stream
        seg = denoise_segment(state, sel, prompt, env.generator, rng, prompt_id=scene)
        selection, trace = sel.indices, []
    reward = hybrid_reward(seg, state, prompt, env.providers, config.rewards)
    result = SceneResult(scene, tuple(selection), reward, trace, oracle_set, oracle_reward)
    return append_segment(state, seg, env.generator, prompt), result, policy


def run_experiment(config: RunConfig, output_dir=None, *, write: bool = True) -> ExperimentResult:
    """Run all scenes and (optionally) write artifacts into ``output_dir``.

    Files: ``metrics.csv``, ``segments.txt`` (token rows, clip boundaries at
    segment starts), ``phi_embeddings.txt`` (per-frame identity embeddings),
    ``summary.json`` and, for policy runs, ``checkpoints/scene_<s>.ckpt``.
    """
    env = build_env(config.env_spec())
    state = env.initial_state()
    policy = init_policy(config) if config.strategy == "policy" else None
    out = Path(output_dir if output_dir is not None else config.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        if policy is not None:
            (out / "checkpoints").mkdir(exist_ok=True)

    scenes: list[SceneResult] = []
    for scene in range(1, config.n_scenes):
        try:
            state, result, policy = _run_scene(env, state, scene, config, policy)
        except CtxSelError as exc:
            it = getattr(exc, "iteration", None)
            where = f"scene {scene}" + ("" if it is None else f", iteration {it}")
            raise type(exc)(f"{where}: {exc}") from exc
        scenes.append(result)
        log.info("scene %d: selection %s reward %.4f", scene, result.selection, result.reward.total)
        if write and policy is not None:
            save_checkpoint(policy[0], policy[1], out / "checkpoints" / f"scene_{scene}.ckpt")

    g = config.geometry
    frames = state.frames()  # (segments * n, hw, d)
    phi = np.array([env.providers.phi(f) for f in frames])
    clips = [s * g.n for s in range(len(state.segments))]
    sim = cross_scene_sim(phi, clips) if len(clips) > 1 else None
    result = ExperimentResult(config, state, scenes, phi, clips, sim)

    if write:
        (out / "metrics.csv").write_text(_metrics_text(scenes))
        tokens = np.vstack([s.tokens() for s in state.segments])
        write_matrix(out / "segments.txt", tokens, [s * g.tokens_per_segment for s in range(len(state.segments))])
        write_matrix(out / "phi_embeddings.txt", phi, clips)
        summary = result.summary()
        summary["config"] = to_dict(config)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return result
