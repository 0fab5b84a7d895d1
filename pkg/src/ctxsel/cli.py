"""Command-line entry point: ``ctxsel {run,train,gen-prompts,eval,baselines,plot-data}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import STRATEGIES
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, from_dict, load_config
from .exceptions import ConfigError, CtxSelError
from .experiment import METRICS_HEADER, SceneResult, init_policy, metrics_rows, run_experiment
from .generator import append_segment
from .grpo import greedy_topk, train_scene
from .policy import score_context
from .rewards import cross_scene_sim, hybrid_reward
from .synthenv import MAX_ORACLE_K, MAX_ORACLE_L, PromptSetSpec, build_env, generate_eps, oracle_best_selection
from .textio import format_float, read_matrix

log = logging.getLogger("ctxsel")


def _config(args) -> RunConfig:
    overrides = {"seed": args.seed, "jobs": args.jobs, "output_dir": getattr(args, "output_dir", None)}
    if getattr(args, "strategy", None):
        overrides["strategy"] = args.strategy
    if getattr(args, "reset_policy_per_scene", False):
        overrides["reset_policy_per_scene"] = True
    if args.config is None:
        return from_dict(RunConfig, {k: v for k, v in overrides.items() if v is not None})
    return load_config(args.config, **overrides)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_experiment(cfg)
    print(f"{cfg.strategy}: mean r_clip {result.mean_clip:.4f}  "
          f"cross_scene_sim(phi) {result.cross_scene_sim_phi}  -> {cfg.output_dir}")
    return 0


def cmd_train(args) -> int:
    """Train on the first scene transition only, optionally resuming from a checkpoint."""
    cfg = _config(args)
    if cfg.n_scenes < 2:
        raise ConfigError("train needs n_scenes >= 2")
    env = build_env(cfg.env_spec())
    state = env.initial_state()
    prompt = env.prompt(1)
    if args.resume:
        params, opt_state = load_checkpoint(args.resume)
    else:
        params, opt_state = init_policy(cfg)
    oracle_set = None
    if state.history_length <= MAX_ORACLE_L and cfg.k <= MAX_ORACLE_K:
        oracle_set, _ = oracle_best_selection(env, state, prompt, cfg.k, cfg.rewards)
    params, opt_state, seg, trace = train_scene(
        state, prompt, params, opt_state, env.generator, env.providers, cfg.grpo,
        k=cfg.k, scene=1, base_seed=cfg.seed, reward_config=cfg.rewards,
        start_iteration=args.start_iteration, stop_iteration=args.stop_iteration,
        oracle_set=oracle_set, jobs=cfg.jobs, record_time=cfg.record_time,
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, opt_state, args.save or out / "policy.ckpt")
    selection = greedy_topk(score_context(params, state.history_features(), prompt), cfg.k)
    reward = hybrid_reward(seg, state, prompt, env.providers, cfg.rewards)
    append_segment(state, seg, env.generator, prompt)  # validates the committed segment
    _write_csv(out / "metrics.csv", METRICS_HEADER,
               metrics_rows([SceneResult(1, selection, reward, trace, oracle_set)]))
    print(f"greedy selection {selection}  oracle {oracle_set}  reward {reward.total:.4f}")
    return 0


def cmd_gen_prompts(args) -> int:
    spec = PromptSetSpec(set_size=args.set_size, dim=args.dim)
    sets = generate_eps(spec, args.count, np.random.default_rng(args.seed))
    lines = [
        json.dumps({
            "identity_id": s.identity_id,
            "triples": [list(t) for t in s.triples],
            "prompts": list(s.prompts),
            "embeddings": [[float(x) for x in row] for row in s.embeddings],
        })
        for s in sets
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    for path in args.files:
        emb, clips = read_matrix(path)
        if clips is None:
            raise ConfigError(f"{path}: no 'clips:' line")
        print(f"{path}\t{format_float(cross_scene_sim(emb, clips))}")
    return 0


def cmd_baselines(args) -> int:
    cfg = _config(args)
    root = Path(cfg.output_dir)
    strategies = list(STRATEGIES) + (["policy"] if args.include_policy else [])
    rows = []
    for strategy in strategies:
        sub = dataclasses.replace(cfg, strategy=strategy, output_dir=str(root / strategy))
        r = run_experiment(sub)
        rows.append([strategy, format_float(r.mean_content), format_float(r.mean_clip),
                     "" if r.cross_scene_sim_phi is None else format_float(r.cross_scene_sim_phi)])
        print(f"{strategy:22s} content {r.mean_content:.4f}  clip {r.mean_clip:.4f}  "
              f"sim {r.cross_scene_sim_phi}")
    _write_csv(root / "baselines.csv", ("strategy", "mean_content", "mean_clip", "cross_scene_sim_phi"), rows)
    return 0


def cmd_plot_data(args) -> int:
    """Long-format training curves (with a trailing moving average) from one or more run directories."""
    rows = []
    for run in args.runs:
        path = Path(run) / "metrics.csv"
        if not path.exists():
            raise ConfigError(f"{path} does not exist")
        with open(path, newline="") as fh:
            recs = [r for r in csv.DictReader(fh) if r["phase"] == "train"]
        window: dict[str, list[float]] = {}
        for r in recs:
            hist = window.setdefault(r["scene"], [])
            hist.append(float(r["mean_reward"]))
            smooth = float(np.mean(hist[-args.window:]))
            rows.append([run, r["scene"], r["iteration"], r["mean_reward"], format_float(smooth),
                         r["mean_content"], r["mean_clip"], r["mean_artifact"]])
    header = ("run", "scene", "iteration", "mean_reward", "smoothed_reward", "mean_content", "mean_clip", "mean_artifact")
    if args.out:
        _write_csv(Path(args.out), header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxsel", description="Learned context selection for segment-wise generation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, strategy=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int, help="threads for group rollouts")
        sp.add_argument("--output-dir")
        sp.add_argument("--reset-policy-per-scene", action="store_true")
        if strategy:
            sp.add_argument("--strategy", choices=("policy",) + STRATEGIES)

    sp = sub.add_parser("run", help="full multi-scene experiment")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("train", help="train the policy on a single scene")
    common(sp, strategy=False)
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.add_argument("--start-iteration", type=int, default=0)
    sp.add_argument("--stop-iteration", type=int)
    sp.add_argument("--save", help="checkpoint path (default: <output-dir>/policy.ckpt)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("gen-prompts", help="write event prompt sets as JSON lines")
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--set-size", type=int, default=4)
    sp.add_argument("--dim", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen_prompts)

    sp = sub.add_parser("eval", help="cross-scene similarity of frame-embedding files")
    sp.add_argument("files", nargs="+")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("baselines", help="run every baseline strategy")
    common(sp, strategy=False)
    sp.add_argument("--include-policy", action="store_true")
    sp.set_defaults(func=cmd_baselines)

    sp = sub.add_parser("plot-data", help="CSV of training curves for external plotting")
    sp.add_argument("runs", nargs="+", help="run directories containing metrics.csv")
    sp.add_argument("--window", type=int, default=5)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CtxSelError as exc:
        print(f"ctxsel: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"ctxsel: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
