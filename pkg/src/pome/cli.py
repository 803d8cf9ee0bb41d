"""Command-line front end: train, eval, compare, dump-targets, dump-config."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .algorithm import IterationReport, Networks, TrainConfig, Trainer, TrainingError, evaluate, policy_fn
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .envs import make_env
from .errors import ConfigError, DimensionError
from .targets import dump_target_table

METRICS_VERSION = 1
METRICS_COLUMNS = (
    "iteration", "total_steps", "mean_return", "median_return",
    "surrogate", "value_loss", "reward_loss", "transition_loss",
    "mean_eps", "eps_bar_mean", "approx_kl", "clip_frac", "alpha", "lr", "wall_seconds",
)
CLI_MODES = ("ppo", "pome", "pome_nondecay", "ppo_model_based")

# flag dest -> TrainConfig field
FLAG_FIELDS = {
    "env": "env", "seed": "seed", "total_steps": "total_timesteps", "k": "k", "workers": "n_workers",
    "gamma": "gamma", "lam": "lam", "alpha0": "alpha0", "alpha_schedule": "alpha_schedule",
    "clip_ratio": "clip_ratio", "beta": "beta", "cv": "c_v", "ct": "c_t", "cr": "c_r",
    "entropy_coef": "entropy_coef", "lr0": "lr0", "model_lr": "model_lr", "epochs": "epochs",
    "minibatches": "minibatch_count", "adv_norm": "adv_norm", "median_scope": "median_scope",
    "timing": "record_wall_time",
}


def on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def add_config_flags(p: argparse.ArgumentParser, with_mode: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON file of TrainConfig fields")
    p.add_argument("--env")
    if with_mode:
        p.add_argument("--mode", choices=CLI_MODES)
        p.add_argument("--seed", type=int)
    p.add_argument("--total-steps", dest="total_steps", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha-schedule", dest="alpha_schedule", choices=("linear_to_zero", "constant"))
    p.add_argument("--clip-ratio", dest="clip_ratio", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--cv", type=float)
    p.add_argument("--ct", type=float)
    p.add_argument("--cr", type=float)
    p.add_argument("--entropy-coef", dest="entropy_coef", type=float)
    p.add_argument("--lr0", type=float)
    p.add_argument("--model-lr", dest="model_lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--minibatches", type=int)
    p.add_argument("--adv-norm", dest="adv_norm", type=on_off)
    p.add_argument("--median-scope", dest="median_scope", choices=("worker", "batch"))
    p.add_argument("--timing", type=on_off, help="record wall-clock seconds in metrics (breaks byte-reproducibility)")


def load_config_file(path: Path | None) -> tuple[dict, bool]:
    """Read a JSON config, or the resolved config inside a run manifest.

    The flag says whether the file was a manifest.
    """
    if path is None:
        return {}, False
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    if "config" in data and "artifact_version" in data:
        return dict(data["config"]), True
    return data, False


def resolve_config(args: argparse.Namespace, mode: str | None = None, strict_alpha: bool = True) -> TrainConfig:
    """Merge defaults < config file < flags into a validated TrainConfig."""
    values, from_manifest = load_config_file(getattr(args, "config", None))
    explicit_alpha = "alpha0" in values and not from_manifest
    for dest, name in FLAG_FIELDS.items():
        flag = getattr(args, dest, None)
        if flag is not None:
            values[name] = flag
            explicit_alpha |= name == "alpha0"
    mode = mode or getattr(args, "mode", None) or values.get("mode", "pome")
    if mode == "pome_nondecay":
        values["mode"], values["alpha_schedule"] = "pome", "constant"
    else:
        values["mode"] = mode
    if strict_alpha and explicit_alpha and values["mode"] != "pome" and values["alpha0"] != 0.0:
        raise ConfigError("alpha0", f"the exploration coefficient has no effect in {mode} mode")
    return TrainConfig.from_dict(values)


# metrics ------------------------------------------------------------------------
def metrics_row(report: IterationReport, with_time: bool) -> list[str]:
    row = []
    for col in METRICS_COLUMNS:
        value = getattr(report, col)
        if col == "wall_seconds":
            row.append(repr(float(value)) if with_time else "")
        elif isinstance(value, int):
            row.append(str(value))
        else:
            row.append(repr(float(value)))
    return row


def read_metrics(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def checkpoint_meta(cfg: TrainConfig, nets: Networks) -> dict:
    return {
        "artifact_version": __version__,
        "config": cfg.to_dict(),
        "obs_dim": nets.obs_dim,
        "n_actions": nets.n_actions,
        "hidden": list(nets.hidden),
        "model_hidden": nets.model_hidden,
    }


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_training(cfg: TrainConfig, out_dir: Path, label: str | None = None, log=print) -> dict:
    """Train one cell, writing metrics.csv, manifest.json and final.ckpt into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "artifact_version": __version__,
        "metrics_version": METRICS_VERSION,
        "mode_label": label or cfg.mode,
        "env": cfg.env,
        "seeds": [cfg.seed],
        "config": cfg.to_dict(),
        "started": now(),
    }
    trainer = Trainer(cfg)
    status, error = "ok", None
    last: IterationReport | None = None
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        fh.flush()
        try:
            for _ in range(cfg.n_iterations):
                last = trainer.train_iteration()
                writer.writerow(metrics_row(last, cfg.record_wall_time))
                fh.flush()
        except TrainingError as exc:
            status, error = "failed", str(exc)
    manifest.update(
        finished=now(),
        status=status,
        error=error,
        iterations=trainer.iteration,
        total_steps=trainer.total_steps,
        final_mean_return=last.mean_return if last else None,
    )
    if status == "ok":
        write_checkpoint(out_dir / "final.ckpt", trainer.params, checkpoint_meta(cfg, trainer.nets))
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if log:
        if status == "ok":
            log(f"{manifest['mode_label']} seed={cfg.seed}: {trainer.iteration} iterations, "
                f"final mean return (last 100 episodes) {manifest['final_mean_return']:.4f}")
        else:
            log(f"training aborted: {error}")
    return manifest


# loading ----------------------------------------------------------------------
def load_agent(path) -> tuple[Networks, dict, dict]:
    params, meta = read_checkpoint(path)
    nets = Networks(meta["obs_dim"], meta["n_actions"], tuple(meta["hidden"]), meta["model_hidden"])
    return nets, params, meta


def env_for(meta: dict, env_id: str | None):
    cfg = meta.get("config", {})
    env_id = env_id or cfg.get("env", "chain20")
    params = cfg.get("env_params", {}) if env_id == cfg.get("env") else {}
    return env_id, params, make_env(env_id, **params)


def check_dims(nets: Networks, env) -> None:
    spec = env.spec
    if (spec.observation_dim, spec.action_count) != (nets.obs_dim, nets.n_actions):
        raise DimensionError(
            f"checkpoint expects obs_dim={nets.obs_dim}, actions={nets.n_actions}; "
            f"environment has obs_dim={spec.observation_dim}, actions={spec.action_count}"
        )


# commands ---------------------------------------------------------------------
def cmd_train(args) -> int:
    cfg = resolve_config(args)
    manifest = run_training(cfg, Path(args.out_dir), label=args.mode or cfg.mode)
    return 0 if manifest["status"] == "ok" else 3


def cmd_eval(args) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    nets, params, meta = load_agent(args.checkpoint)
    env_id, _, env = env_for(meta, args.env)
    check_dims(nets, env)
    summary = evaluate(policy_fn(nets, params), env, args.episodes, args.seed, greedy=not args.stochastic)
    print(json.dumps({
        "env": env_id, "episodes": args.episodes, "seed": args.seed,
        "policy": "stochastic" if args.stochastic else "greedy",
        "mean": summary.mean, "median": summary.median, "std": summary.std,
    }, sort_keys=True))
    return 0


def final_return(run_dir: Path) -> float:
    rows = read_metrics(run_dir / "metrics.csv")
    return float(rows[-1]["mean_return"])


def cmd_compare(args) -> int:
    modes = [m for m in args.modes.split(",") if m]
    seeds = [int(s) for s in args.seeds.split(",") if s]
    if not modes or not seeds:
        raise UsageError("need at least one mode and one seed")
    for m in modes:
        if m not in CLI_MODES:
            raise UsageError(f"unknown mode {m!r}")
    out_dir = Path(args.out_dir)
    cells: dict[str, list[float]] = {m: [] for m in modes}
    failures: list[tuple[str, int, str]] = []
    env_id = None
    for mode in modes:
        for seed in seeds:
            args.seed = seed
            try:
                cfg = resolve_config(args, mode=mode, strict_alpha=False)
                env_id = cfg.env
                manifest = run_training(cfg, out_dir / mode / f"seed{seed}", label=mode)
                if manifest["status"] != "ok":
                    raise RuntimeError(manifest["error"])
                cells[mode].append(final_return(out_dir / mode / f"seed{seed}"))
            except Exception as exc:  # one bad cell must not stop the sweep
                failures.append((mode, seed, str(exc)))
                print(f"cell {mode} seed={seed} failed: {exc}", file=sys.stderr)
    table = aggregate(cells)
    write_compare(out_dir / "compare.csv", env_id or "", table, len(seeds))
    print(format_compare(env_id or "", table))
    for mode, seed, err in failures:
        print(f"FAILED {mode} seed={seed}: {err}")
    return 0 if not failures else 4


def aggregate(cells: dict[str, list[float]]) -> dict[str, dict]:
    table = {}
    for mode, finals in cells.items():
        table[mode] = {
            "runs": len(finals),
            "mean_final": float(np.mean(finals)) if finals else float("nan"),
            "best_final": float(np.max(finals)) if finals else float("nan"),
        }
    scored = [m for m in table if table[m]["runs"]]
    best = max(scored, key=lambda m: table[m]["mean_final"]) if scored else None
    for mode in table:
        table[mode]["best"] = mode == best
    return table


def write_compare(path: Path, env_id: str, table: dict, n_seeds: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("env", "mode", "seeds", "runs", "mean_final", "best_final", "best"))
        for mode, row in table.items():
            writer.writerow((env_id, mode, n_seeds, row["runs"], repr(row["mean_final"]),
                             repr(row["best_final"]), int(row["best"])))


def format_compare(env_id: str, table: dict) -> str:
    header = ["env"] + list(table)
    cells = [env_id] + [
        f"{row['mean_final']:.4f}{'*' if row['best'] else ''}" for row in table.values()
    ]
    widths = [max(len(h), len(c)) for h, c in zip(header, cells)]
    line = lambda items: "  ".join(s.ljust(w) for s, w in zip(items, widths))  # noqa: E731
    return "\n".join([line(header), line(cells), "(* best mean of final-100-episode returns across seeds)"])


def cmd_dump_targets(args) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    nets, params, meta = load_agent(args.checkpoint)
    env_id, env_params, env = env_for(meta, args.env)
    check_dims(nets, env)
    table, _ = rollout_targets(meta, params, env_id, env_params, args.steps, args.seed)
    if args.out in (None, "-"):
        dump_target_table(table, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            dump_target_table(table, fh)
    return 0


def rollout_targets(meta: dict, params, env_id: str, env_params: dict, steps: int, seed: int):
    """Roll one worker for ``steps`` steps under the checkpoint policy and build its TargetTable."""
    values = dict(meta.get("config", {}))
    values.update(env=env_id, env_params=env_params, k=steps, n_workers=1, seed=seed, minibatch_count=1)
    cfg = TrainConfig.from_dict(values)
    trainer = Trainer(cfg, params=params)
    segment = trainer.collect()
    alpha = cfg.alpha0 if cfg.mode == "pome" else 0.0
    return trainer.target_table(segment, alpha), segment


def cmd_dump_config(args) -> int:
    cfg = resolve_config(args)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pome", description="PPO and POME on small discrete MDPs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one (mode, seed) cell")
    add_config_flags(p)
    p.add_argument("--out-dir", default="runs/latest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stochastic", action="store_true", help="sample actions instead of argmax")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="run a modes x seeds grid and tabulate final returns")
    add_config_flags(p, with_mode=False)
    p.add_argument("--modes", default="ppo,pome")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out-dir", default="runs/compare")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dump-targets", help="write the per-timestep target table for a rollout")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env")
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_targets)

    p = sub.add_parser("dump-config", help="print the fully resolved configuration")
    add_config_flags(p)
    p.set_defaults(func=cmd_dump_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except (DimensionError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
