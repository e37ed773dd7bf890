"""Command-line entry point: ``xdistill train|distill|eval|latents|compare``."""

from __future__ import annotations

import argparse
import contextlib
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .distill import LoopContext, run_loop
from .evaluation import (EvalProtocol, ScriptedWorld, TrackingReport, compare_reports,
                         dump_latents, evaluate_tracking, silhouette)
from .losses import NumericalError
from .policy import CheckpointError, init_params, load_checkpoint, save_checkpoint
from .ppo import RolloutError, Trainer
from .world import Curriculum, NonFiniteActionError, SurrogateWorld

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_THRESHOLD = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numerical aborts here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xdistill", description="Cross-embodiment locomotion training toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, ckpt=False):
        sp.add_argument("--config", type=Path, help="run configuration YAML")
        sp.add_argument("--output", type=Path, help="artifact directory (overrides config)")
        sp.add_argument("--seed", type=int, help="seed (overrides config)")
        sp.add_argument("--threads", type=int, help="cap BLAS threads")
        if ckpt:
            sp.add_argument("--ckpt", type=Path, help="policy checkpoint")

    t = sub.add_parser("train", help="train a generalist with PPO")
    common(t)
    t.add_argument("--updates", type=int)
    t.add_argument("--single-robot", metavar="NAME")
    t.add_argument("--resume", type=Path, metavar="CKPT", help="continue from a checkpoint")

    d = sub.add_parser("distill", help="run specialize/generalize rounds")
    common(d, ckpt=True)
    d.add_argument("--max-rounds", type=int)
    d.add_argument("--fresh", action="store_true", help="ignore completed rounds in --output")

    e = sub.add_parser("eval", help="tracking-error report for a checkpoint")
    common(e, ckpt=True)
    e.add_argument("--report", type=Path, help="CSV path (default <output>/report.csv)")
    e.add_argument("--latents", action="store_true", help="also dump latents.csv")
    e.add_argument("--scripted-oracle", action="store_true",
                   help="evaluate a controller whose readings equal the command")

    lt = sub.add_parser("latents", help="dump trunk latents while walking forward")
    common(lt, ckpt=True)
    lt.add_argument("--steps", type=int, default=200)
    lt.add_argument("--warmup", type=int, default=50)

    c = sub.add_parser("compare", help="per-metric difference of two reports")
    c.add_argument("a", type=Path)
    c.add_argument("b", type=Path)
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "output", None) is not None:
        cfg.output_dir = args.output
    return cfg


def _load_policy(args, cfg: RunConfig):
    if args.ckpt is None:
        raise UsageError("--ckpt is required")
    return load_checkpoint(args.ckpt, cfg.registry().hash)


# ------------------------------------------------------------------ commands
def cmd_train(args) -> int:
    cfg = _config(args)
    if args.single_robot is not None:
        cfg.ablation.single_robot = args.single_robot
    reg = cfg.registry()
    n_updates = args.updates if args.updates is not None else cfg.train.updates
    out = Path(cfg.output_dir)
    eo = cfg.ablation.embodiment_observation
    start, progress = 0, cfg.world.curriculum.start_progress
    if args.resume is not None:
        params, header = load_checkpoint(args.resume, reg.hash)
        start = int(header["meta"].get("updates", 0))
        progress = float(header["meta"].get("progress", progress))
    else:
        params = init_params(cfg.policy, cfg.seed)
    if cfg.ablation.single_robot is not None:
        ids = [reg[cfg.ablation.single_robot].id] * cfg.ppo.n_envs
    else:
        ids = [reg.ids[i % len(reg)] for i in range(cfg.ppo.n_envs)]
    world = SurrogateWorld(reg, ids, config=cfg.world, seed=cfg.seed + start,
                           embodiment_observation=eo,
                           curriculum=Curriculum(cfg.world.curriculum, progress=progress))
    cfg.snapshot(out / "config.resolved.yaml", {"registry_hash": reg.hash, "command": "train",
                                                "resume": str(args.resume or "")})
    trainer = Trainer(params, world, cfg.ppo, seed=cfg.seed + start, estimation=eo,
                      log_path=out / "train_log.csv", start_update=start)

    def save():
        meta = {"updates": trainer.update_index, "progress": world.curriculum.progress,
                "seed": cfg.seed, "single_robot": cfg.ablation.single_robot,
                "embodiment_observation": eo}
        save_checkpoint(out / "generalist.ckpt", params, reg.hash, meta)

    def progress_cb(row):
        k = row["update"] + 1
        if k % 10 == 0:
            print(f"update {k:5d}  objective {row['objective']:8.4f}  "
                  f"E_vx {row['E_vx']:.3f}  progress {row['progress']:.2f}", flush=True)
        if cfg.train.checkpoint_every and k % cfg.train.checkpoint_every == 0:
            save()

    trainer.train(n_updates, progress_cb)
    save()
    print(f"saved {out / 'generalist.ckpt'} after {trainer.update_index} updates")
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg = _config(args)
    reg = cfg.registry()
    params, header = _load_policy(args, cfg)
    loop = cfg.loop
    if args.max_rounds is not None:
        loop.max_rounds = args.max_rounds
    if not cfg.ablation.iterative:
        loop.max_rounds = 1
    out = Path(cfg.output_dir)
    cfg.snapshot(out / "config.resolved.yaml", {"registry_hash": reg.hash, "command": "distill",
                                                "ckpt": str(args.ckpt)})
    ctx = LoopContext(registry=reg, ppo=cfg.ppo, world=cfg.world, evaluation=cfg.evaluation,
                      seed=cfg.seed, progress=float(header["meta"].get("progress", 1.0)),
                      estimation=cfg.ablation.embodiment_observation, out_dir=out,
                      meta={"source": str(args.ckpt)})
    _, reports = run_loop(params, loop, ctx, resume=not args.fresh)
    for r in reports:
        print(f"round {r.round}: generalist {r.generalist_pre.mean_task_error():.4f} -> "
              f"{r.generalist_post.mean_task_error():.4f}")
    return EXIT_OK


def _oracle_world(reg, protocol: EvalProtocol):
    ids = [reg.ids[i % len(reg)] for i in range(max(protocol.n_envs, len(reg)))]
    rng = np.random.default_rng(protocol.seed)
    cmd = np.zeros((len(ids), 6))
    cmd[:, :3] = rng.uniform(-0.5, 0.5, (len(ids), 3))
    return ScriptedWorld(ids, cmd, lambda t: np.zeros(5))


def cmd_eval(args) -> int:
    cfg = _config(args)
    reg = cfg.registry()
    protocol = cfg.evaluation
    out = Path(cfg.output_dir)
    if args.scripted_oracle:
        report = evaluate_tracking(lambda w: None, reg, protocol, world=_oracle_world(reg, protocol),
                                   ckpt="scripted-oracle")
        params = None
    else:
        params, _ = _load_policy(args, cfg)
        report = evaluate_tracking(params, reg, protocol, cfg.world, ckpt=str(args.ckpt))
    cfg.snapshot(out / "config.resolved.yaml", {"registry_hash": reg.hash, "command": "eval"})
    path = args.report or out / "report.csv"
    report.write(path)
    print(report.format_table())
    print(f"mean task error {report.mean_task_error():.4f} ({protocol.mode} commands); "
          f"wrote {path}")
    if args.latents:
        if params is None:
            raise UsageError("--latents needs a policy checkpoint")
        _write_latents(params, cfg, out, steps=200, warmup=50)
    limit = protocol.max_fall_rate
    if limit is not None:
        bad = [r.embodiment for r in report.rows if r.fall_rate > limit]
        if bad:
            print(f"fall rate above {limit} for: {', '.join(bad)}", file=sys.stderr)
            return EXIT_THRESHOLD
    return EXIT_OK


def _write_latents(params, cfg: RunConfig, out: Path, steps: int, warmup: int) -> float:
    reg = cfg.registry()
    dump = dump_latents(params, reg, steps, seed=cfg.seed, world_config=cfg.world, warmup=warmup)
    dump.write(out / "latents.csv")
    score = silhouette(dump.z, dump.embodiment) if len(reg) > 1 and steps > 0 else float("nan")
    print(f"wrote {out / 'latents.csv'} ({len(dump)} rows); silhouette {score:.4f}")
    return score


def cmd_latents(args) -> int:
    cfg = _config(args)
    params, _ = _load_policy(args, cfg)
    out = Path(cfg.output_dir)
    cfg.snapshot(out / "config.resolved.yaml", {"registry_hash": cfg.registry().hash,
                                                "command": "latents"})
    _write_latents(params, cfg, out, args.steps, args.warmup)
    return EXIT_OK


def cmd_compare(args) -> int:
    diff = compare_reports(TrackingReport.read(args.a), TrackingReport.read(args.b))
    print(diff.format_table())
    return EXIT_OK


COMMANDS = {"train": cmd_train, "distill": cmd_distill, "eval": cmd_eval,
            "latents": cmd_latents, "compare": cmd_compare}


def _threads(n: int | None):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        with _threads(getattr(args, "threads", None)):
            return COMMANDS[args.command](args)
    except (NumericalError, RolloutError, NonFiniteActionError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CheckpointError, UsageError, FileNotFoundError, KeyError,
            ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
