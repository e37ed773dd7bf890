"""Generalist/specialist rounds: fork, fine-tune, relabel, distill."""

from __future__ import annotations

import csv
import io
import json
import shutil
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from .embodiment import Registry
from .evaluation import METRICS, EvalProtocol, TrackingReport, evaluate_tracking
from .losses import Adam, LossCoefficients
from .policy import PolicyParams, actor_forward, clone_params, load_checkpoint, save_checkpoint
from .ppo import PPOConfig, RolloutBuffer, Trainer, optimize
from .world import Curriculum, SurrogateWorld, WorldConfig


@dataclass
class LoopConfig:
    alpha: float = 0.02
    beta: float = 1.0
    distill_epochs: int = 200
    specialist_updates: int = 300
    max_rounds: int = 4
    tolerance: float = 0.02  # relative improvement below this counts as stalled
    patience: int = 2
    specialist_envs: int | None = None  # default: ppo n_envs / number of embodiments

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.distill_epochs < 1:
            raise ValueError("distill_epochs must be at least 1")
        if self.max_rounds < 0 or self.specialist_updates < 0:
            raise ValueError("max_rounds and specialist_updates must be non-negative")

    def coefficients(self, ppo: PPOConfig, estimation: bool = True) -> LossCoefficients:
        c = ppo.coefficients(estimation)
        c.action, c.latent = self.alpha, self.beta
        return c

    @classmethod
    def from_dict(cls, d: dict | None) -> "LoopConfig":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        if set(d) - names:
            raise ValueError(f"loop: unknown key(s) {sorted(set(d) - names)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------- phases
def fork_specialists(generalist: PolicyParams, registry: Registry) -> dict[int, PolicyParams]:
    return {spec.id: clone_params(generalist) for spec in registry}


def finetune_specialist(params: PolicyParams, registry: Registry, embodiment: int | str,
                        n_updates: int, ppo: PPOConfig, world_config: WorldConfig | None = None,
                        n_envs: int | None = None, seed: int = 0, progress: float = 1.0,
                        estimation: bool = True, log_path: str | Path | None = None) -> PolicyParams:
    """PPO on a world that contains only ``embodiment``; updates ``params`` in place."""
    spec = registry[embodiment]
    if n_updates == 0:
        return params
    n = n_envs or max(1, ppo.n_envs // len(registry))
    world = SurrogateWorld(registry, [spec.id] * n, config=world_config, seed=seed,
                           embodiment_observation=estimation,
                           curriculum=Curriculum(progress=progress))
    trainer = Trainer(params, world, ppo, seed=seed, estimation=estimation, log_path=log_path)

    def update_fn(p, buffer, optimizer, rng):
        if np.any(buffer.embodiment != spec.id):
            raise RuntimeError(f"specialist {spec.name} received foreign transitions")
        return optimize(p, buffer, ppo.coefficients(estimation), ppo, optimizer, rng)

    for _ in range(n_updates):
        trainer.update(update_fn)
    return params


def relabel(buffer: RolloutBuffer, specialists: Mapping[int, PolicyParams]) -> RolloutBuffer:
    """Attach each transition's specialist mean action and latent.

    Specialists are only read. Every embodiment present in the buffer must
    have a specialist.
    """
    T, n = buffer.rewards.shape
    ids = buffer.embodiment[0]
    missing = sorted(set(map(int, np.unique(ids))) - set(map(int, specialists.keys())))
    if missing:
        raise KeyError(f"no specialist for embodiment(s) {missing}")
    mean = np.zeros(buffer.actions.shape)
    latent = np.zeros(buffer.latent.shape)
    for emb in np.unique(ids):
        cols = np.flatnonzero(ids == emb)
        spec_params = specialists[int(emb)]
        flat = lambda a: a[:, cols].reshape(T * cols.size, -1)
        out = actor_forward(spec_params, flat(buffer.proprio), flat(buffer.command),
                            flat(buffer.clock))
        mean[:, cols] = out.dist.mean.reshape(T, cols.size, -1)
        latent[:, cols] = out.latent.reshape(T, cols.size, -1)
    buffer.teacher_mean = mean
    buffer.teacher_latent = latent
    return buffer


def distill_update(params: PolicyParams, buffer: RolloutBuffer, loop: LoopConfig,
                   ppo: PPOConfig, optimizer: Adam, rng: np.random.Generator,
                   estimation: bool = True, trace: list | None = None) -> dict[str, float]:
    """PPO loss plus alpha * action match plus beta * latent match."""
    if buffer.collector != params.digest():
        raise ValueError("buffer was not collected by this generalist (on-policy states required)")
    if (loop.alpha or loop.beta) and buffer.teacher_mean is None:
        raise ValueError("relabel() the buffer before distilling")
    return optimize(params, buffer, loop.coefficients(ppo, estimation), ppo, optimizer, rng, trace)


# ----------------------------------------------------------------- report
@dataclass
class RoundReport:
    round: int
    specialist_pre: TrackingReport
    specialist_post: TrackingReport
    generalist_pre: TrackingReport
    generalist_post: TrackingReport
    trace: list[dict] = field(default_factory=list)  # per distill epoch: ppo, action, latent

    def check(self) -> None:
        for rep in (self.specialist_pre, self.specialist_post, self.generalist_pre,
                    self.generalist_post):
            for r in rep.rows:
                if any(r.metric(m) < 0 for m in METRICS):
                    raise ValueError("negative tracking error")
        for row in self.trace:
            if not all(np.isfinite(v) for v in row.values()):
                raise ValueError("non-finite loss trace")

    CSV_FIELDS = ("round", "embodiment", "stage", *METRICS, "fall_rate")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for stage in ("specialist_pre", "specialist_post", "generalist_pre", "generalist_post"):
            for r in getattr(self, stage).rows:
                w.writerow([self.round, r.embodiment, stage,
                            *(repr(r.metric(m)) for m in METRICS), repr(r.fall_rate)])
        return buf.getvalue()

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "ppo", "action", "latent"])
        for i, row in enumerate(self.trace):
            w.writerow([i, repr(row["ppo"]), repr(row["action"]), repr(row["latent"])])
        return buf.getvalue()


def _stage_reports(text: str, meta: dict) -> dict[str, TrackingReport]:
    from .evaluation import EmbodimentErrors
    out: dict[str, list] = {}
    for d in csv.DictReader(io.StringIO(text)):
        m = meta[d["stage"]]
        out.setdefault(d["stage"], []).append(EmbodimentErrors(
            d["embodiment"], *(float(d[k]) for k in METRICS), float(d["fall_rate"]),
            m["n_envs"], m["n_steps"], m["seed"], m.get("ckpt", "")))
    return {k: TrackingReport(v) for k, v in out.items()}


def read_round_report(directory: str | Path) -> RoundReport:
    directory = Path(directory)
    meta = json.loads((directory / "round.json").read_text())
    stages = _stage_reports((directory / "report.csv").read_text(), meta["stages"])
    trace = [{"ppo": float(r["ppo"]), "action": float(r["action"]), "latent": float(r["latent"])}
             for r in csv.DictReader(io.StringIO((directory / "trace.csv").read_text()))]
    return RoundReport(meta["round"], stages["specialist_pre"], stages["specialist_post"],
                       stages["generalist_pre"], stages["generalist_post"], trace)


# ------------------------------------------------------------------- loop
@dataclass
class LoopContext:
    """Everything run_loop needs besides the generalist and LoopConfig."""

    registry: Registry
    ppo: PPOConfig = field(default_factory=PPOConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    evaluation: EvalProtocol = field(default_factory=lambda: EvalProtocol(n_envs=64, n_steps=300))
    seed: int = 0
    progress: float = 1.0
    estimation: bool = True
    out_dir: Path | None = None
    meta: dict = field(default_factory=dict)


def _specialist_errors(specialists, registry, ctx) -> TrackingReport:
    rows = []
    for spec in registry:
        rep = evaluate_tracking(specialists[spec.id], registry, ctx.evaluation, ctx.world,
                                embodiments=[spec.id])
        rows.extend(rep.rows)
    return TrackingReport(rows)


def _round_dir(out: Path, k: int) -> Path:
    return out / f"round_{k}"


def completed_rounds(out_dir: str | Path) -> list[int]:
    out = Path(out_dir)
    if not out.exists():
        return []
    ks = []
    for p in out.iterdir():
        if p.is_dir() and p.name.startswith("round_") and p.name[6:].isdigit():
            if (p / "round.json").exists():
                ks.append(int(p.name[6:]))
    return sorted(ks)


def converged(errors: list[float], tolerance: float, patience: int) -> bool:
    """True when the last ``patience`` relative improvements are all below ``tolerance``."""
    if len(errors) < patience + 1:
        return False
    for prev, cur in zip(errors[-patience - 1:-1], errors[-patience:]):
        if prev <= 0 or (prev - cur) / prev >= tolerance:
            return False
    return True


def run_round(generalist: PolicyParams, loop: LoopConfig, ctx: LoopContext, k: int,
              gen_pre: TrackingReport | None = None) -> tuple[RoundReport, dict[int, PolicyParams]]:
    reg = ctx.registry
    rseed = [ctx.seed, k]
    if gen_pre is None:
        gen_pre = evaluate_tracking(generalist, reg, ctx.evaluation, ctx.world)
    specialists = fork_specialists(generalist, reg)
    spec_pre = _specialist_errors(specialists, reg, ctx)
    for spec in reg:
        finetune_specialist(specialists[spec.id], reg, spec.id, loop.specialist_updates, ctx.ppo,
                            ctx.world, loop.specialist_envs,
                            seed=int(np.random.SeedSequence([*rseed, spec.id]).generate_state(1)[0]),
                            progress=ctx.progress, estimation=ctx.estimation)
    spec_post = _specialist_errors(specialists, reg, ctx)
    frozen = {i: p.digest() for i, p in specialists.items()}

    world = SurrogateWorld.balanced(reg, ctx.ppo.n_envs, config=ctx.world,
                                    seed=int(np.random.SeedSequence(rseed).generate_state(1)[0]),
                                    embodiment_observation=ctx.estimation,
                                    curriculum=Curriculum(progress=ctx.progress))
    trainer = Trainer(generalist, world, ctx.ppo, seed=ctx.seed * 1000 + k,
                      estimation=ctx.estimation)
    trace: list[dict] = []

    def update_fn(p, buffer, optimizer, rng):
        relabel(buffer, specialists)
        losses = distill_update(p, buffer, loop, ctx.ppo, optimizer, rng, ctx.estimation)
        ppo_part = losses["total"] - loop.alpha * losses["action"] - loop.beta * losses["latent"]
        trace.append({"ppo": ppo_part, "action": losses["action"], "latent": losses["latent"]})
        return losses

    for _ in range(loop.distill_epochs):
        trainer.update(update_fn)
    if {i: p.digest() for i, p in specialists.items()} != frozen:
        raise RuntimeError("specialist parameters changed during distillation")
    gen_post = evaluate_tracking(generalist, reg, ctx.evaluation, ctx.world)
    report = RoundReport(k, spec_pre, spec_post, gen_pre, gen_post, trace)
    report.check()
    return report, specialists


def _persist(out: Path, report: RoundReport, generalist: PolicyParams,
             specialists: dict[int, PolicyParams], ctx: LoopContext) -> None:
    final = _round_dir(out, report.round)
    tmp = out / f".round_{report.round}.partial"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    h = ctx.registry.hash
    meta = {**ctx.meta, "round": report.round, "seed": ctx.seed, "progress": ctx.progress}
    save_checkpoint(tmp / "generalist.ckpt", generalist, h, meta)
    for spec in ctx.registry:
        save_checkpoint(tmp / f"specialist_{spec.name}.ckpt", specialists[spec.id], h,
                        {**meta, "embodiment": spec.name})
    (tmp / "report.csv").write_text(report.to_csv())
    (tmp / "trace.csv").write_text(report.trace_csv())
    ev = ctx.evaluation
    stage_meta = {s: {"n_envs": r.rows[0].n_envs if r.rows else ev.n_envs,
                      "n_steps": ev.n_steps, "seed": ev.seed}
                  for s, r in (("specialist_pre", report.specialist_pre),
                               ("specialist_post", report.specialist_post),
                               ("generalist_pre", report.generalist_pre),
                               ("generalist_post", report.generalist_post))}
    # written last: its presence marks the round as complete
    (tmp / "round.json").write_text(json.dumps({"round": report.round, "seed": ctx.seed,
                                                "stages": stage_meta}, indent=1))
    if final.exists():
        shutil.rmtree(final)
    tmp.rename(final)


def run_loop(generalist: PolicyParams, loop: LoopConfig, ctx: LoopContext,
             resume: bool = True) -> tuple[PolicyParams, list[RoundReport]]:
    """Specialize/generalize rounds until the tracking error stalls or max_rounds."""
    reports: list[RoundReport] = []
    start = 1
    if ctx.out_dir is not None and resume:
        done = completed_rounds(ctx.out_dir)
        if done:
            last = done[-1]
            generalist, _ = load_checkpoint(_round_dir(ctx.out_dir, last) / "generalist.ckpt",
                                            ctx.registry.hash)
            reports = [read_round_report(_round_dir(ctx.out_dir, k)) for k in done]
            start = last + 1
    errors = [r.generalist_pre.mean_task_error() for r in reports[:1]]
    errors += [r.generalist_post.mean_task_error() for r in reports]
    gen_pre = reports[-1].generalist_post if reports else None
    for k in range(start, loop.max_rounds + 1):
        if converged(errors, loop.tolerance, loop.patience):
            break
        report, specialists = run_round(generalist, loop, ctx, k, gen_pre)
        if ctx.out_dir is not None:
            _persist(Path(ctx.out_dir), report, generalist, specialists, ctx)
        reports.append(report)
        if not errors:
            errors.append(report.generalist_pre.mean_task_error())
        errors.append(report.generalist_post.mean_task_error())
        gen_pre = report.generalist_post
    return generalist, reports
