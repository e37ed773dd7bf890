"""Command-tracking evaluation, latent export and report comparison.

E_d for command dimension d is the mean over envs and steps of
|measured_d - commanded_d|, using the deterministic (mean) action. Envs that
fall stop contributing from the falling step on; the fraction of envs that fell
is reported as ``fall_rate``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from sklearn.decomposition import PCA
from sklearn.metrics import silhouette_score as _sk_silhouette

from .embodiment import Registry
from .policy import PolicyParams, actor_forward, latent_forward
from .world import COMMAND_DIM, F, FREQ_RANGE, TRACKED, Curriculum, SurrogateWorld, WorldConfig

METRICS = ("E_vx", "E_vy", "E_w", "E_h", "E_p")
TASK_METRICS = METRICS[:3]
REPORT_FIELDS = ("embodiment", *METRICS, "fall_rate", "n_envs", "n_steps", "seed", "ckpt")
DIM_INDEX = {name: i for i, name in enumerate(TRACKED)} | {m: i for i, m in enumerate(METRICS)}


@dataclass(frozen=True)
class EvalProtocol:
    n_envs: int = 256
    n_steps: int = 500
    seed: int = 0
    mode: str = "resampled"  # or "single"
    single_dim: str | None = None
    single_value: float = 0.0
    max_fall_rate: float | None = None

    def __post_init__(self):
        if self.mode not in ("resampled", "single"):
            raise ValueError(f"unknown evaluation mode {self.mode!r}")
        if self.mode == "single" and self.single_dim not in DIM_INDEX:
            raise ValueError(f"single-command mode needs single_dim in {TRACKED}")
        if self.n_envs < 1 or self.n_steps < 0:
            raise ValueError("n_envs must be >= 1 and n_steps >= 0")

    @classmethod
    def from_dict(cls, d: dict | None) -> "EvalProtocol":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        if set(d) - names:
            raise ValueError(f"evaluation: unknown key(s) {sorted(set(d) - names)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EmbodimentErrors:
    embodiment: str
    E_vx: float
    E_vy: float
    E_w: float
    E_h: float
    E_p: float
    fall_rate: float
    n_envs: int
    n_steps: int
    seed: int
    ckpt: str = ""

    def metric(self, name: str) -> float:
        return getattr(self, name)

    @property
    def task_error(self) -> float:
        return float(np.mean([self.E_vx, self.E_vy, self.E_w]))


@dataclass
class TrackingReport:
    rows: list[EmbodimentErrors] = field(default_factory=list)

    def __getitem__(self, name: str) -> EmbodimentErrors:
        for r in self.rows:
            if r.embodiment == name:
                return r
        raise KeyError(name)

    @property
    def embodiments(self) -> list[str]:
        return [r.embodiment for r in self.rows]

    def mean_task_error(self) -> float:
        return float(np.mean([r.task_error for r in self.rows]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in self.rows:
            w.writerow([r.embodiment, *(repr(float(getattr(r, m))) for m in METRICS),
                        repr(float(r.fall_rate)), r.n_envs, r.n_steps, r.seed, r.ckpt])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrackingReport":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != REPORT_FIELDS:
            raise ValueError(f"unexpected report header {reader.fieldnames}")
        rows = []
        for d in reader:
            rows.append(EmbodimentErrors(
                embodiment=d["embodiment"], **{m: float(d[m]) for m in METRICS},
                fall_rate=float(d["fall_rate"]), n_envs=int(d["n_envs"]),
                n_steps=int(d["n_steps"]), seed=int(d["seed"]), ckpt=d["ckpt"]))
        return cls(rows)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())

    @classmethod
    def read(cls, path: str | Path) -> "TrackingReport":
        return cls.from_csv(Path(path).read_text())

    def format_table(self) -> str:
        head = f"{'embodiment':<16}" + "".join(f"{m:>9}" for m in METRICS) + f"{'falls':>8}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.embodiment:<16}" + "".join(f"{getattr(r, m):9.4f}" for m in METRICS)
                         + f"{r.fall_rate:8.3f}")
        return "\n".join(lines)


# ------------------------------------------------------------ core metric
def tracking_error(measured: np.ndarray, commanded: np.ndarray,
                   valid: np.ndarray | None = None) -> np.ndarray:
    """Per-dimension mean |measured - commanded| over the leading (step, env) axes."""
    err = np.abs(np.asarray(measured, float) - np.asarray(commanded, float))
    if valid is None:
        return err.reshape(-1, err.shape[-1]).mean(axis=0)
    v = np.asarray(valid, bool)
    n = v.sum()
    if n == 0:
        return np.zeros(err.shape[-1])
    return err[v].sum(axis=0) / n


Controller = Callable[[object], np.ndarray]


def policy_controller(params: PolicyParams) -> Controller:
    def act(world) -> np.ndarray:
        obs = world.observe()
        return actor_forward(params, obs.proprio, obs.command, obs.clock).dist.mean
    return act


def run_tracking(world, controller: Controller, n_steps: int):
    """Roll ``world`` for ``n_steps`` and accumulate per-env error sums.

    Returns (sums (n, 5), counts (n,), fell (n,) bool).
    """
    if world.state is None:
        world.reset()
    n = world.n
    sums = np.zeros((n, len(TRACKED)))
    counts = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    fell = np.zeros(n, dtype=bool)
    for _ in range(n_steps):
        command = world.state.command[:, :len(TRACKED)].copy()
        state, done, _ = world.step(controller(world))
        newly = state.fallen & active
        use = active & ~state.fallen
        err = np.abs(world.measured() - command)
        sums[use] += err[use]
        counts[use] += 1
        fell |= newly
        active &= ~newly
        if done.any():
            world.reset(done)
    return sums, counts, fell


def _aggregate(names: Sequence[str], ids: np.ndarray, sums, counts, fell, n_steps: int,
               seed: int, ckpt: str, order: Sequence[int]) -> TrackingReport:
    rows = []
    for emb in order:
        cols = np.flatnonzero(ids == emb)
        total = counts[cols].sum()
        e = sums[cols].sum(axis=0) / total if total > 0 else np.zeros(len(TRACKED))
        rows.append(EmbodimentErrors(
            names[int(emb)], *map(float, e), fall_rate=float(fell[cols].mean()),
            n_envs=int(cols.size), n_steps=n_steps, seed=seed, ckpt=ckpt))
    return TrackingReport(rows)


def single_command(dim: str, value: float, freq: float | None = None) -> np.ndarray:
    cmd = np.zeros(COMMAND_DIM)
    cmd[DIM_INDEX[dim]] = value
    cmd[F] = float(np.mean(FREQ_RANGE)) if freq is None else freq
    return cmd


def make_eval_world(registry: Registry, protocol: EvalProtocol,
                    world_config: WorldConfig | None = None,
                    embodiments: Sequence[int] | None = None) -> SurrogateWorld:
    ids = list(registry.ids if embodiments is None else embodiments)
    alloc = [ids[i % len(ids)] for i in range(max(protocol.n_envs, len(ids)))]
    world = SurrogateWorld(registry, alloc, config=world_config, seed=protocol.seed,
                           curriculum=Curriculum(progress=1.0))
    if protocol.mode == "single":
        world.fixed_command = single_command(protocol.single_dim, protocol.single_value)
    return world


def evaluate_tracking(params: PolicyParams | Controller, registry: Registry,
                      protocol: EvalProtocol | None = None,
                      world_config: WorldConfig | None = None,
                      embodiments: Sequence[int] | None = None, ckpt: str = "",
                      world=None) -> TrackingReport:
    """Deterministic tracking evaluation at the finishing command ranges.

    ``params`` may be a policy or any callable mapping the world to actions;
    ``world`` substitutes a prepared (e.g. scripted) world.
    """
    protocol = protocol or EvalProtocol()
    controller = policy_controller(params) if isinstance(params, PolicyParams) else params
    if world is None:
        world = make_eval_world(registry, protocol, world_config, embodiments)
    sums, counts, fell = run_tracking(world, controller, protocol.n_steps)
    ids = np.asarray(world.arrays.ids)
    order = [i for i in (embodiments or registry.ids) if np.any(ids == i)]
    names = {s.id: s.name for s in registry}
    return _aggregate(names, ids, sums, counts, fell, protocol.n_steps, protocol.seed, ckpt,
                      order)


def evaluate_single_command(params: PolicyParams | Controller, registry: Registry,
                            embodiment: int | str, dim: str, value: float,
                            protocol: EvalProtocol | None = None,
                            world_config: WorldConfig | None = None) -> float:
    base = protocol or EvalProtocol()
    proto = EvalProtocol(**{**base.to_dict(), "mode": "single", "single_dim": dim,
                            "single_value": value})
    spec = registry[embodiment]
    report = evaluate_tracking(params, registry, proto, world_config, embodiments=[spec.id])
    return report[spec.name].metric(METRICS[DIM_INDEX[dim]])


# --------------------------------------------------------- scripted worlds
class ScriptedWorld:
    """Drop-in world whose readings are ``command + residual(step)``.

    Used to check the tracking metric against closed forms. ``residual`` maps
    the step index to a (5,) offset added to the commanded values.
    """

    @dataclass
    class _State:
        command: np.ndarray
        fallen: np.ndarray
        step: np.ndarray

    @dataclass
    class _Arrays:
        ids: np.ndarray

    def __init__(self, embodiment_ids: Sequence[int], command: np.ndarray,
                 residual: Callable[[int], np.ndarray], fall_at: Mapping[int, int] | None = None):
        self.n = len(embodiment_ids)
        self.arrays = self._Arrays(np.asarray(embodiment_ids))
        self._command = np.broadcast_to(np.asarray(command, float), (self.n, COMMAND_DIM)).copy()
        self.residual = residual
        self.fall_at = dict(fall_at or {})
        self.state = None

    def reset(self, env_mask=None):
        if self.state is None:
            self.state = self._State(self._command.copy(), np.zeros(self.n, bool),
                                     np.zeros(self.n, np.int64))
        return self.state

    def observe(self):
        return None

    def step(self, actions):
        s = self.state
        s.step = s.step + 1
        s.fallen = np.array([self.fall_at.get(i) == int(s.step[i]) for i in range(self.n)])
        return s, s.fallen.copy(), None

    def measured(self) -> np.ndarray:
        s = self.state
        out = s.command[:, :len(TRACKED)].copy()
        for i in range(self.n):
            out[i] += self.residual(int(s.step[i]) - 1)
        return out


# ---------------------------------------------------------------- latents
@dataclass
class LatentDump:
    embodiment: np.ndarray
    step: np.ndarray
    z: np.ndarray
    projection: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.embodiment)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        dim = self.z.shape[1] if self.z.ndim == 2 else 0
        header = ["embodiment", "step", *(f"z{i}" for i in range(dim)), "p0", "p1"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            proj = self.projection if self.projection is not None else np.full((len(self), 2), np.nan)
            for e, t, z, p in zip(self.embodiment, self.step, self.z, proj):
                w.writerow([int(e), int(t), *(repr(float(v)) for v in z),
                            *(repr(float(v)) for v in p)])


def project_2d(z: np.ndarray) -> np.ndarray:
    """Top-two principal-component scores, fit on ``z`` itself."""
    if len(z) < 2:
        return np.zeros((len(z), 2))
    k = min(2, z.shape[1], len(z))
    p = PCA(n_components=k, svd_solver="full").fit_transform(z)
    return np.pad(p, ((0, 0), (0, 2 - k)))


def forward_walk_command(vx: float = 0.5) -> np.ndarray:
    return single_command("vx", vx)


def dump_latents(params: PolicyParams, registry: Registry, n_steps: int,
                 command: np.ndarray | None = None, seed: int = 0,
                 world_config: WorldConfig | None = None, warmup: int = 0) -> LatentDump:
    """One env per embodiment walking forward under the mean action."""
    world = SurrogateWorld(registry, registry.ids, config=world_config, seed=seed,
                           curriculum=Curriculum(progress=1.0))
    world.fixed_command = forward_walk_command() if command is None else command
    world.reset()
    controller = policy_controller(params)
    for _ in range(warmup):
        _, done, _ = world.step(controller(world))
        if done.any():
            world.reset(done)
    emb, steps, zs = [], [], []
    for t in range(n_steps):
        obs = world.observe()
        z, _ = latent_forward(params, obs.proprio)
        emb.append(world.arrays.ids.copy())
        steps.append(np.full(world.n, t))
        zs.append(z)
        _, done, _ = world.step(controller(world))
        if done.any():
            world.reset(done)
    if n_steps == 0:
        return LatentDump(np.zeros(0, int), np.zeros(0, int),
                          np.zeros((0, params.config.latent_dim)), np.zeros((0, 2)))
    z = np.concatenate(zs)
    return LatentDump(np.concatenate(emb), np.concatenate(steps), z, project_2d(z))


def silhouette(z: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient with Euclidean distance."""
    return float(_sk_silhouette(z, labels, metric="euclidean"))


# ------------------------------------------------------------- comparison
@dataclass
class ReportDiff:
    diffs: dict[tuple[str, str], float]
    wins_a: int
    wins_b: int
    ties: int

    def format_table(self) -> str:
        names = sorted({e for e, _ in self.diffs}, key=list(dict.fromkeys(e for e, _ in self.diffs)).index)
        head = f"{'embodiment':<16}" + "".join(f"{m:>10}" for m in METRICS)
        lines = [head, "-" * len(head)]
        for e in names:
            lines.append(f"{e:<16}" + "".join(f"{self.diffs[e, m]:+10.4f}" for m in METRICS))
        lines.append(f"wins a={self.wins_a} b={self.wins_b} ties={self.ties}")
        return "\n".join(lines)


def compare_reports(a: TrackingReport, b: TrackingReport) -> ReportDiff:
    """Signed differences a - b per embodiment and metric; lower error wins."""
    if a.embodiments != b.embodiments:
        raise ValueError(f"embodiment sets differ: {a.embodiments} vs {b.embodiments}")
    diffs = {}
    wins_a = wins_b = ties = 0
    for ra, rb in zip(a.rows, b.rows):
        if (ra.n_envs, ra.n_steps) != (rb.n_envs, rb.n_steps):
            raise ValueError(f"protocol mismatch for {ra.embodiment}: "
                             f"{ra.n_envs}x{ra.n_steps} vs {rb.n_envs}x{rb.n_steps}")
        for m in METRICS:
            d = ra.metric(m) - rb.metric(m)
            diffs[ra.embodiment, m] = d
            if d < 0:
                wins_a += 1
            elif d > 0:
                wins_b += 1
            else:
                ties += 1
    return ReportDiff(diffs, wins_a, wins_b, ties)
