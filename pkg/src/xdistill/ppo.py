"""PPO with GAE over a batched multi-embodiment world."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .losses import COMPONENTS, Adam, LossCoefficients, Minibatch, loss_and_grad
from .policy import (PolicyParams, actor_forward, normalize_returns, sample_action,
                     update_value_norm, value_forward)
from .world import TRACKED, SurrogateWorld


class RolloutError(RuntimeError):
    pass


@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    estimation_coef: float = 0.5
    lr: float = 3e-4
    epochs: int = 5
    minibatch_size: int = 4096
    horizon: int = 24
    n_envs: int = 500
    max_grad_norm: float = 1.0
    normalize_values: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.clip <= 0:
            raise ValueError("clip must be positive")

    def coefficients(self, estimation: bool = True) -> LossCoefficients:
        return LossCoefficients(clip=self.clip, entropy=self.entropy_coef, value=self.value_coef,
                                estimation=self.estimation_coef if estimation else 0.0)

    @classmethod
    def from_dict(cls, d: dict | None) -> "PPOConfig":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        if set(d) - names:
            raise ValueError(f"ppo: unknown key(s) {sorted(set(d) - names)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RolloutBuffer:
    """Time-major transitions, arrays shaped (T, n_envs, ...)."""

    embodiment: np.ndarray
    proprio: np.ndarray
    command: np.ndarray
    clock: np.ndarray
    critic_obs: np.ndarray
    actions: np.ndarray
    log_prob: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    latent: np.ndarray
    mask: np.ndarray
    oea: np.ndarray
    tracking: np.ndarray  # |measured - command| for the 5 tracked dims
    last_values: np.ndarray
    collector: str = ""
    episode_returns: list[tuple[int, float]] = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    teacher_mean: np.ndarray | None = None
    teacher_latent: np.ndarray | None = None

    def __len__(self) -> int:
        return self.rewards.size

    @property
    def horizon(self) -> int:
        return self.rewards.shape[0]

    def flat(self, name: str) -> np.ndarray:
        a = getattr(self, name)
        return a.reshape(a.shape[0] * a.shape[1], *a.shape[2:])

    def tracking_errors(self) -> dict[str, float]:
        m = self.tracking.reshape(-1, len(TRACKED)).mean(axis=0)
        return dict(zip(TRACKED, map(float, m)))

    def embodiment_mean_reward(self) -> dict[int, float]:
        out = {}
        for e in np.unique(self.embodiment):
            out[int(e)] = float(self.rewards[self.embodiment == e].mean())
        return out

    def objective(self) -> float:
        """Uniform mean over embodiments of per-embodiment mean step reward."""
        per = self.embodiment_mean_reward()
        return float(np.mean(list(per.values())))

    def select_embodiment(self, emb: int) -> "RolloutBuffer":
        cols = np.flatnonzero(self.embodiment[0] == emb)
        kw = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray) and v.ndim >= 2:
                kw[f.name] = v[:, cols]
            elif f.name == "last_values":
                kw[f.name] = v[cols]
            elif f.name == "episode_returns":
                kw[f.name] = [r for r in v if r[0] == emb]
            else:
                kw[f.name] = v
        return RolloutBuffer(**kw)


class _EpisodeTracker:
    def __init__(self, n):
        self.ret = np.zeros(n)


def collect_rollouts(params: PolicyParams, world: SurrogateWorld, horizon: int,
                     rng: np.random.Generator, deterministic: bool = False) -> RolloutBuffer:
    if world.state is None:
        world.reset()
    tracker = getattr(world, "_episode_tracker", None)
    if tracker is None:
        tracker = world._episode_tracker = _EpisodeTracker(world.n)
    n = world.n
    mask = world.arrays.mask
    cols: dict[str, list] = {k: [] for k in (
        "proprio", "command", "clock", "critic_obs", "actions", "log_prob", "values", "rewards",
        "dones", "latent", "tracking")}
    finished: list[tuple[int, float]] = []
    obs = world.observe()
    for t in range(horizon):
        out = actor_forward(params, obs.proprio, obs.command, obs.clock)
        if deterministic:
            action = out.dist.mean
        else:
            action, _ = sample_action(out.dist, rng)
        log_prob = out.dist.log_prob(action, mask)
        value = value_forward(params, obs.critic)
        command = world.state.command.copy()
        state, done, breakdown = world.step(action)
        reward = breakdown.total
        if not np.all(np.isfinite(reward)):
            i = int(np.flatnonzero(~np.isfinite(reward))[0])
            raise RolloutError(f"non-finite reward: embodiment {int(state.embodiment[i])}, "
                               f"env {i}, step {int(state.step[i])}")
        cols["proprio"].append(obs.proprio)
        cols["command"].append(obs.command)
        cols["clock"].append(obs.clock)
        cols["critic_obs"].append(obs.critic)
        cols["actions"].append(action)
        cols["log_prob"].append(log_prob)
        cols["values"].append(value)
        cols["rewards"].append(reward)
        cols["dones"].append(done.astype(float))
        cols["latent"].append(out.latent)
        cols["tracking"].append(np.abs(world.measured() - command[:, :5]))
        tracker.ret += reward
        if done.any():
            for i in np.flatnonzero(done):
                finished.append((int(world.arrays.ids[i]), float(tracker.ret[i])))
            tracker.ret[done] = 0.0
            world.reset(done)
        obs = world.observe()
        if not (np.all(np.isfinite(obs.proprio)) and np.all(np.isfinite(obs.privileged))):
            i = int(np.flatnonzero(~np.isfinite(obs.critic).all(axis=1))[0])
            raise RolloutError(f"non-finite observation: embodiment {int(world.arrays.ids[i])}, "
                               f"env {i}, step {t}")
    last_values = value_forward(params, obs.critic)
    arrays = {k: np.stack(v) for k, v in cols.items()}
    return RolloutBuffer(
        embodiment=np.broadcast_to(world.arrays.ids, (horizon, n)).copy(),
        mask=np.broadcast_to(mask, (horizon, *mask.shape)).copy(),
        oea=np.broadcast_to(world.arrays.oea, (horizon, *world.arrays.oea.shape)).copy(),
        last_values=last_values,
        collector=params.digest(),
        episode_returns=finished,
        **arrays,
    )


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, last_values: np.ndarray,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    T = rewards.shape[0]
    adv = np.zeros_like(rewards, dtype=float)
    running = np.zeros_like(last_values, dtype=float)
    for t in reversed(range(T)):
        next_v = last_values if t == T - 1 else values[t + 1]
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_v * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv, adv + values


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> RolloutBuffer:
    buffer.advantages, buffer.returns = gae(buffer.rewards, buffer.values, buffer.dones,
                                            buffer.last_values, gamma, lam)
    return buffer


def normalize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-8)


def _minibatch(buffer: RolloutBuffer, flat: dict, idx: np.ndarray) -> Minibatch:
    return Minibatch(
        proprio=flat["proprio"][idx], command=flat["command"][idx], clock=flat["clock"][idx],
        critic_obs=flat["critic_obs"][idx], actions=flat["actions"][idx],
        old_log_prob=flat["log_prob"][idx], advantages=flat["advantages"][idx],
        returns=flat["returns"][idx], mask=flat["mask"][idx], oea=flat["oea"][idx],
        teacher_mean=flat["teacher_mean"][idx] if "teacher_mean" in flat else None,
        teacher_latent=flat["teacher_latent"][idx] if "teacher_latent" in flat else None,
    )


def optimize(params: PolicyParams, buffer: RolloutBuffer, coef: LossCoefficients,
             config: PPOConfig, optimizer: Adam, rng: np.random.Generator,
             trace: list | None = None) -> dict[str, float]:
    """Minibatch epochs on one buffer; returns mean loss components."""
    if buffer.advantages is None:
        raise ValueError("compute_gae() before optimizing")
    names = ["proprio", "command", "clock", "critic_obs", "actions", "log_prob", "returns",
             "mask", "oea"]
    if coef.action != 0.0 or coef.latent != 0.0:
        names += ["teacher_mean", "teacher_latent"]
    dt = params.dtype
    flat = {k: buffer.flat(k).astype(dt, copy=False) for k in names}
    if config.normalize_values:
        update_value_norm(params, buffer.returns)
    flat["returns"] = normalize_returns(params, buffer.flat("returns")).astype(dt, copy=False)
    flat["advantages"] = normalize(buffer.flat("advantages")).astype(dt, copy=False)
    N = len(flat["advantages"])
    mb = min(config.minibatch_size, N)
    sums = {k: 0.0 for k in COMPONENTS}
    count = 0
    for _ in range(config.epochs):
        perm = rng.permutation(N)
        for start in range(0, N, mb):
            idx = perm[start:start + mb]
            report, grads = loss_and_grad(params, _minibatch(buffer, flat, idx), coef)
            optimizer.step(params, grads)
            if trace is not None:
                trace.append(report)
            for k in COMPONENTS:
                sums[k] += report[k]
            count += 1
    return {k: v / count for k, v in sums.items()}


def ppo_update(params: PolicyParams, buffer: RolloutBuffer, config: PPOConfig, optimizer: Adam,
               rng: np.random.Generator, estimation: bool = True,
               trace: list | None = None) -> dict[str, float]:
    return optimize(params, buffer, config.coefficients(estimation), config, optimizer, rng, trace)


LOG_FIELDS = ["update", "progress", "lr", "objective", *COMPONENTS,
              *[f"E_{k}" for k in TRACKED], *[f"run_E_{k}" for k in ("vx", "vy", "yaw_rate")]]


def stagger_episodes(world: SurrogateWorld, rng: np.random.Generator) -> None:
    """Spread step counters over the horizon so batches mix episode phases."""
    if world.state is None:
        world.reset()
    world.state.step[:] = rng.integers(0, world.config.horizon, world.n)


class Trainer:
    """Alternating collect / update loop with curriculum bookkeeping."""

    def __init__(self, params: PolicyParams, world: SurrogateWorld, config: PPOConfig,
                 seed: int = 0, estimation: bool = True, log_path: str | Path | None = None,
                 start_update: int = 0):
        self.params = params
        self.world = world
        self.config = config
        self.estimation = estimation
        self.optimizer = Adam(config.lr, max_grad_norm=config.max_grad_norm)
        self.rng = np.random.default_rng([seed, 7919])
        if world.state is None:
            stagger_episodes(world, self.rng)
        self.update_index = start_update
        self.log_path = Path(log_path) if log_path else None
        self.history: list[dict] = []
        self._run_err: list[np.ndarray] = []
        names = {int(e): world.registry[int(e)].name for e in np.unique(world.arrays.ids)}
        self.embodiment_names = names
        self.log_fields = LOG_FIELDS + [f"return_{n}" for n in names.values()]

    def _log(self, row: dict) -> None:
        self.history.append(row)
        if self.log_path is None:
            return
        new = not self.log_path.exists()
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", newline="", buffering=1) as f:
            w = csv.DictWriter(f, fieldnames=self.log_fields)
            if new:
                w.writeheader()
            w.writerow(row)

    def update(self, update_fn: Callable | None = None) -> dict:
        cfg = self.config
        buffer = collect_rollouts(self.params, self.world, cfg.horizon, self.rng)
        compute_gae(buffer, cfg.gamma, cfg.lam)
        if update_fn is None:
            losses = ppo_update(self.params, buffer, cfg, self.optimizer, self.rng,
                                estimation=self.estimation)
        else:
            losses = update_fn(self.params, buffer, self.optimizer, self.rng)
        errs = buffer.tracking_errors()
        task = np.array([errs["vx"], errs["vy"], errs["yaw_rate"]])
        self._run_err = (self._run_err + [task])[-self.world.config.curriculum.window:]
        self.world.curriculum.record(float(task.sum()))
        run = np.mean(self._run_err, axis=0)
        per = buffer.embodiment_mean_reward()
        row = {"update": self.update_index, "progress": self.world.curriculum.progress,
               "lr": self.optimizer.lr,
               "objective": buffer.objective(), **losses,
               **{f"E_{k}": v for k, v in errs.items()},
               "run_E_vx": run[0], "run_E_vy": run[1], "run_E_yaw_rate": run[2],
               **{f"return_{self.embodiment_names[e]}": v for e, v in per.items()}}
        self._log(row)
        self.update_index += 1
        self.last_buffer = buffer
        return row

    def train(self, n_updates: int, callback: Callable[[dict], None] | None = None) -> list[dict]:
        rows = []
        for _ in range(n_updates):
            row = self.update()
            rows.append(row)
            if callback is not None:
                callback(row)
        return rows
