"""Actor-critic networks with explicit forward caches and hand-written backprop.

The actor is split so the latent ``e`` depends on the proprioception window
only:

    proprio --trunk(tanh)--> e --+--> [e, command, clock] --head--> action mean
                                 +--> estimator --> o_ea estimate

The critic is a separate tanh MLP over the privileged observation.
"""

from __future__ import annotations

import copy
import io
import json
import zipfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .embodiment import OEA_DIM, UNIFIED_DIM
from .world import COMMAND_DIM, FRAME_DIM, PRIVILEGED_DIM

LOG_2PI = float(np.log(2.0 * np.pi))
CHECKPOINT_VERSION = 1
# non-trainable entries of PolicyParams.arrays
STATE_KEYS = ("value_norm",)


@dataclass
class PolicyConfig:
    proprio_dim: int = 5 * FRAME_DIM
    command_dim: int = COMMAND_DIM
    clock_dim: int = 2
    privileged_dim: int = PRIVILEGED_DIM
    action_dim: int = UNIFIED_DIM
    oea_dim: int = OEA_DIM
    trunk: tuple[int, ...] = (256, 256)
    head: tuple[int, ...] = (128,)
    critic: tuple[int, ...] = (256, 256, 256)
    init_log_std: float = -1.0
    log_std_min: float = -4.0
    log_std_max: float = 1.0
    head_init_scale: float = 0.01
    dtype: str = "float64"

    @property
    def latent_dim(self) -> int:
        return self.trunk[-1]

    @property
    def actor_dim(self) -> int:
        return self.proprio_dim + self.command_dim + self.clock_dim

    @property
    def critic_dim(self) -> int:
        return self.actor_dim + self.privileged_dim

    @classmethod
    def from_dict(cls, d: dict | None) -> "PolicyConfig":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        if set(d) - names:
            raise ValueError(f"policy: unknown key(s) {sorted(set(d) - names)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _layer_sizes(cfg: PolicyConfig) -> dict[str, list[int]]:
    return {
        "trunk": [cfg.proprio_dim, *cfg.trunk],
        "head": [cfg.latent_dim + cfg.command_dim + cfg.clock_dim, *cfg.head, cfg.action_dim],
        "est": [cfg.latent_dim, cfg.oea_dim],
        "critic": [cfg.critic_dim, *cfg.critic, 1],
    }


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.normal(size=(max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


@dataclass
class PolicyParams:
    config: PolicyConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dtype(self) -> np.dtype:
        return self.arrays["log_std"].dtype

    def n_layers(self, net: str) -> int:
        return len(_layer_sizes(self.config)[net]) - 1

    def log_std(self) -> np.ndarray:
        c = self.config
        return np.clip(self.arrays["log_std"], c.log_std_min, c.log_std_max)

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def digest(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for k in sorted(self.arrays):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.arrays[k]).tobytes())
        return h.hexdigest()[:16]


def init_params(config: PolicyConfig, seed: int = 0) -> PolicyParams:
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for net, sizes in _layer_sizes(config).items():
        n = len(sizes) - 1
        for i in range(n):
            gain = 1.0
            if net == "head" and i == n - 1:
                gain = config.head_init_scale
            arrays[f"{net}.{i}.W"] = _orthogonal(rng, sizes[i], sizes[i + 1], gain)
            arrays[f"{net}.{i}.b"] = np.zeros(sizes[i + 1])
    arrays["log_std"] = np.full(config.action_dim, float(config.init_log_std))
    dtype = np.dtype(config.dtype)
    arrays = {k: v.astype(dtype) for k, v in arrays.items()}
    # running return statistics (mean, var, count); the critic regresses standardized returns
    arrays["value_norm"] = np.array([0.0, 1.0, 0.0])
    return PolicyParams(config, arrays)


def zero_params(config: PolicyConfig) -> PolicyParams:
    p = init_params(config)
    for k, v in p.arrays.items():
        if k not in STATE_KEYS:
            v[...] = 0.0
    return p


def clone_params(params: PolicyParams) -> PolicyParams:
    return PolicyParams(copy.deepcopy(params.config),
                        {k: v.copy() for k, v in params.arrays.items()})


# ----------------------------------------------------------------- MLP core
def mlp_forward(arrays, net: str, n_layers: int, x: np.ndarray, tanh_out: bool):
    h = np.asarray(x, dtype=arrays[f"{net}.0.W"].dtype)
    acts = [h]
    for i in range(n_layers):
        z = h @ arrays[f"{net}.{i}.W"] + arrays[f"{net}.{i}.b"]
        h = np.tanh(z) if (i < n_layers - 1 or tanh_out) else z
        acts.append(h)
    return h, acts


def mlp_backward(arrays, net: str, n_layers: int, acts, grad_out: np.ndarray, tanh_out: bool,
                 grads: dict, need_input_grad: bool = False):
    g = np.asarray(grad_out, dtype=acts[-1].dtype)
    for i in reversed(range(n_layers)):
        if i < n_layers - 1 or tanh_out:
            g = g * (1.0 - acts[i + 1] ** 2)
        gw = acts[i].T @ g
        gb = g.sum(axis=0)
        kw, kb = f"{net}.{i}.W", f"{net}.{i}.b"
        grads[kw] = grads[kw] + gw if kw in grads else gw
        grads[kb] = grads[kb] + gb if kb in grads else gb
        if i > 0 or need_input_grad:
            g = g @ arrays[kw].T
    return g if need_input_grad else None


# ------------------------------------------------------------ distributions
@dataclass
class ActionDistribution:
    mean: np.ndarray
    log_std: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def log_prob(self, action: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        return gaussian_log_prob(self.mean, self.log_std, action, mask)

    def entropy(self, mask: np.ndarray | None = None) -> np.ndarray:
        per = self.log_std + 0.5 * (LOG_2PI + 1.0)
        per = np.broadcast_to(per, self.mean.shape)
        if mask is not None:
            per = per * mask
        return per.sum(axis=-1)


def gaussian_log_prob(mean, log_std, action, mask=None):
    z = (action - mean) * np.exp(-log_std)
    per = -0.5 * z * z - log_std - 0.5 * LOG_2PI
    if mask is not None:
        per = per * mask
    return per.sum(axis=-1)


def sample_action(dist: ActionDistribution, rng: np.random.Generator):
    eps = rng.standard_normal(dist.mean.shape)
    action = dist.mean + dist.std * eps
    return action, dist.log_prob(action)


# ------------------------------------------------------------------ forward
@dataclass
class ActorOutput:
    dist: ActionDistribution
    latent: np.ndarray
    oea_hat: np.ndarray
    cache: dict


def latent_forward(params: PolicyParams, proprio: np.ndarray):
    cfg = params.config
    if proprio.shape[-1] != cfg.proprio_dim:
        raise ValueError(f"proprio has {proprio.shape[-1]} features, expected {cfg.proprio_dim}")
    return mlp_forward(params.arrays, "trunk", params.n_layers("trunk"), proprio, tanh_out=True)


def actor_forward(params: PolicyParams, proprio: np.ndarray, command: np.ndarray,
                  clock: np.ndarray) -> ActorOutput:
    cfg = params.config
    if command.shape[-1] != cfg.command_dim or clock.shape[-1] != cfg.clock_dim:
        raise ValueError("command/clock dimension mismatch")
    latent, trunk_acts = latent_forward(params, proprio)
    head_in = np.concatenate([latent, command.astype(latent.dtype, copy=False),
                              clock.astype(latent.dtype, copy=False)], axis=-1)
    mean, head_acts = mlp_forward(params.arrays, "head", params.n_layers("head"), head_in,
                                  tanh_out=False)
    oea_hat = latent @ params.arrays["est.0.W"] + params.arrays["est.0.b"]
    dist = ActionDistribution(mean=mean, log_std=params.log_std())
    return ActorOutput(dist, latent, oea_hat, {"trunk": trunk_acts, "head": head_acts})


def critic_forward(params: PolicyParams, critic_obs: np.ndarray, return_cache: bool = False):
    cfg = params.config
    if critic_obs.shape[-1] != cfg.critic_dim:
        raise ValueError(f"critic obs has {critic_obs.shape[-1]} features, expected {cfg.critic_dim}")
    v, acts = mlp_forward(params.arrays, "critic", params.n_layers("critic"), critic_obs,
                          tanh_out=False)
    v = v[..., 0]
    return (v, acts) if return_cache else v


def value_forward(params: PolicyParams, critic_obs: np.ndarray) -> np.ndarray:
    """Critic output mapped back to return units."""
    mean, var, _ = params.arrays["value_norm"]
    return mean + np.sqrt(var) * critic_forward(params, critic_obs)


def update_value_norm(params: PolicyParams, returns: np.ndarray) -> None:
    """Merge a batch of returns into the running mean/variance.

    The critic's output layer is rescaled so its predictions in return units
    are unchanged by the new statistics.
    """
    stats = params.arrays["value_norm"]
    mean, var, count = stats
    x = np.ravel(returns)
    n = x.size
    b_mean, b_var = x.mean(), x.var()
    total = count + n
    delta = b_mean - mean
    new_mean = mean + delta * n / total
    m2 = var * count + b_var * n + delta ** 2 * count * n / total
    new_var = max(m2 / total, 1e-8)
    old_std, new_std = np.sqrt(var), np.sqrt(new_var)
    last = params.n_layers("critic") - 1
    W, b = params.arrays[f"critic.{last}.W"], params.arrays[f"critic.{last}.b"]
    W *= old_std / new_std
    b[:] = (old_std * b + mean - new_mean) / new_std
    stats[:] = (new_mean, new_var, total)


def normalize_returns(params: PolicyParams, returns: np.ndarray) -> np.ndarray:
    mean, var, _ = params.arrays["value_norm"]
    return (returns - mean) / np.sqrt(var)


def actor_backward(params: PolicyParams, out: ActorOutput, d_mean=None, d_latent=None,
                   d_oea=None, grads: dict | None = None) -> dict:
    """Accumulate parameter gradients given upstream gradients of the actor outputs."""
    grads = {} if grads is None else grads
    cfg = params.config
    n = out.latent.shape[0]
    d_lat = np.zeros((n, cfg.latent_dim)) if d_latent is None else d_latent.copy()
    if d_mean is not None:
        d_head_in = mlp_backward(params.arrays, "head", params.n_layers("head"),
                                 out.cache["head"], d_mean, False, grads, need_input_grad=True)
        d_lat += d_head_in[:, :cfg.latent_dim]
    if d_oea is not None:
        g = out.latent.T @ d_oea
        grads["est.0.W"] = grads.get("est.0.W", 0) + g
        grads["est.0.b"] = grads.get("est.0.b", 0) + d_oea.sum(axis=0)
        d_lat += d_oea @ params.arrays["est.0.W"].T
    mlp_backward(params.arrays, "trunk", params.n_layers("trunk"), out.cache["trunk"], d_lat,
                 True, grads)
    return grads


# --------------------------------------------------------------- checkpoint
class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, params: PolicyParams, registry_hash: str,
                    meta: dict | None = None) -> None:
    """Zip archive: ``meta.json`` plus one ``.npy`` per parameter tensor."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "version": CHECKPOINT_VERSION,
        "registry_hash": registry_hash,
        "config": params.config.to_dict(),
        "shapes": {k: list(v.shape) for k, v in params.arrays.items()},
        "meta": meta or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        zf.writestr("meta.json", json.dumps(header, indent=1, sort_keys=True))
        for k, v in params.arrays.items():
            buf = io.BytesIO()
            np.save(buf, v, allow_pickle=False)
            zf.writestr(f"{k}.npy", buf.getvalue())
    tmp.replace(path)


def load_checkpoint(path: str | Path, registry_hash: str | None = None,
                    force: bool = False) -> tuple[PolicyParams, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("meta.json"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
        if registry_hash is not None and header["registry_hash"] != registry_hash and not force:
            raise CheckpointError(
                f"{path}: trained against registry {header['registry_hash']}, "
                f"current registry is {registry_hash}")
        arrays = {}
        for k, shape in header["shapes"].items():
            arr = np.load(io.BytesIO(zf.read(f"{k}.npy")), allow_pickle=False)
            if list(arr.shape) != shape:
                raise CheckpointError(f"{path}: tensor {k} has shape {arr.shape}, header says {shape}")
            arrays[k] = arr
    return PolicyParams(PolicyConfig.from_dict(header["config"]), arrays), header
