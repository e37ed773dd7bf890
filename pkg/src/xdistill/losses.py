"""Training losses and their analytic gradients.

    total = surrogate - c_ent * entropy + c_v * value + c_est * estimation
            + alpha * action_match + beta * latent_match

``surrogate`` is the clipped PPO objective (negated). ``action_match`` is the
squared error between the actor's mean action and a teacher action over the
embodiment's claimed slots; ``latent_match`` the squared error between the
trunk latent and a teacher latent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import (STATE_KEYS, PolicyParams, actor_backward, actor_forward, critic_forward,
                     mlp_backward)


class NumericalError(FloatingPointError):
    """A loss component or gradient became non-finite."""

    def __init__(self, component: str, detail: str = ""):
        self.component = component
        super().__init__(f"non-finite {component}" + (f": {detail}" if detail else ""))


@dataclass
class LossCoefficients:
    clip: float = 0.2
    entropy: float = 0.005
    value: float = 0.5
    estimation: float = 0.5
    action: float = 0.0
    latent: float = 0.0


@dataclass
class Minibatch:
    proprio: np.ndarray
    command: np.ndarray
    clock: np.ndarray
    critic_obs: np.ndarray
    actions: np.ndarray
    old_log_prob: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    mask: np.ndarray
    oea: np.ndarray
    teacher_mean: np.ndarray | None = None
    teacher_latent: np.ndarray | None = None

    def __len__(self) -> int:
        return self.proprio.shape[0]


COMPONENTS = ("surrogate", "entropy", "value", "estimation", "action", "latent", "total",
              "approx_kl", "clip_frac")


def _check(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalError(name)


def _as_dtype(mb: Minibatch, dtype) -> Minibatch:
    if mb.proprio.dtype == dtype:
        return mb
    cast = {f: (None if getattr(mb, f) is None else np.asarray(getattr(mb, f), dtype))
            for f in mb.__dataclass_fields__}
    return Minibatch(**cast)


def loss_and_grad(params: PolicyParams, mb: Minibatch, coef: LossCoefficients,
                  need_grad: bool = True) -> tuple[dict[str, float], dict[str, np.ndarray]]:
    B = len(mb)
    mb = _as_dtype(mb, params.dtype)
    out = actor_forward(params, mb.proprio, mb.command, mb.clock)
    mean = out.dist.mean
    log_std = out.dist.log_std
    inv_std = np.exp(-log_std)
    mask = mb.mask

    # PPO clipped surrogate
    z = (mb.actions - mean) * inv_std
    log_prob = ((-0.5 * z * z - log_std - 0.5 * np.log(2 * np.pi)) * mask).sum(axis=1)
    log_ratio = log_prob - mb.old_log_prob
    ratio = np.exp(log_ratio)
    adv = mb.advantages
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - coef.clip, 1.0 + coef.clip) * adv
    use_unclipped = surr1 <= surr2
    surrogate = -np.mean(np.where(use_unclipped, surr1, surr2))

    entropy = np.mean((mask * (log_std + 0.5 * (np.log(2 * np.pi) + 1.0))).sum(axis=1))

    value, critic_acts = critic_forward(params, mb.critic_obs, return_cache=True)
    value_err = value - mb.returns
    value_loss = np.mean(value_err ** 2)

    est_err = out.oea_hat - mb.oea
    estimation = np.mean(est_err ** 2)

    action_loss = 0.0
    latent_loss = 0.0
    if coef.action != 0.0 or coef.latent != 0.0:
        if mb.teacher_mean is None or mb.teacher_latent is None:
            raise ValueError("distillation terms need teacher_mean and teacher_latent")
        act_err = (mean - mb.teacher_mean) * mask
        action_loss = np.sum(act_err ** 2) / np.sum(mask)
        lat_err = out.latent - mb.teacher_latent
        latent_loss = np.mean(lat_err ** 2)

    report = {
        "surrogate": float(surrogate),
        "entropy": float(entropy),
        "value": float(value_loss),
        "estimation": float(estimation),
        "action": float(action_loss),
        "latent": float(latent_loss),
    }
    for k, v in report.items():
        _check(k, v)
    total = (surrogate - coef.entropy * entropy + coef.value * value_loss
             + coef.estimation * estimation)
    if coef.action != 0.0:
        total = total + coef.action * action_loss
    if coef.latent != 0.0:
        total = total + coef.latent * latent_loss
    report["total"] = float(total)
    report["approx_kl"] = float(np.mean((ratio - 1.0) - log_ratio))
    report["clip_frac"] = float(np.mean(np.abs(ratio - 1.0) > coef.clip))
    _check("total", total)
    if not need_grad:
        return report, {}

    grads: dict[str, np.ndarray] = {}
    # d surrogate / d log_prob
    d_lp = np.where(use_unclipped, -adv * ratio / B, 0.0)
    d_mean = d_lp[:, None] * z * inv_std * mask
    d_log_std = (d_lp[:, None] * (z * z - 1.0) * mask).sum(axis=0)
    d_log_std -= coef.entropy * mask.mean(axis=0)
    if coef.action != 0.0:
        d_mean = d_mean + coef.action * 2.0 * act_err * mask / np.sum(mask)
    d_latent = None
    if coef.latent != 0.0:
        d_latent = coef.latent * 2.0 * lat_err / lat_err.size
    d_oea = coef.estimation * 2.0 * est_err / est_err.size if coef.estimation != 0.0 else None
    actor_backward(params, out, d_mean=d_mean, d_latent=d_latent, d_oea=d_oea, grads=grads)

    raw = params.arrays["log_std"]
    inside = (raw >= params.config.log_std_min) & (raw <= params.config.log_std_max)
    grads["log_std"] = d_log_std * inside

    d_value = (coef.value * 2.0 * value_err / B)[:, None]
    mlp_backward(params.arrays, "critic", params.n_layers("critic"), critic_acts, d_value,
                 False, grads)

    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError("gradient", k)
    for k in params.arrays:
        if k not in grads:
            grads[k] = np.zeros_like(params.arrays[k])
    return report, grads


class Adam:
    def __init__(self, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float | None = 1.0):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: PolicyParams, grads: dict[str, np.ndarray]) -> float:
        norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in sorted(grads):
            if k in STATE_KEYS:
                continue
            g = grads[k] * scale
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params.arrays[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        cfg = params.config
        np.clip(params.arrays["log_std"], cfg.log_std_min, cfg.log_std_max,
                out=params.arrays["log_std"])
        return norm
