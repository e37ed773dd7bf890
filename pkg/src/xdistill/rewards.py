"""Per-step reward: task, behavior and regularization groups.

Every term is reported already multiplied by its coefficient, so a group sum
is the plain sum of its members.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TASK_TERMS = {
    "lin_vel": 2.0,
    "ang_vel": 2.5,
}
BEHAVIOR_TERMS = {
    "base_height": -60.0,
    "body_pitch": -1.0,
    "foot_swing": -30.0,
    "contact_vel": -1.0,
    "contact_force": -1.0,
}
REGULARIZATION_TERMS = {
    "ang_vel_xy": -0.1,
    "vertical_speed": -2.0,
    "foot_slip": -0.1,
    "action_rate": -2e-3,
    "action_smoothness": -2e-3,
    "joint_torque": -1e-5,
    "joint_acc": -5e-8,
    "upper_dev": -5.0,
    "hip_dev": -0.4,
    "orientation": -5.0,
}
GROUPS = {"task": TASK_TERMS, "beh": BEHAVIOR_TERMS, "reg": REGULARIZATION_TERMS}
COEFFICIENTS = {**TASK_TERMS, **BEHAVIOR_TERMS, **REGULARIZATION_TERMS}
TERM_NAMES = tuple(COEFFICIENTS)


def kernel(x, kappa: float):
    """exp(-x / kappa)."""
    return np.exp(-np.asarray(x) / kappa)


@dataclass
class RewardBreakdown:
    terms: dict[str, np.ndarray]
    task: np.ndarray
    beh: np.ndarray
    reg: np.ndarray
    total: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        if name in ("task", "beh", "reg", "total"):
            return getattr(self, name)
        return self.terms[name]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {**self.terms, "task": self.task, "beh": self.beh, "reg": self.reg,
                "total": self.total}


def _sq(x):
    return np.sum(np.square(x), axis=-1)


def raw_terms(*, command, base_vel, height, pitch, height_target, contact_weight,
              swing_targets, foot_height, foot_vel, foot_force, ang_vel_xy, v_z,
              actions, tau, qdd, q, default_pose, upper_mask, hip_mask, g_proj) -> dict:
    """Unweighted value of each term. All inputs carry a leading batch axis.

    ``contact_weight`` is C(phi_j) per foot; ``actions`` stacks
    (a_t, a_{t-1}, a_{t-2}) along axis 1.
    """
    stance = contact_weight
    swing = 1.0 - contact_weight
    a0, a1, a2 = actions[:, 0], actions[:, 1], actions[:, 2]
    foot_speed_sq = np.sum(np.square(foot_vel), axis=-1)  # (n, 2)
    dev = default_pose - q
    return {
        "lin_vel": kernel(_sq(command[:, 0:2] - base_vel[:, 0:2]), 0.25),
        "ang_vel": kernel(np.square(command[:, 2] - base_vel[:, 2]), 0.25),
        "base_height": np.square(height_target - height),
        "body_pitch": np.square(command[:, 4] - pitch),
        "foot_swing": np.sum(swing * np.square(swing_targets - foot_height), axis=-1),
        "contact_vel": np.sum(stance * (1.0 - kernel(foot_speed_sq, 5.0)), axis=-1),
        "contact_force": np.sum(swing * (1.0 - kernel(np.square(foot_force), 50.0)), axis=-1),
        "ang_vel_xy": _sq(ang_vel_xy),
        "vertical_speed": np.square(v_z),
        "foot_slip": 1.0 - np.sum(kernel(foot_speed_sq, 1.0), axis=-1),
        "action_rate": _sq(a0 - a1),
        "action_smoothness": _sq(a2 - 2.0 * a1 + a0),
        "joint_torque": _sq(tau),
        "joint_acc": _sq(qdd),
        "upper_dev": _sq(dev * upper_mask),
        "hip_dev": _sq(dev * hip_mask),
        "orientation": _sq(g_proj[:, 0:2]),
    }


def combine(raw: dict, group_weights=(1.0, 1.0, 1.0)) -> RewardBreakdown:
    terms = {name: COEFFICIENTS[name] * raw[name] for name in TERM_NAMES}
    sums = {}
    for group, members in GROUPS.items():
        acc = np.zeros_like(terms[next(iter(members))])
        for name in members:
            acc = acc + terms[name]
        sums[group] = acc
    w1, w2, w3 = group_weights
    total = w1 * sums["task"] + w2 * sums["beh"] + w3 * sums["reg"]
    return RewardBreakdown(terms=terms, task=sums["task"], beh=sums["beh"], reg=sums["reg"],
                           total=total)


def compute_reward(state, arrays, contact_weight, group_weights=(1.0, 1.0, 1.0)) -> RewardBreakdown:
    """Reward for a batched world state.

    ``arrays`` holds the per-env embodiment constants (see
    :class:`xdistill.world.EmbodimentArrays`); ``contact_weight`` is the
    stance schedule evaluated at the two foot phases.
    """
    raw = raw_terms(
        command=state.command,
        base_vel=state.base_vel,
        height=state.height,
        pitch=state.pitch,
        height_target=arrays.nominal_height + state.command[:, 3],
        contact_weight=contact_weight,
        swing_targets=arrays.swing_targets,
        foot_height=state.foot_height,
        foot_vel=state.foot_vel,
        foot_force=state.foot_force,
        ang_vel_xy=state.ang_vel_xy,
        v_z=state.v_z,
        actions=state.actions,
        tau=state.tau,
        qdd=state.qdd,
        q=state.q,
        default_pose=arrays.default_pose,
        upper_mask=arrays.upper_mask,
        hip_mask=arrays.hip_mask,
        g_proj=state.g_proj,
    )
    return combine(raw, group_weights)
