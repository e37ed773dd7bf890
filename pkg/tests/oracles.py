"""Slow, scalar reference implementations used as test oracles.

Written with plain Python loops and ``math`` so they share no code path
with the vectorized package implementations.
"""

from __future__ import annotations

import math

COEF = {
    "lin_vel": 2.0, "ang_vel": 2.5,
    "base_height": -60.0, "body_pitch": -1.0, "foot_swing": -30.0,
    "contact_vel": -1.0, "contact_force": -1.0,
    "ang_vel_xy": -0.1, "vertical_speed": -2.0, "foot_slip": -0.1,
    "action_rate": -2e-3, "action_smoothness": -2e-3, "joint_torque": -1e-5,
    "joint_acc": -5e-8, "upper_dev": -5.0, "hip_dev": -0.4, "orientation": -5.0,
}
TASK = ("lin_vel", "ang_vel")
BEH = ("base_height", "body_pitch", "foot_swing", "contact_vel", "contact_force")
REG = tuple(k for k in COEF if k not in TASK + BEH)


def rho(x: float, kappa: float) -> float:
    return math.exp(-x / kappa)


def sumsq(v) -> float:
    return sum(x * x for x in v)


def reward_oracle(s: dict) -> dict:
    """Weighted reward terms and group sums for one env given as a dict of lists."""
    cmd, v = s["command"], s["base_vel"]
    c = s["contact_weight"]
    raw = {}
    raw["lin_vel"] = rho((cmd[0] - v[0]) ** 2 + (cmd[1] - v[1]) ** 2, 0.25)
    raw["ang_vel"] = rho((cmd[2] - v[2]) ** 2, 0.25)
    raw["base_height"] = (s["height_target"] - s["height"]) ** 2
    raw["body_pitch"] = (cmd[4] - s["pitch"]) ** 2
    raw["foot_swing"] = sum((1 - c[j]) * (s["swing_targets"][j] - s["foot_height"][j]) ** 2
                            for j in range(2))
    raw["contact_vel"] = sum(c[j] * (1 - rho(sumsq(s["foot_vel"][j]), 5.0)) for j in range(2))
    raw["contact_force"] = sum((1 - c[j]) * (1 - rho(s["foot_force"][j] ** 2, 50.0))
                               for j in range(2))
    raw["ang_vel_xy"] = sumsq(s["ang_vel_xy"])
    raw["vertical_speed"] = s["v_z"] ** 2
    raw["foot_slip"] = 1 - sum(rho(sumsq(s["foot_vel"][j]), 1.0) for j in range(2))
    a0, a1, a2 = s["actions"]
    raw["action_rate"] = sumsq([x - y for x, y in zip(a0, a1)])
    raw["action_smoothness"] = sumsq([z - 2 * y + x for x, y, z in zip(a0, a1, a2)])
    raw["joint_torque"] = sumsq(s["tau"])
    raw["joint_acc"] = sumsq(s["qdd"])
    dev = [d - q for d, q in zip(s["default_pose"], s["q"])]
    raw["upper_dev"] = sumsq([d * m for d, m in zip(dev, s["upper_mask"])])
    raw["hip_dev"] = sumsq([d * m for d, m in zip(dev, s["hip_mask"])])
    raw["orientation"] = s["g_proj"][0] ** 2 + s["g_proj"][1] ** 2
    out = {k: COEF[k] * raw[k] for k in COEF}
    out["task"] = sum(out[k] for k in TASK)
    out["beh"] = sum(out[k] for k in BEH)
    out["reg"] = sum(out[k] for k in REG)
    w = s.get("group_weights", [1.0, 1.0, 1.0])
    out["total"] = w[0] * out["task"] + w[1] * out["beh"] + w[2] * out["reg"]
    return out


def discounted_advantages(rewards, values, dones, last_value, gamma, lam):
    """Brute-force GAE for one env: explicit double sum over future TD errors."""
    T = len(rewards)
    deltas = []
    for t in range(T):
        nxt = last_value if t == T - 1 else values[t + 1]
        deltas.append(rewards[t] + gamma * nxt * (1 - dones[t]) - values[t])
    adv = []
    for t in range(T):
        total, weight = 0.0, 1.0
        for k in range(t, T):
            total += weight * deltas[k]
            if dones[k]:
                break
            weight *= gamma * lam
        adv.append(total)
    return adv


def silhouette_brute(points, labels) -> float:
    n = len(points)

    def dist(i, j):
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(points[i], points[j])))

    scores = []
    for i in range(n):
        own = [dist(i, j) for j in range(n) if j != i and labels[j] == labels[i]]
        if not own:
            scores.append(0.0)
            continue
        a = sum(own) / len(own)
        b = min(sum(dist(i, j) for j in range(n) if labels[j] == lab)
                / sum(1 for j in range(n) if labels[j] == lab)
                for lab in set(labels) if lab != labels[i])
        scores.append((b - a) / max(a, b))
    return sum(scores) / n
