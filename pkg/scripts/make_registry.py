"""Regenerate the shipped surrogate embodiment registry.

The YAML files under src/xdistill/data/registry are the source of truth at
runtime; this script only documents how they were produced. Re-running it
rewrites them (including the frozen o_ea normalization constants).

    python scripts/make_registry.py
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from xdistill.embodiment import SLOT_NAMES, BODY_NAMES

OUT = Path(__file__).resolve().parents[1] / "src" / "xdistill" / "data" / "registry"

LEG = ["hip_pitch", "hip_roll", "hip_yaw", "knee", "ankle_pitch", "ankle_roll"]


def leg(side, with_ankle_roll=True):
    names = ["hip_yaw", "hip_roll", "hip_pitch", "knee", "ankle_pitch"]
    if with_ankle_roll:
        names.append("ankle_roll")
    return [f"{side}_{n}" for n in names]


def arm(side, parts):
    return [f"{side}_{p}" for p in parts]


ROBOTS = [
    dict(
        id=0, name="H1surrogate", height=0.98, leg_length=0.86, swing=(0.10, 0.10),
        joints=leg("left", False) + leg("right", False) + ["waist_yaw"]
        + arm("left", ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow"])
        + arm("right", ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow"]),
        kp=45.0, kd=7.0, gx=1.5, gy=1.1, gw=1.8, gh=0.20, gp=0.40, gl=0.18,
        torso=(18.0, 0.30), foot=(1.2, 0.20),
    ),
    dict(
        id=1, name="G1surrogate", height=0.74, leg_length=0.62, swing=(0.08, 0.08),
        joints=leg("left") + leg("right") + ["waist_yaw", "waist_roll", "waist_pitch"]
        + arm("left", ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow",
                       "wrist_roll", "wrist_pitch", "wrist_yaw"])
        + arm("right", ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow",
                        "wrist_roll", "wrist_pitch", "wrist_yaw"]),
        kp=35.0, kd=6.0, gx=1.0, gy=0.8, gw=1.2, gh=0.15, gp=0.35, gl=0.14,
        torso=(12.0, 0.22), foot=(0.7, 0.15),
    ),
    dict(
        id=2, name="T1surrogate", height=0.68, leg_length=0.55, swing=(0.07, 0.07),
        joints=["head_yaw", "head_pitch"]
        + arm("left", ["shoulder_pitch", "shoulder_roll", "elbow", "shoulder_yaw"])
        + arm("right", ["shoulder_pitch", "shoulder_roll", "elbow", "shoulder_yaw"])
        + ["waist_yaw"] + leg("left") + leg("right"),
        kp=30.0, kd=5.0, gx=-1.2, gy=0.9, gw=-1.4, gh=0.14, gp=-0.35, gl=0.12,
        torso=(10.0, 0.20), foot=(0.6, 0.14),
    ),
    dict(
        id=3, name="N1surrogate", height=0.80, leg_length=0.66, swing=(0.09, 0.09),
        joints=leg("right") + leg("left") + ["waist_yaw"]
        + arm("right", ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow", "wrist_roll"])
        + arm("left", ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow", "wrist_roll"]),
        kp=40.0, kd=6.5, gx=2.0, gy=1.3, gw=2.2, gh=0.18, gp=0.45, gl=0.16,
        torso=(14.0, 0.25), foot=(0.9, 0.17),
    ),
    dict(
        id=4, name="ADAMsurrogate", height=0.92, leg_length=0.80, swing=(0.11, 0.11),
        joints=["waist_roll", "waist_pitch", "waist_yaw"] + leg("left") + leg("right")
        + arm("left", ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow", "wrist_yaw"])
        + arm("right", ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow", "wrist_yaw"]),
        kp=50.0, kd=7.5, gx=-1.6, gy=-1.0, gw=1.6, gh=0.22, gp=0.50, gl=0.20,
        torso=(24.0, 0.34), foot=(1.4, 0.22),
    ),
]


def default_angle(name):
    if name.endswith("knee"):
        return 0.3
    if name.endswith("hip_pitch"):
        return -0.15
    if name.endswith("ankle_pitch"):
        return -0.15
    if name.endswith("elbow"):
        return 0.3
    return 0.0


def body(rng, mass, size, com_z):
    com = [round(float(rng.normal(0, 0.01)), 4), round(float(rng.normal(0, 0.005)), 4), com_z]
    ixx = mass * size**2 / 6.0
    diag = [ixx * (1 + 0.2 * rng.random()) for _ in range(3)]
    off = [float(rng.normal(0, 0.01 * ixx)) for _ in range(3)]
    return dict(mass=mass, com=com, inertia=[round(v, 6) for v in diag + off])


def build(robot, rng):
    names = robot["joints"]
    slots = [SLOT_NAMES.index(n) for n in names]
    joints = []
    for n, s in zip(names, slots):
        upper = not any(k in n for k in LEG)
        scale = 0.6 if upper else 1.0
        joints.append(dict(
            name=n, slot=s, default=default_angle(n),
            stiffness=round(robot["kp"] * scale, 3), damping=round(robot["kd"] * scale, 3),
        ))
    upper = [n for n in names if not any(k in n for k in LEG)]
    hip = [n for n in names if n.endswith("hip_roll") or n.endswith("hip_yaw")]
    act = {
        "vx": {"left_hip_pitch": robot["gx"], "right_hip_pitch": robot["gx"]},
        "vy": {"left_hip_roll": robot["gy"], "right_hip_roll": robot["gy"]},
        "yaw_rate": {"left_hip_yaw": robot["gw"], "right_hip_yaw": robot["gw"]},
        "height": {"left_knee": -robot["gh"], "right_knee": -robot["gh"]},
        "pitch": {"left_ankle_pitch": robot["gp"], "right_ankle_pitch": robot["gp"]},
        "roll": {"left_hip_roll": 0.05, "right_hip_roll": -0.05},
    }
    tm, ts = robot["torso"]
    fm, fs = robot["foot"]
    bodies = {
        "torso": body(rng, tm, ts, round(0.1 * robot["height"], 4)),
        "left_foot": body(rng, fm, fs, -0.03),
        "right_foot": body(rng, fm, fs, -0.03),
    }
    return dict(
        schema_version=1,
        id=robot["id"],
        name=robot["name"],
        nominal_base_height=robot["height"],
        leg_length=robot["leg_length"],
        swing_height_targets=list(robot["swing"]),
        joints=joints,
        upper_joints=upper,
        hip_joints=hip,
        legs={
            side: dict(pitch=f"{side}_hip_pitch", roll=f"{side}_hip_roll", lift=f"{side}_knee",
                       lift_gain=robot["gl"])
            for side in ("left", "right")
        },
        bodies=bodies,
        actuation_matrix=act,
    )


def raw_oea(doc):
    out = []
    for b in BODY_NAMES:
        d = doc["bodies"][b]
        out += [d["mass"], *d["com"], *d["inertia"]]
    return np.array(out)


def main():
    rng = np.random.default_rng(20240611)
    OUT.mkdir(parents=True, exist_ok=True)
    docs = [build(r, rng) for r in ROBOTS]
    for doc in docs:
        path = OUT / f"{doc['id']:02d}_{doc['name']}.yaml"
        path.write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))
    raw = np.stack([raw_oea(d) for d in docs])
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    std[std < 1e-12] = 1.0
    meta = dict(
        schema_version=1,
        slot_table=list(SLOT_NAMES),
        oea_mean=[float(v) for v in mean],
        oea_std=[float(v) for v in std],
    )
    (OUT / "registry.yaml").write_text(yaml.safe_dump(meta, sort_keys=False, default_flow_style=None))


if __name__ == "__main__":
    main()
