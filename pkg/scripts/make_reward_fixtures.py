"""Regenerate tests/fixtures/reward_states.json.

States are random single-env snapshots plus a few edge cases; expected
values come from the scalar oracle in tests/oracles.py.
"""

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))
from oracles import reward_oracle  # noqa: E402


def random_state(rng: np.random.Generator) -> dict:
    upper = np.zeros(32)
    upper[12:] = 1.0
    hip = np.zeros(32)
    hip[2:6] = 1.0
    return {
        "command": [*rng.uniform(-1, 1, 3), rng.uniform(-0.3, 0), rng.uniform(-0.3, 0.5),
                    rng.uniform(1, 2.5)],
        "base_vel": list(rng.uniform(-1.2, 1.2, 3)),
        "height": float(rng.uniform(0.5, 1.0)),
        "height_target": float(rng.uniform(0.5, 1.0)),
        "pitch": float(rng.uniform(-0.5, 0.5)),
        "contact_weight": list(rng.uniform(0, 1, 2)),
        "swing_targets": list(rng.uniform(0.05, 0.15, 2)),
        "foot_height": list(rng.uniform(0, 0.2, 2)),
        "foot_vel": rng.normal(0, 1, (2, 2)).tolist(),
        "foot_force": list(rng.uniform(0, 15, 2)),
        "ang_vel_xy": list(rng.normal(0, 0.5, 2)),
        "v_z": float(rng.normal(0, 0.3)),
        "actions": rng.normal(0, 0.5, (3, 32)).tolist(),
        "tau": list(rng.normal(0, 40, 32)),
        "qdd": list(rng.normal(0, 200, 32)),
        "q": list(rng.normal(0, 0.3, 32)),
        "default_pose": list(rng.normal(0, 0.3, 32)),
        "upper_mask": list(upper),
        "hip_mask": list(hip),
        "g_proj": list(rng.normal(0, 0.2, 3)),
        "group_weights": [1.0, 1.0, 1.0],
    }


def main() -> None:
    rng = np.random.default_rng(20240607)
    states = [random_state(rng) for _ in range(20)]
    # perfect tracking: both task terms at their maximum
    s = states[0]
    s["base_vel"] = list(s["command"][:3])
    s["height"], s["pitch"] = s["height_target"], s["command"][4]
    # velocity error with squared norm exactly 0.25
    states[1]["base_vel"] = [states[1]["command"][0] + 0.3, states[1]["command"][1] + 0.4,
                             states[1]["command"][2]]
    # full stance and full swing
    states[2]["contact_weight"] = [1.0, 0.0]
    states[3]["contact_weight"] = [0.0, 1.0]
    # still feet, no actions
    states[4]["foot_vel"] = [[0.0, 0.0], [0.0, 0.0]]
    states[4]["actions"] = np.zeros((3, 32)).tolist()
    states[5]["group_weights"] = [1.0, 0.5, 0.25]
    doc = [{"state": st, "expected": reward_oracle(st)} for st in states]
    out = ROOT / "tests" / "fixtures" / "reward_states.json"
    out.write_text(json.dumps(doc, indent=1))
    print(f"wrote {len(doc)} fixtures to {out}")


if __name__ == "__main__":
    main()
