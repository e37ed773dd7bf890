"""Batched surrogate humanoid world.

A cheap stand-in for a physics simulator. Each environment instance drives
one embodiment with linear, closed-form-checkable dynamics:

* joints are independent unit-inertia PD systems tracking ``default + action``
  (semi-implicit Euler);
* base planar velocities (v_x, v_y, yaw rate) integrate the actuation-matrix
  image of the native action, minus friction-scaled drag, plus Gaussian noise;
* base height, pitch and roll are linear in the joint deviation from the
  default pose;
* foot height is the knee-differential lift of each leg; contact and contact
  force follow from foot height.

All joint quantities live in the padded 32-slot layout; unclaimed slots have
zero gains and are masked out of every action.
"""

from __future__ import annotations

import copy
import dataclasses
from collections import deque
from dataclasses import dataclass, field, fields, asdict
from typing import Sequence

import numpy as np

from .embodiment import (ACTUATION_ROWS, OEA_DIM, UNIFIED_DIM, EmbodimentSpec, Registry)
from .rewards import RewardBreakdown, compute_reward

VX, VY, WZ, H, P, F = range(6)
COMMAND_DIM = 6
COMMAND_NAMES = ("vx", "vy", "yaw_rate", "height", "pitch", "freq")
TRACKED = ("vx", "vy", "yaw_rate", "height", "pitch")

# (initial range, finishing range) per curriculum-controlled command
COMMAND_RANGES = {
    "vx": ((-0.3, 0.6), (-0.6, 1.2)),
    "vy": ((-0.5, 0.5), (-0.4, 0.4)),
    "yaw_rate": ((-0.5, 0.5), (-1.0, 1.0)),
    "height": ((-0.3, 0.0), (-0.3, 0.0)),
    "pitch": ((-0.3, 0.5), (-0.3, 0.5)),
}
FREQ_RANGE = (1.0, 2.5)

FRAME_DIM = 2 * UNIFIED_DIM + 6
HEIGHT_SCAN = 9
PRIVILEGED_DIM = 3 + 1 + 2 + 2 + 1 + 1 + HEIGHT_SCAN + OEA_DIM
GRAVITY = 9.81


class NonFiniteActionError(ValueError):
    pass


@dataclass
class CurriculumConfig:
    step: float = 0.05
    threshold: float = 0.3
    window: int = 50
    start_progress: float = 0.0


@dataclass
class WorldConfig:
    dt: float = 0.02
    horizon: int = 500
    noise_std: float = 0.01
    drag: float = 0.5
    fall_height_frac: float = 0.4
    fall_pitch: float = 1.0
    collision_height_frac: float = 0.6
    resample_interval: int = 150
    phase_offset: float = 0.5
    freq_range: tuple[float, float] = FREQ_RANGE
    friction_range: tuple[float, float] = (0.5, 1.25)
    group_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    history: int = 5
    contact_threshold: float = 0.01
    force_scale: float = 10.0
    transition_width: float = 0.02
    joint_vel_scale: float = 0.1
    ang_vel_scale: float = 0.25
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)

    @classmethod
    def from_dict(cls, d: dict | None) -> "WorldConfig":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"world: unknown key(s) {sorted(unknown)}")
        cur = d.pop("curriculum", None)
        cfg = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
        if cur is not None:
            ckeys = {f.name for f in fields(CurriculumConfig)}
            if set(cur) - ckeys:
                raise ValueError(f"world.curriculum: unknown key(s) {sorted(set(cur) - ckeys)}")
            cfg.curriculum = CurriculumConfig(**cur)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


class Curriculum:
    """Linear widening of command ranges from the initial to the finishing column.

    Progress moves up by ``step`` whenever the mean summed task-tracking error
    over the last ``window`` updates drops below ``threshold``; the window is
    cleared after each advance.
    """

    def __init__(self, config: CurriculumConfig | None = None, progress: float | None = None):
        self.config = config or CurriculumConfig()
        start = self.config.start_progress if progress is None else progress
        self.progress = float(np.clip(start, 0.0, 1.0))
        self._errors: deque[float] = deque(maxlen=self.config.window)

    def ranges(self) -> np.ndarray:
        """(5, 2) current [lo, hi] for vx, vy, yaw_rate, height, pitch."""
        return command_ranges(self.progress)

    def record(self, task_error_sum: float) -> bool:
        self._errors.append(float(task_error_sum))
        if len(self._errors) < self.config.window or self.progress >= 1.0:
            return False
        if np.mean(self._errors) < self.config.threshold:
            self.progress = min(1.0, self.progress + self.config.step)
            self._errors.clear()
            return True
        return False


def command_ranges(progress: float) -> np.ndarray:
    t = float(progress)
    out = np.empty((len(COMMAND_RANGES), 2))
    for k, (init, fin) in enumerate(COMMAND_RANGES.values()):
        if t <= 0.0:
            out[k] = init
        elif t >= 1.0:
            out[k] = fin
        else:
            out[k] = (1.0 - t) * np.asarray(init) + t * np.asarray(fin)
    return out


def sample_command(curriculum: Curriculum | float, rng: np.random.Generator,
                   freq_range: tuple[float, float] = FREQ_RANGE) -> np.ndarray:
    progress = curriculum.progress if isinstance(curriculum, Curriculum) else curriculum
    r = command_ranges(progress)
    lo = np.append(r[:, 0], freq_range[0])
    hi = np.append(r[:, 1], freq_range[1])
    return rng.uniform(lo, hi)


@dataclass
class GaitState:
    phi1: np.ndarray
    offset: float
    freq: np.ndarray

    @property
    def phi2(self) -> np.ndarray:
        return np.mod(self.phi1 + self.offset, 1.0)

    def phases(self) -> np.ndarray:
        return np.stack([np.asarray(self.phi1, float), np.asarray(self.phi2, float)], axis=-1)

    def clock(self) -> np.ndarray:
        return np.sin(2.0 * np.pi * self.phases())


def advance_gait_clock(g: GaitState, dt: float) -> GaitState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    phi1 = np.mod(np.asarray(g.phi1, float) + np.asarray(g.freq, float) * dt, 1.0)
    return GaitState(phi1=phi1, offset=g.offset, freq=g.freq)


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def contact_schedule(phi, width: float = 0.02):
    """Smoothed stance indicator: ~1 on [0, 0.5), ~0 on [0.5, 1).

    Product of two logistic edges, summed over the periodic image one cycle
    to the left so the value is continuous across the wrap at 1 -> 0.
    """
    x = np.mod(np.asarray(phi, float), 1.0)
    here = _logistic(x / width) * _logistic((0.5 - x) / width)
    wrapped = _logistic((x - 1.0) / width) * _logistic((1.5 - x) / width)
    return here + wrapped


@dataclass
class EmbodimentArrays:
    """Per-env embodiment constants, already scattered into the slot layout."""

    ids: np.ndarray
    mask: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    default_pose: np.ndarray
    upper_mask: np.ndarray
    hip_mask: np.ndarray
    planar: np.ndarray  # (n, 3, 32): vx, vy, yaw_rate accelerations per unit action
    posture: np.ndarray  # (n, 3, 32): height, pitch, roll per unit joint deviation
    nominal_height: np.ndarray
    leg_length: np.ndarray
    swing_targets: np.ndarray
    pitch_slot: np.ndarray  # (n, 2) left/right
    roll_slot: np.ndarray
    lift_slot: np.ndarray
    lift_gain: np.ndarray
    oea: np.ndarray

    @classmethod
    def build(cls, registry: Registry, embodiment_ids: Sequence[int]) -> "EmbodimentArrays":
        per = {s.id: _spec_arrays(s, registry) for s in registry}
        ids = np.asarray(embodiment_ids, dtype=np.int64)
        stacked = {}
        for key in per[int(ids[0])] if len(ids) else []:
            stacked[key] = np.stack([per[int(i)][key] for i in ids])
        return cls(ids=ids, **stacked)


def _spec_arrays(spec: EmbodimentSpec, registry: Registry) -> dict:
    to_u = spec.to_unified
    upper = np.zeros(spec.n_dofs)
    upper[list(spec.upper)] = 1.0
    hip = np.zeros(spec.n_dofs)
    hip[list(spec.hip)] = 1.0
    act = spec.actuation_matrix
    jm = spec.joint_map
    return dict(
        mask=spec.slot_mask.astype(float),
        kp=to_u(spec.stiffness),
        kd=to_u(spec.damping),
        default_pose=to_u(spec.default_pose),
        upper_mask=to_u(upper),
        hip_mask=to_u(hip),
        planar=to_u(act[0:3]),
        posture=to_u(act[3:6]),
        nominal_height=np.float64(spec.nominal_base_height),
        leg_length=np.float64(spec.leg_length),
        swing_targets=spec.swing_height_targets.astype(float),
        pitch_slot=np.array([jm[leg.pitch] for leg in spec.legs]),
        roll_slot=np.array([jm[leg.roll] for leg in spec.legs]),
        lift_slot=np.array([jm[leg.lift] for leg in spec.legs]),
        lift_gain=np.array([leg.lift_gain for leg in spec.legs]),
        oea=registry.embodiment_observation(spec),
    )


@dataclass
class WorldState:
    """Batched world state; every field has a leading env axis."""

    embodiment: np.ndarray
    base_pos: np.ndarray  # x, y, yaw (world frame)
    height: np.ndarray
    pitch: np.ndarray
    roll: np.ndarray
    base_vel: np.ndarray  # v_x, v_y (base frame), yaw rate
    v_z: np.ndarray
    ang_vel_xy: np.ndarray  # roll rate, pitch rate
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    foot_height: np.ndarray
    foot_vel: np.ndarray  # (n, 2, 2)
    foot_force: np.ndarray
    contact: np.ndarray
    stance: np.ndarray  # C(phi_j) per foot
    actions: np.ndarray  # (n, 3, 32): a_t, a_{t-1}, a_{t-2}
    g_proj: np.ndarray
    friction: np.ndarray
    command: np.ndarray  # (n, 6)
    phase: np.ndarray  # phi1
    step: np.ndarray
    fallen: np.ndarray

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def select(self, idx) -> "WorldState":
        return WorldState(**{f.name: getattr(self, f.name)[idx].copy() for f in fields(self)})

    def equals(self, other: "WorldState") -> bool:
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name))
                   for f in fields(self))


@dataclass
class ObservationBundle:
    proprio: np.ndarray  # (n, K * FRAME_DIM)
    command: np.ndarray  # (n, 6)
    clock: np.ndarray  # (n, 2)
    privileged: np.ndarray  # (n, PRIVILEGED_DIM)

    @property
    def actor(self) -> np.ndarray:
        return np.concatenate([self.proprio, self.command, self.clock], axis=1)

    @property
    def critic(self) -> np.ndarray:
        return np.concatenate([self.proprio, self.command, self.clock, self.privileged], axis=1)

    @property
    def oea(self) -> np.ndarray:
        return self.privileged[:, -OEA_DIM:]


def gravity_in_base(roll, pitch):
    return np.stack([np.sin(pitch), -np.sin(roll) * np.cos(pitch),
                     -np.cos(roll) * np.cos(pitch)], axis=-1)


class SurrogateWorld:
    """A batch of independently seeded surrogate environments.

    ``embodiment_ids[i]`` fixes the robot of env ``i``; env ``i`` draws all
    its randomness from ``default_rng([seed, i])``.
    """

    def __init__(self, registry: Registry, embodiment_ids: Sequence[int],
                 config: WorldConfig | None = None, seed: int = 0,
                 embodiment_observation: bool = True, curriculum: Curriculum | None = None):
        self.registry = registry
        self.config = config or WorldConfig()
        for i in embodiment_ids:
            registry[int(i)]
        self.arrays = EmbodimentArrays.build(registry, embodiment_ids)
        self.n = len(embodiment_ids)
        self.seed = seed
        self.rngs = [np.random.default_rng([seed, i]) for i in range(self.n)]
        self.embodiment_observation = embodiment_observation
        self.curriculum = curriculum or Curriculum(self.config.curriculum)
        self.fixed_command: np.ndarray | None = None
        self.history = np.zeros((self.n, self.config.history, FRAME_DIM))
        self.state: WorldState | None = None

    @classmethod
    def balanced(cls, registry: Registry, n_envs: int, **kwargs) -> "SurrogateWorld":
        """Round-robin allocation: env i runs registry.ids[i % N]."""
        ids = registry.ids
        return cls(registry, [ids[i % len(ids)] for i in range(n_envs)], **kwargs)

    # ------------------------------------------------------------------ reset
    def _draw_command(self, i: int) -> np.ndarray:
        if self.fixed_command is not None:
            fc = np.asarray(self.fixed_command, float)
            return (fc[i] if fc.ndim == 2 else fc).copy()
        return sample_command(self.curriculum, self.rngs[i], self.config.freq_range)

    def reset(self, env_mask: np.ndarray | None = None) -> WorldState:
        n = self.n
        A = self.arrays
        if self.state is None or env_mask is None:
            env_mask = np.ones(n, dtype=bool)
            if self.state is None:
                self.state = self._blank_state()
        idx = np.flatnonzero(env_mask)
        if idx.size == 0:
            return self.state
        s = self.state
        for i in idx:
            s.command[i] = self._draw_command(i)
            lo, hi = self.config.friction_range
            s.friction[i] = self.rngs[i].uniform(lo, hi)
        s.base_pos[idx] = 0.0
        s.height[idx] = A.nominal_height[idx]
        for name in ("pitch", "roll", "v_z", "phase"):
            getattr(s, name)[idx] = 0.0
        for name in ("base_vel", "ang_vel_xy", "qd", "qdd", "tau", "foot_height", "foot_vel",
                     "foot_force", "actions"):
            getattr(s, name)[idx] = 0.0
        s.q[idx] = A.default_pose[idx]
        s.step[idx] = 0
        s.fallen[idx] = False
        s.g_proj[idx] = gravity_in_base(s.roll[idx], s.pitch[idx])
        s.stance[idx] = contact_schedule(self._foot_phases(s.phase[idx]), self.config.transition_width)
        s.contact[idx] = True
        s.foot_force[idx] = self.config.force_scale / 2.0
        self.history[idx] = 0.0
        self.history[idx, 0] = self._frame(s)[idx]
        return s

    def _blank_state(self) -> WorldState:
        n = self.n
        z = lambda *shape: np.zeros((n, *shape))
        return WorldState(
            embodiment=self.arrays.ids.copy(), base_pos=z(3), height=z(), pitch=z(), roll=z(),
            base_vel=z(3), v_z=z(), ang_vel_xy=z(2), q=z(UNIFIED_DIM), qd=z(UNIFIED_DIM),
            qdd=z(UNIFIED_DIM), tau=z(UNIFIED_DIM), foot_height=z(2), foot_vel=z(2, 2),
            foot_force=z(2), contact=np.zeros((n, 2), dtype=bool), stance=z(2),
            actions=z(3, UNIFIED_DIM), g_proj=z(3), friction=z(), command=z(COMMAND_DIM),
            phase=z(), step=np.zeros(n, dtype=np.int64), fallen=np.zeros(n, dtype=bool),
        )

    def _foot_phases(self, phi1):
        return np.stack([phi1, np.mod(phi1 + self.config.phase_offset, 1.0)], axis=-1)

    # ------------------------------------------------------------------- step
    def step(self, actions: np.ndarray) -> tuple[WorldState, np.ndarray, RewardBreakdown]:
        if self.state is None:
            raise RuntimeError("reset() before step()")
        cfg = self.config
        A = self.arrays
        s = self.state
        n = self.n
        dt = cfg.dt
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (n, UNIFIED_DIM):
            raise ValueError(f"actions must have shape {(n, UNIFIED_DIM)}, got {actions.shape}")
        bad = ~np.isfinite(actions)
        if bad.any():
            env, slot = np.argwhere(bad)[0]
            raise NonFiniteActionError(f"non-finite action in env {env} slot {slot}")
        a = actions * A.mask

        qdd = A.kp * (A.default_pose + a - s.q) - A.kd * s.qd
        qd = s.qd + dt * qdd
        q = s.q + dt * qd

        if cfg.noise_std > 0:
            noise = np.stack([r.normal(0.0, cfg.noise_std, 3) for r in self.rngs])
        else:
            noise = np.zeros((n, 3))
        drive = np.einsum("nrj,nj->nr", A.planar, a)
        vel = s.base_vel + dt * (drive - cfg.drag * s.friction[:, None] * s.base_vel + noise)

        dq = (q - A.default_pose) * A.mask
        posture = np.einsum("nrj,nj->nr", A.posture, dq)
        height = np.maximum(A.nominal_height + posture[:, 0], 0.0)
        pitch = posture[:, 1]
        roll = posture[:, 2]
        v_z = (height - s.height) / dt
        ang_xy = np.stack([(roll - s.roll) / dt, (pitch - s.pitch) / dt], axis=1)

        yaw = s.base_pos[:, 2] + dt * vel[:, 2]
        c, sn = np.cos(yaw), np.sin(yaw)
        base_pos = np.stack([s.base_pos[:, 0] + dt * (c * vel[:, 0] - sn * vel[:, 1]),
                             s.base_pos[:, 1] + dt * (sn * vel[:, 0] + c * vel[:, 1]),
                             yaw], axis=1)

        phase = np.mod(s.phase + s.command[:, F] * dt, 1.0)
        stance = contact_schedule(self._foot_phases(phase), cfg.transition_width)

        rows = np.arange(n)[:, None]
        lift_dq = dq[rows, A.lift_slot]
        foot_height = A.lift_gain * np.maximum(lift_dq - lift_dq[:, ::-1], 0.0)
        contact = foot_height < cfg.contact_threshold
        n_contact = np.maximum(contact.sum(axis=1), 1)
        accel_z = (v_z - s.v_z) / dt
        load = np.maximum(0.0, 1.0 + accel_z / GRAVITY)
        foot_force = cfg.force_scale * contact / n_contact[:, None] * load[:, None]
        sweep = np.stack([qd[rows, A.pitch_slot], qd[rows, A.roll_slot]], axis=-1)
        foot_vel = (2.0 * (1.0 - stance)[..., None] * vel[:, None, 0:2]
                    + stance[..., None] * 0.5 * A.leg_length[:, None, None] * sweep)

        hist = np.empty_like(s.actions)
        hist[:, 0] = a
        hist[:, 1:] = s.actions[:, :2]

        new = WorldState(
            embodiment=s.embodiment, base_pos=base_pos, height=height, pitch=pitch, roll=roll,
            base_vel=vel, v_z=v_z, ang_vel_xy=ang_xy, q=q, qd=qd, qdd=qdd, tau=qdd.copy(),
            foot_height=foot_height, foot_vel=foot_vel, foot_force=foot_force, contact=contact,
            stance=stance, actions=hist, g_proj=gravity_in_base(roll, pitch),
            friction=s.friction, command=s.command.copy(), phase=phase, step=s.step + 1,
            fallen=np.zeros(n, dtype=bool),
        )
        breakdown = compute_reward(new, A, stance, cfg.group_weights)

        fell = (height < cfg.fall_height_frac * A.nominal_height) | (np.abs(pitch) > cfg.fall_pitch)
        new.fallen = fell
        done = fell | (new.step >= cfg.horizon)

        if cfg.resample_interval > 0:
            due = (~done) & (new.step % cfg.resample_interval == 0)
            for i in np.flatnonzero(due):
                new.command[i] = self._draw_command(i)

        self.state = new
        self.history = np.roll(self.history, 1, axis=1)
        self.history[:, 0] = self._frame(new)
        return new, done, breakdown

    # --------------------------------------------------------------- observe
    def _frame(self, s: WorldState) -> np.ndarray:
        A = self.arrays
        rows = np.arange(self.n)[:, None]
        sensed = s.qd.copy()
        # a planted leg's hip rates follow the base, a swinging leg's follow the joint
        L = A.leg_length[:, None]
        for slot, v in ((A.pitch_slot, s.base_vel[:, 0:1]), (A.roll_slot, s.base_vel[:, 1:2])):
            sensed[rows, slot] = (1.0 - s.stance) * s.qd[rows, slot] + s.stance * v / L
        ang = np.concatenate([s.ang_vel_xy, s.base_vel[:, 2:3]], axis=1)
        cfg = self.config
        return np.concatenate([(s.q - A.default_pose) * A.mask,
                               cfg.joint_vel_scale * sensed * A.mask,
                               cfg.ang_vel_scale * ang, s.g_proj], axis=1)

    def observe(self) -> ObservationBundle:
        s = self.state
        A = self.arrays
        cfg = self.config
        clock = np.sin(2.0 * np.pi * self._foot_phases(s.phase))
        oea = A.oea if self.embodiment_observation else np.zeros_like(A.oea)
        collision = (s.height < cfg.collision_height_frac * A.nominal_height).astype(float)
        privileged = np.concatenate([
            np.stack([s.base_vel[:, 0], s.base_vel[:, 1], s.v_z], axis=1),
            (A.nominal_height + s.command[:, H] - s.height)[:, None],
            s.foot_height,
            0.1 * s.foot_force,
            collision[:, None],
            s.friction[:, None],
            np.zeros((self.n, HEIGHT_SCAN)),
            oea,
        ], axis=1)
        return ObservationBundle(
            proprio=self.history.reshape(self.n, -1).copy(),
            command=s.command.copy(),
            clock=clock,
            privileged=privileged,
        )

    # ---------------------------------------------------------------- helpers
    def measured(self) -> np.ndarray:
        """(n, 5) readings of the tracked command dimensions."""
        s = self.state
        return np.stack([s.base_vel[:, 0], s.base_vel[:, 1], s.base_vel[:, 2],
                         s.height - self.arrays.nominal_height, s.pitch], axis=1)


def actor_obs_dim(history: int = 5) -> int:
    return history * FRAME_DIM + COMMAND_DIM + 2


def critic_obs_dim(history: int = 5) -> int:
    return actor_obs_dim(history) + PRIVILEGED_DIM


def reset(spec_id: int | str, seed: int, registry: Registry,
          config: WorldConfig | None = None) -> WorldState:
    """Single-environment reset; returns a batch-of-one state."""
    spec = registry[spec_id]
    world = SurrogateWorld(registry, [spec.id], config=config, seed=seed)
    return world.reset()


class TrajectoryRecorder:
    """Collects per-step rows for one env and writes them as CSV."""

    def __init__(self, env: int = 0):
        self.env = env
        self.rows: list[dict] = []

    def record(self, state: WorldState, breakdown: RewardBreakdown) -> None:
        i = self.env
        row = {"step": int(state.step[i]), "embodiment": int(state.embodiment[i])}
        row.update({f"cmd_{n}": float(state.command[i, k]) for k, n in enumerate(COMMAND_NAMES)})
        row.update({"x": float(state.base_pos[i, 0]), "y": float(state.base_pos[i, 1]),
                    "yaw": float(state.base_pos[i, 2]), "height": float(state.height[i]),
                    "pitch": float(state.pitch[i]), "vx": float(state.base_vel[i, 0]),
                    "vy": float(state.base_vel[i, 1]), "yaw_rate": float(state.base_vel[i, 2])})
        row.update({f"r_{k}": float(v[i]) for k, v in breakdown.as_dict().items()})
        self.rows.append(row)

    def write(self, path) -> None:
        import csv
        with open(path, "w", newline="") as f:
            if not self.rows:
                return
            w = csv.DictWriter(f, fieldnames=list(self.rows[0]))
            w.writeheader()
            w.writerows(self.rows)


def sanity_registry(registry: Registry, base: int | str = 0) -> Registry:
    """One-robot registry whose only planar row is v_x, with unit hip-pitch entries."""
    spec = registry[base]
    act = spec.actuation_matrix.copy()
    act[0:3] = 0.0
    for leg in spec.legs:
        act[0, leg.pitch] = 1.0
    source = copy.deepcopy(spec.source)
    source["variant"] = "identity_vx"
    clone = dataclasses.replace(spec, actuation_matrix=act, source=source)
    return Registry([clone], registry.oea_mean, registry.oea_std, registry.root)


def sanity_world(registry: Registry, n_envs: int, seed: int = 0, base: int | str = 0,
                 config: WorldConfig | None = None) -> SurrogateWorld:
    """Drag-free single-embodiment world at the finishing command ranges."""
    cfg = copy.deepcopy(config) if config is not None else WorldConfig()
    cfg.drag = 0.0
    cfg.curriculum.start_progress = 1.0
    reg = sanity_registry(registry, base)
    return SurrogateWorld(reg, [reg.ids[0]] * n_envs, config=cfg, seed=seed)
