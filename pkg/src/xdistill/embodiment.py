"""Embodiment registry and the unified 32-slot joint layout.

Every robot exposes its native joints in its own order. A fixed slot table
assigns each joint name a global index, so a single network can read and
write a 32-wide vector for any robot: unused slots stay zero.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

UNIFIED_DIM = 32
N_BODIES = 3
OEA_DIM = N_BODIES * 10
SCHEMA_VERSION = 1

_LEG_PARTS = ["hip_pitch", "hip_roll", "hip_yaw", "knee", "ankle_pitch", "ankle_roll"]
_ARM_PARTS = ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow",
              "wrist_roll", "wrist_pitch", "wrist_yaw"]

# Canonical slot table (our convention): legs interleaved right/left starting
# with right hip pitch -> 0, left hip pitch -> 1; then waist, head, arms.
SLOT_NAMES: tuple[str, ...] = tuple(
    [f"{side}_{part}" for part in _LEG_PARTS for side in ("right", "left")]
    + ["waist_yaw", "waist_roll", "waist_pitch", "head_yaw", "head_roll", "head_pitch"]
    + [f"right_{p}" for p in _ARM_PARTS]
    + [f"left_{p}" for p in _ARM_PARTS]
)
assert len(SLOT_NAMES) == UNIFIED_DIM

BODY_NAMES = ("torso", "left_foot", "right_foot")
ACTUATION_ROWS = ("vx", "vy", "yaw_rate", "height", "pitch", "roll")
SIDES = ("left", "right")

_SPEC_KEYS = {
    "schema_version", "id", "name", "nominal_base_height", "leg_length",
    "swing_height_targets", "joints", "upper_joints", "hip_joints", "legs",
    "bodies", "actuation_matrix",
}
_JOINT_KEYS = {"name", "slot", "default", "stiffness", "damping"}
_LEG_KEYS = {"pitch", "roll", "lift", "lift_gain"}
_BODY_KEYS = {"mass", "com", "inertia"}
_META_KEYS = {"schema_version", "slot_table", "oea_mean", "oea_std"}


class SpecError(ValueError):
    """Raised when an embodiment spec or registry file is malformed."""


@dataclass(frozen=True)
class LegSpec:
    pitch: int
    roll: int
    lift: int
    lift_gain: float


@dataclass(frozen=True, eq=False)
class EmbodimentSpec:
    """Static description of one robot type.

    Joint-indexed fields are in the robot's native order; ``joint_map[k]`` is
    the unified slot of native joint ``k``.
    """

    id: int
    name: str
    joint_names: tuple[str, ...]
    joint_map: tuple[int, ...]
    default_pose: np.ndarray
    stiffness: np.ndarray
    damping: np.ndarray
    upper: tuple[int, ...]
    hip: tuple[int, ...]
    swing_height_targets: np.ndarray
    nominal_base_height: float
    leg_length: float
    legs: tuple[LegSpec, LegSpec]
    body_properties: np.ndarray  # (3, 10): mass, com(3), inertia(6)
    actuation_matrix: np.ndarray  # (6, n_dofs), rows ACTUATION_ROWS
    source: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return len(self.joint_map)

    def __post_init__(self):
        validate_joint_map(self.joint_map, self.joint_names)
        n = self.n_dofs
        for label in ("default_pose", "stiffness", "damping"):
            arr = getattr(self, label)
            if arr.shape != (n,):
                raise SpecError(f"{self.name}: {label} has length {arr.shape}, expected {n}")
        if self.actuation_matrix.shape != (len(ACTUATION_ROWS), n):
            raise SpecError(f"{self.name}: actuation_matrix shape {self.actuation_matrix.shape}")
        if np.any(self.body_properties[:, 0] <= 0):
            raise SpecError(f"{self.name}: body masses must be positive")
        if np.any(self.body_properties[:, 4:7] <= 0):
            raise SpecError(f"{self.name}: inertia diagonal entries must be positive")
        if set(self.upper) & set(self.hip):
            raise SpecError(f"{self.name}: upper and hip joint subsets overlap")
        for idx in (*self.upper, *self.hip):
            if not 0 <= idx < n:
                raise SpecError(f"{self.name}: joint subset index {idx} out of range")
        if self.nominal_base_height <= 0:
            raise SpecError(f"{self.name}: nominal_base_height must be positive")

    @cached_property
    def slot_mask(self) -> np.ndarray:
        mask = np.zeros(UNIFIED_DIM, dtype=bool)
        mask[list(self.joint_map)] = True
        return mask

    def to_unified(self, native: np.ndarray) -> np.ndarray:
        """Scatter any native-indexed array (last axis n_dofs) into 32 slots."""
        native = np.asarray(native, dtype=float)
        out = np.zeros(native.shape[:-1] + (UNIFIED_DIM,), dtype=float)
        out[..., list(self.joint_map)] = native
        return out

    def fingerprint(self) -> dict:
        return self.source


def validate_joint_map(joint_map: Sequence[int], names: Sequence[str] | None = None) -> None:
    seen: dict[int, int] = {}
    for k, slot in enumerate(joint_map):
        label = names[k] if names is not None else f"joint {k}"
        if not isinstance(slot, (int, np.integer)) or not 0 <= slot < UNIFIED_DIM:
            raise SpecError(f"{label}: slot {slot!r} outside [0, {UNIFIED_DIM})")
        if slot in seen:
            other = names[seen[slot]] if names is not None else f"joint {seen[slot]}"
            raise SpecError(f"{label}: slot {slot} already claimed by {other}")
        seen[slot] = k
    if len(joint_map) > UNIFIED_DIM:
        raise SpecError(f"{len(joint_map)} joints exceed {UNIFIED_DIM} slots")


def build_permutation(joint_map: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(forward, selector)`` index maps for a joint map.

    ``forward`` is a length-32 permutation: padded native position ``j`` goes
    to unified slot ``forward[j]``. Native joints come first (``forward[k] =
    joint_map[k]``) and the zero-padding positions fill the free slots in
    increasing order. ``selector`` picks the native joints back out of a
    unified vector, so ``unified[selector] == native``.
    """
    validate_joint_map(joint_map)
    used = set(int(s) for s in joint_map)
    free = [s for s in range(UNIFIED_DIM) if s not in used]
    forward = np.array(list(joint_map) + free, dtype=np.int64)
    selector = np.array(joint_map, dtype=np.int64)
    return forward, selector


def permutation_matrices(joint_map: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``P`` (32x32) and ``S`` (n x 32) matrices. Test/diagnostic use only."""
    forward, selector = build_permutation(joint_map)
    n = len(selector)
    P = np.zeros((UNIFIED_DIM, UNIFIED_DIM))
    P[forward, np.arange(UNIFIED_DIM)] = 1.0
    S = np.zeros((n, UNIFIED_DIM))
    S[np.arange(n), selector] = 1.0
    return P, S


def embed_action(native: np.ndarray, spec: EmbodimentSpec) -> np.ndarray:
    native = np.asarray(native)
    if native.shape[-1] != spec.n_dofs:
        raise ValueError(f"{spec.name}: native action has {native.shape[-1]} entries, "
                         f"expected {spec.n_dofs}")
    out = np.zeros(native.shape[:-1] + (UNIFIED_DIM,), dtype=native.dtype)
    out[..., list(spec.joint_map)] = native
    return out


def recover_action(unified: np.ndarray, spec: EmbodimentSpec) -> np.ndarray:
    unified = np.asarray(unified)
    if unified.shape[-1] != UNIFIED_DIM:
        raise ValueError(f"unified action must have {UNIFIED_DIM} entries, got {unified.shape[-1]}")
    return unified[..., list(spec.joint_map)]


def raw_embodiment_vector(spec: EmbodimentSpec) -> np.ndarray:
    return spec.body_properties.reshape(-1).astype(float)


class Registry:
    """An immutable, ordered collection of embodiment specs."""

    def __init__(self, specs: Iterable[EmbodimentSpec], oea_mean: np.ndarray,
                 oea_std: np.ndarray, root: Path | None = None):
        self.specs: tuple[EmbodimentSpec, ...] = tuple(sorted(specs, key=lambda s: s.id))
        ids = [s.id for s in self.specs]
        if len(set(ids)) != len(ids):
            raise SpecError(f"duplicate embodiment ids: {ids}")
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise SpecError(f"duplicate embodiment names: {names}")
        self.oea_mean = np.asarray(oea_mean, dtype=float)
        self.oea_std = np.asarray(oea_std, dtype=float)
        if self.oea_mean.shape != (OEA_DIM,) or self.oea_std.shape != (OEA_DIM,):
            raise SpecError("oea normalization constants must have 30 entries")
        if np.any(self.oea_std <= 0):
            raise SpecError("oea_std entries must be positive")
        self.root = root
        self._by_id = {s.id: s for s in self.specs}
        self._by_name = {s.name: s for s in self.specs}

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def __getitem__(self, key: int | str) -> EmbodimentSpec:
        try:
            return self._by_name[key] if isinstance(key, str) else self._by_id[int(key)]
        except KeyError:
            raise KeyError(f"unknown embodiment {key!r}") from None

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.specs]

    def subset(self, keys: Iterable[int | str]) -> "Registry":
        return Registry([self[k] for k in keys], self.oea_mean, self.oea_std, self.root)

    def embodiment_observation(self, spec: EmbodimentSpec | int | str) -> np.ndarray:
        if not isinstance(spec, EmbodimentSpec):
            spec = self[spec]
        return (raw_embodiment_vector(spec) - self.oea_mean) / self.oea_std

    @cached_property
    def hash(self) -> str:
        blob = json.dumps(
            {"specs": [s.source for s in self.specs],
             "mean": [round(float(v), 12) for v in self.oea_mean],
             "std": [round(float(v), 12) for v in self.oea_std]},
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_embodiment_observation(spec: EmbodimentSpec, registry: Registry) -> np.ndarray:
    """30-dim z-scored [mass, com(3), inertia(6)] for torso, left foot, right foot."""
    return registry.embodiment_observation(spec)


def _check_keys(doc: dict, allowed: set[str], where: str, required: bool = True) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise SpecError(f"{where}: unknown field(s) {sorted(unknown)}")
    if required:
        missing = allowed - set(doc)
        if missing:
            raise SpecError(f"{where}: missing field(s) {sorted(missing)}")


def spec_from_dict(doc: dict, where: str = "<spec>") -> EmbodimentSpec:
    if not isinstance(doc, dict):
        raise SpecError(f"{where}: expected a mapping")
    _check_keys(doc, _SPEC_KEYS, where)
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SpecError(f"{where}: unsupported schema_version {doc['schema_version']}")
    joints = doc["joints"]
    for j in joints:
        _check_keys(j, _JOINT_KEYS, f"{where}: joint {j.get('name', '?')}")
    names = tuple(str(j["name"]) for j in joints)
    if len(set(names)) != len(names):
        raise SpecError(f"{where}: duplicate joint names")
    index = {n: k for k, n in enumerate(names)}

    def resolve(name: str, ctx: str) -> int:
        if name not in index:
            raise SpecError(f"{where}: {ctx} refers to unknown joint {name!r}")
        return index[name]

    legs = []
    for side in SIDES:
        leg = doc["legs"].get(side)
        if leg is None:
            raise SpecError(f"{where}: legs.{side} missing")
        _check_keys(leg, _LEG_KEYS, f"{where}: legs.{side}")
        legs.append(LegSpec(
            pitch=resolve(leg["pitch"], f"legs.{side}.pitch"),
            roll=resolve(leg["roll"], f"legs.{side}.roll"),
            lift=resolve(leg["lift"], f"legs.{side}.lift"),
            lift_gain=float(leg["lift_gain"]),
        ))
    if set(doc["legs"]) - set(SIDES):
        raise SpecError(f"{where}: legs has unknown side(s) {sorted(set(doc['legs']) - set(SIDES))}")

    bodies = []
    if set(doc["bodies"]) != set(BODY_NAMES):
        raise SpecError(f"{where}: bodies must be exactly {BODY_NAMES}")
    for b in BODY_NAMES:
        d = doc["bodies"][b]
        _check_keys(d, _BODY_KEYS, f"{where}: bodies.{b}")
        if len(d["com"]) != 3 or len(d["inertia"]) != 6:
            raise SpecError(f"{where}: bodies.{b} needs com[3] and inertia[6]")
        bodies.append([float(d["mass"]), *map(float, d["com"]), *map(float, d["inertia"])])

    act = np.zeros((len(ACTUATION_ROWS), len(names)))
    rows = doc["actuation_matrix"]
    unknown = set(rows) - set(ACTUATION_ROWS)
    if unknown:
        raise SpecError(f"{where}: actuation_matrix has unknown row(s) {sorted(unknown)}")
    for r, row in enumerate(ACTUATION_ROWS):
        for jname, gain in (rows.get(row) or {}).items():
            act[r, resolve(jname, f"actuation_matrix.{row}")] = float(gain)

    swing = np.asarray(doc["swing_height_targets"], dtype=float)
    if swing.shape != (2,):
        raise SpecError(f"{where}: swing_height_targets needs 2 values")

    return EmbodimentSpec(
        id=int(doc["id"]),
        name=str(doc["name"]),
        joint_names=names,
        joint_map=tuple(int(j["slot"]) for j in joints),
        default_pose=np.array([float(j["default"]) for j in joints]),
        stiffness=np.array([float(j["stiffness"]) for j in joints]),
        damping=np.array([float(j["damping"]) for j in joints]),
        upper=tuple(resolve(n, "upper_joints") for n in doc["upper_joints"]),
        hip=tuple(resolve(n, "hip_joints") for n in doc["hip_joints"]),
        swing_height_targets=swing,
        nominal_base_height=float(doc["nominal_base_height"]),
        leg_length=float(doc["leg_length"]),
        legs=(legs[0], legs[1]),
        body_properties=np.array(bodies),
        actuation_matrix=act,
        source=doc,
    )


def load_spec(path: str | Path) -> EmbodimentSpec:
    path = Path(path)
    with open(path) as f:
        doc = yaml.safe_load(f)
    return spec_from_dict(doc, where=str(path))


def default_registry_path() -> Path:
    return Path(str(resources.files("xdistill") / "data" / "registry"))


def load_registry(path: str | Path | None = None) -> Registry:
    """Load a registry directory: ``registry.yaml`` plus one YAML per embodiment."""
    root = Path(path) if path is not None else default_registry_path()
    meta_path = root / "registry.yaml"
    if not meta_path.exists():
        raise SpecError(f"{root}: missing registry.yaml")
    with open(meta_path) as f:
        meta = yaml.safe_load(f)
    _check_keys(meta, _META_KEYS, str(meta_path))
    if meta["schema_version"] != SCHEMA_VERSION:
        raise SpecError(f"{meta_path}: unsupported schema_version {meta['schema_version']}")
    if tuple(meta["slot_table"]) != SLOT_NAMES:
        raise SpecError(f"{meta_path}: slot_table does not match the canonical table")
    specs = [load_spec(p) for p in sorted(root.glob("*.yaml")) if p.name != "registry.yaml"]
    if not specs:
        raise SpecError(f"{root}: no embodiment spec files")
    for s in specs:
        for name, slot in zip(s.joint_names, s.joint_map):
            if SLOT_NAMES[slot] != name:
                raise SpecError(f"{s.name}: joint {name!r} mapped to slot {slot} ({SLOT_NAMES[slot]})")
    return Registry(specs, meta["oea_mean"], meta["oea_std"], root)
