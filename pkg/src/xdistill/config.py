"""Run configuration: one YAML file, optional includes, strict keys."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .distill import LoopConfig
from .embodiment import Registry, load_registry
from .evaluation import EvalProtocol
from .policy import PolicyConfig
from .ppo import PPOConfig
from .world import WorldConfig

ENV_SEED = "XDISTILL_SEED"
ENV_OUTPUT = "XDISTILL_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message names the file and the field."""


@dataclass
class TrainSettings:
    updates: int = 1000
    checkpoint_every: int = 50


@dataclass
class Ablation:
    embodiment_observation: bool = True
    iterative: bool = True
    single_robot: str | None = None


SECTIONS = {"world", "policy", "ppo", "loop", "evaluation", "train", "ablation"}
TOP_LEVEL = SECTIONS | {"include", "seed", "output_dir", "registry"}


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: Path = Path("runs/default")
    registry_path: Path | None = None
    world: WorldConfig = field(default_factory=WorldConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    evaluation: EvalProtocol = field(default_factory=EvalProtocol)
    train: TrainSettings = field(default_factory=TrainSettings)
    ablation: Ablation = field(default_factory=Ablation)
    source: Path | None = None

    def registry(self) -> Registry:
        return load_registry(self.registry_path)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "registry": str(self.registry_path) if self.registry_path else None,
            "world": self.world.to_dict(),
            "policy": self.policy.to_dict(),
            "ppo": self.ppo.to_dict(),
            "loop": self.loop.to_dict(),
            "evaluation": self.evaluation.to_dict(),
            "train": vars(self.train).copy(),
            "ablation": vars(self.ablation).copy(),
        }

    def snapshot(self, path: str | Path, extra: dict | None = None) -> None:
        """Write the fully resolved configuration next to the artifacts."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = self.to_dict()
        if extra:
            doc["provenance"] = extra
        path.write_text(yaml.safe_dump(doc, sort_keys=False))


def default_config_path(name: str = "base.yaml") -> Path:
    return Path(str(resources.files("xdistill") / "data" / "configs" / name))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _read(path: Path, chain: tuple[Path, ...] = ()) -> dict:
    path = path.resolve()
    if path in chain:
        raise ConfigError(f"{path}: include cycle")
    if not path.exists():
        where = f" (included from {chain[-1]})" if chain else ""
        raise ConfigError(f"{path}: file not found{where}")
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    includes = doc.pop("include", []) or []
    if isinstance(includes, str):
        includes = [includes]
    merged: dict = {}
    for inc in includes:
        merged = _merge(merged, _read(path.parent / inc, chain + (path,)))
    # registry paths are relative to the file that names them
    if doc.get("registry") is not None and not Path(doc["registry"]).is_absolute():
        doc["registry"] = str(path.parent / doc["registry"])
    return _merge(merged, doc)


def _section(cls, data, path, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: section '{name}' must be a mapping")
    try:
        if hasattr(cls, "from_dict"):
            return cls.from_dict(data)
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {name}: {e}") from None


def load_config(path: str | Path | None = None, env: dict | None = None) -> RunConfig:
    """Load and validate a run configuration; ``None`` gives the packaged base config."""
    path = Path(path) if path is not None else default_config_path()
    doc = _read(path)
    env = os.environ if env is None else env
    if env.get(ENV_SEED):
        try:
            doc["seed"] = int(env[ENV_SEED])
        except ValueError:
            raise ConfigError(f"{ENV_SEED}: not an integer: {env[ENV_SEED]!r}") from None
    if env.get(ENV_OUTPUT):
        doc["output_dir"] = env[ENV_OUTPUT]
    reg = doc.get("registry")
    if reg is not None and not Path(reg).exists():
        raise ConfigError(f"{path}: registry: path does not exist: {reg}")
    cfg = RunConfig(
        seed=int(doc.get("seed", 0)),
        output_dir=Path(doc.get("output_dir", "runs/default")),
        registry_path=Path(reg) if reg else None,
        world=_section(WorldConfig, doc.get("world"), path, "world"),
        policy=_section(PolicyConfig, doc.get("policy"), path, "policy"),
        ppo=_section(PPOConfig, doc.get("ppo"), path, "ppo"),
        loop=_section(LoopConfig, doc.get("loop"), path, "loop"),
        evaluation=_section(EvalProtocol, doc.get("evaluation"), path, "evaluation"),
        train=_section(TrainSettings, doc.get("train"), path, "train"),
        ablation=_section(Ablation, doc.get("ablation"), path, "ablation"),
        source=path,
    )
    if cfg.ablation.single_robot is not None:
        try:
            cfg.registry()[cfg.ablation.single_robot]
        except KeyError:
            raise ConfigError(f"{path}: ablation.single_robot: unknown embodiment "
                              f"{cfg.ablation.single_robot!r}") from None
    return cfg
