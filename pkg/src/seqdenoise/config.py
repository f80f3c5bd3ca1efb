"""Run configuration: flat key/value file with [section] headers, plus overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .curriculum import CurriculumSchedule
from .denoise import BACKBONE_NAMES


class ConfigError(ValueError):
    """Invalid configuration value or file."""


@dataclass
class RunConfig:
    # data
    data_path: str = ""
    data_format: str = "movielens-tab"
    max_len: int = 50
    train_supervision: str = "last-target"
    # model
    dim: int = 100
    m: int = 2
    num_h: int = 4
    num_v: int = 4
    backbone: str = "sasrec-lite"
    encoder_layers: int = 2
    encoder_heads: int = 2
    dropout: float = 0.2
    separate_fuse_weights: bool = False
    stop_target_grad: bool = False
    scl_exclude_positives: bool = False
    # optimization
    batch_size: int = 256
    lr: float = 1e-3
    lambda_weight: float = 0.2
    beta: float = 1e-4
    max_epochs: int = 300
    patience: int = 10
    seed: int = 0
    # temperature schedule (shared by the gate and the contrastive loss)
    tau0: float = 0.5
    tau_scl0: float = 0.5
    tau_anneal_every: int = 40
    tau_anneal_factor: float = 0.995
    tau_floor: float = 0.1
    # curriculum
    curriculum: CurriculumSchedule = field(default_factory=CurriculumSchedule)
    curriculum_enabled: bool = True
    curriculum_clock: str = "epoch"  # or "step"
    # evaluation
    ks: tuple[int, ...] = (5, 10, 20)
    # variants / ablations
    backbone_only: bool = False
    no_hard_path: bool = False
    no_target_short: bool = False
    no_bpr: bool = False

    def validate(self) -> None:
        positive = {
            "max_len": self.max_len, "dim": self.dim, "m": self.m,
            "num_h": self.num_h, "num_v": self.num_v,
            "batch_size": self.batch_size, "lr": self.lr,
            "max_epochs": self.max_epochs, "patience": self.patience,
            "tau0": self.tau0, "tau_scl0": self.tau_scl0,
            "tau_anneal_every": self.tau_anneal_every,
            "tau_anneal_factor": self.tau_anneal_factor,
            "tau_floor": self.tau_floor,
            "encoder_heads": self.encoder_heads,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name, value in (
            ("lambda_weight", self.lambda_weight),
            ("beta", self.beta),
            ("dropout", self.dropout),
            ("encoder_layers", self.encoder_layers),
        ):
            if value < 0:
                raise ConfigError(f"{name} must be nonnegative, got {value}")
        if self.backbone not in BACKBONE_NAMES:
            raise ConfigError(
                f"backbone must be one of {BACKBONE_NAMES}, got {self.backbone!r}"
            )
        if self.train_supervision not in ("last-target", "all-prefix"):
            raise ConfigError(f"bad train_supervision {self.train_supervision!r}")
        if self.curriculum_clock not in ("epoch", "step"):
            raise ConfigError(f"bad curriculum_clock {self.curriculum_clock!r}")
        if self.data_format not in ("movielens-tab", "csv"):
            raise ConfigError(f"bad data_format {self.data_format!r}")
        try:
            self.curriculum.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ks"] = list(self.ks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        cur = d.pop("curriculum", {})
        cfg = cls(**{k: v for k, v in d.items() if k in _FIELD_TYPES})
        cfg.curriculum = CurriculumSchedule(**cur)
        cfg.ks = tuple(cfg.ks)
        return cfg


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_CURRICULUM_FIELDS = {f.name for f in dataclasses.fields(CurriculumSchedule)}


def _parse_scalar(raw: str):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        return [] if not inner else [_parse_scalar(p) for p in inner.split(",")]
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    """Parse the flat `key = value` format with optional [section] headers."""
    root: dict = {}
    section = root
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: empty section name")
            section = root.setdefault(name, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        comment = raw.find(" #")
        if comment != -1 and '"' not in raw[:comment]:
            raw = raw[:comment]
        section[key.strip()] = _parse_scalar(raw)
    return root


def load_config(path: str | Path) -> RunConfig:
    parsed = parse_config_text(Path(path).read_text(encoding="utf-8"))
    cfg = RunConfig()
    cur = parsed.pop("curriculum", {})
    for key, value in parsed.items():
        if isinstance(value, dict):
            raise ConfigError(f"unknown section [{key}]")
        _set_field(cfg, key, value)
    for key, value in cur.items():
        _set_curriculum_field(cfg, key, value)
    cfg.validate()
    return cfg


def _set_field(cfg: RunConfig, key: str, value) -> None:
    if key not in _FIELD_TYPES or key == "curriculum":
        raise ConfigError(f"unknown config key {key!r}")
    if key == "ks":
        value = tuple(int(v) for v in value)
    current = getattr(cfg, key)
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {value!r}")
    elif isinstance(current, float) and isinstance(value, int):
        value = float(value)
    elif isinstance(current, int) and not isinstance(value, int):
        raise ConfigError(f"{key} expects an integer, got {value!r}")
    setattr(cfg, key, value)


def _set_curriculum_field(cfg: RunConfig, key: str, value) -> None:
    if key == "enabled":
        if not isinstance(value, bool):
            raise ConfigError("curriculum.enabled expects true/false")
        cfg.curriculum_enabled = value
        return
    if key == "clock":
        cfg.curriculum_clock = value
        return
    if key not in _CURRICULUM_FIELDS:
        raise ConfigError(f"unknown curriculum key {key!r}")
    if key in ("k", "easy_fraction") and isinstance(value, int):
        value = float(value)
    setattr(cfg.curriculum, key, value)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply `key=value` pairs; dotted keys reach the curriculum section."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        value = _parse_scalar(raw)
        key = key.strip()
        if key.startswith("curriculum."):
            _set_curriculum_field(cfg, key.split(".", 1)[1], value)
        else:
            _set_field(cfg, key, value)
    cfg.validate()
    return cfg


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2), encoding="utf-8")
