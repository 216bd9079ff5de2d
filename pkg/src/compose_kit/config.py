"""Model and training configuration, plus the key=value config-file format.

Config files hold one ``key = value`` pair per line; ``#`` starts a
comment. Unknown keys are rejected. CLI overrides use the same syntax.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


@dataclass
class ModelConfig:
    n_part: int = 1024        # partial input points
    n_kpt: int = 64           # keypoints retained after scoring
    n_fold: int = 16          # dense points folded out of each keypoint
    n_com: int = 1024         # dense completion size; must equal n_kpt * n_fold
    n_miss: int = 64          # predicted missing-region candidates
    n_vis: int = 32           # visible candidates sampled from the input
    d: int = 128              # feature width
    encoder_knn: int = 16     # neighborhood size of the local encoder pool
    knn_layers: tuple[int, ...] = (16, 32)  # neighbors per relation-encoding layer
    attn_layers: int = 2      # attention blocks per stage
    lambda_com: float = 15.0
    lambda_score: float = 1.0
    lambda_corr: float = 2.0
    lambda_geo: float = 1.0
    tau: float = 0.05         # score-target temperature
    smooth_l1: bool = False   # Smooth-L1 instead of L2 for the NOCS term
    smooth_l1_beta: float = 1.0

    def validate(self) -> None:
        if self.n_com != self.n_kpt * self.n_fold:
            raise ValueError(
                f"n_com must equal n_kpt*n_fold ({self.n_kpt}*{self.n_fold}), got {self.n_com}"
            )
        if self.n_vis > self.n_part:
            raise ValueError(f"n_vis {self.n_vis} exceeds n_part {self.n_part}")
        if self.n_kpt > self.n_miss + self.n_vis:
            raise ValueError(
                f"n_kpt {self.n_kpt} exceeds candidate count {self.n_miss + self.n_vis}"
            )
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def n_cand(self) -> int:
        return self.n_miss + self.n_vis

    @property
    def weights(self) -> tuple[float, float, float, float]:
        return (self.lambda_com, self.lambda_score, self.lambda_corr, self.lambda_geo)


@dataclass
class TrainConfig:
    batch_size: int = 8
    total_steps: int = 5000
    lr: float = 0.001
    checkpoint_every: int = 1000


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        self.model.validate()

    def as_text(self) -> str:
        lines = []
        for section in (self.model, self.train):
            for f in fields(section):
                v = getattr(section, f.name)
                if isinstance(v, tuple):
                    v = ",".join(str(x) for x in v)
                lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(raw: str, ftype, key: str):
    raw = raw.strip()
    if ftype is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean for {key}: {raw}")
    if ftype is int:
        return int(raw)
    if ftype is float:
        return float(raw)
    if ftype is tuple or str(ftype).startswith("tuple"):
        return tuple(int(x) for x in raw.split(","))
    return raw


def _field_type(f):
    mapping = {"int": int, "float": float, "bool": bool, "str": str}
    name = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if name in mapping:
        return mapping[name]
    if "tuple" in str(name):
        return tuple
    return str


def apply_overrides(config: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply ``key=value`` strings onto a RunConfig; unknown keys raise."""
    model_fields = {f.name: f for f in fields(ModelConfig)}
    train_fields = {f.name: f for f in fields(TrainConfig)}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override must look like key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key in model_fields:
            setattr(config.model, key, _coerce(raw, _field_type(model_fields[key]), key))
        elif key in train_fields:
            setattr(config.train, key, _coerce(raw, _field_type(train_fields[key]), key))
        else:
            raise ValueError(f"unknown config key: {key}")
    return config


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    config = RunConfig()
    pairs = []
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
            pairs.append(line)
    pairs.extend(overrides or [])
    apply_overrides(config, pairs)
    config.validate()
    return config
