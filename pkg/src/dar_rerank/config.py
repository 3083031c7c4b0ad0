"""
Experiment configuration.

The text form is one `key=value` per line with `#` comments; nested
sections use dotted keys (`encoder.layers=2`, `paths.train=data/train.jsonl`).
Command-line `--set key=value` overrides go through the same parser.
Values are coerced to the type of the field's default. Nothing is read
from the environment.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Iterable, Mapping

from dar_rerank.encoder.transformer import EncoderConfig
from dar_rerank.errors import ConfigError

MODEL_KINDS = ("sbc", "pc", "acm", "asr", "asr-rank", "dar", "dar-dpr", "dpr")
VARIANTS = ("all", "best")
MODES = ("all", "no-all-minus", "clean")


def read_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse key=value lines; later keys win."""
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        out[key] = value
    return out


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    return read_kv("\n".join(items), source="--set")


def _coerce(raw, default, key: str):
    if isinstance(raw, str):
        text = raw.strip()
        try:
            if isinstance(default, bool):
                if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"not a boolean: {text!r}")
                return text.lower() in ("true", "1", "yes")
            if isinstance(default, int):
                return int(text)
            if isinstance(default, float):
                return float(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        return text
    if isinstance(default, float) and isinstance(raw, int) and not isinstance(raw, bool):
        return float(raw)
    return raw


@dataclass
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class RetrievalConfig:
    m: int = 100
    n_s: int = 10
    batch_size: int = 64


@dataclass
class PathsConfig:
    train: str = ""
    dev: str = ""
    test: str = ""
    supports: str = ""
    passages: str = ""
    index: str = ""
    checkpoint: str = "model.ckpt"
    sbc_checkpoint: str = ""
    dpr_checkpoint: str = ""
    vocab: str = ""
    out_dir: str = "."


@dataclass
class ExperimentConfig:
    model: str = "sbc"
    k: int = 3
    variant: str = "all"
    asc_weight: float = 1.0
    mode: str = "clean"
    seed: int = 0
    epochs: int = 20
    patience: int = 3
    batch_size: int = 8
    trials: int = 100_000
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model={self.model!r}; expected one of {MODEL_KINDS}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant={self.variant!r}; expected one of {VARIANTS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode={self.mode!r}; expected one of {MODES}")
        if self.k < 1:
            raise ConfigError(f"k={self.k} must be >= 1")
        if self.model in ("pc", "asr", "asr-rank") and self.k < 2:
            raise ConfigError(f"model {self.model} needs k >= 2, got k={self.k}")
        if not 1 <= self.epochs <= 1000 or self.patience < 1 or self.batch_size < 1:
            raise ConfigError(
                f"epochs={self.epochs}, patience={self.patience}, batch_size={self.batch_size} out of range")
        if self.trials < 1:
            raise ConfigError(f"trials={self.trials} must be >= 1")
        if self.optimizer.lr <= 0:
            raise ConfigError(f"optimizer.lr={self.optimizer.lr} must be positive")
        if self.retrieval.m < 1 or self.retrieval.n_s < 1:
            raise ConfigError(f"retrieval.m={self.retrieval.m} and retrieval.n_s={self.retrieval.n_s} must be >= 1")

    # ── overrides ──

    def apply(self, values: Mapping[str, object]) -> "ExperimentConfig":
        """Set dotted keys in place; unknown keys are an error."""
        for key, raw in values.items():
            target, name = self, key
            if "." in key:
                section, name = key.split(".", 1)
                target = getattr(self, section, None)
                if not is_dataclass(target) or "." in name:
                    raise ConfigError(f"unknown config key {key!r}")
            valid = {f.name for f in fields(target)}
            if name not in valid:
                raise ConfigError(f"unknown config key {key!r}")
            default = getattr(target, name)
            if is_dataclass(default):
                raise ConfigError(f"{key!r} is a section; set its fields as {key}.<field>")
            setattr(target, name, _coerce(raw, default, key))
        return self

    # ── persistence ──

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        flat = {}
        for key, value in d.items():
            if isinstance(value, Mapping):
                flat.update({f"{key}.{k}": v for k, v in value.items()})
            else:
                flat[key] = value
        cfg = cls().apply(flat)
        cfg.validate()
        return cfg

    def to_kv(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            if isinstance(value, dict):
                lines.extend(f"{key}.{k}={v}" for k, v in value.items())
            else:
                lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps(self.to_dict(), indent=2))
        else:
            path.write_text(self.to_kv())

    @classmethod
    def load(cls, path: str | Path, overrides: Mapping[str, str] | None = None) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        if path.suffix == ".json":
            cfg = cls.from_dict(json.loads(path.read_text()))
        else:
            cfg = cls().apply(read_kv(path.read_text(), source=str(path)))
        cfg.apply(overrides or {})
        cfg.validate()
        return cfg
