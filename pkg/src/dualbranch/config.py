"""Run configuration and its JSON file format.

A config file is a JSON object whose keys mirror :class:`RunConfig`; nested
sections (``corpus``, ``model``, ``loss``, ``optimizer``, ``protocol``,
``ablation``) may be partial, missing keys keep their defaults. Individual
fields can also be overridden with dotted paths, e.g.
``model.rgb.stage_channels=[16,32,64]`` or ``loss.lambda2=0``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .data import CorpusSpec, Protocol
from .errors import ConfigError
from .losses import LossWeights
from .model import BackboneConfig, ModelConfig
from .spectral import DOMAINS

CONFIG_VERSION = 1


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3


@dataclass
class AblationFlags:
    disable_fre_branch: bool = False
    disable_f_center: bool = False
    disable_attention: bool = False

    def active(self) -> List[str]:
        return [f.name for f in dataclasses.fields(self) if getattr(self, f.name)]


@dataclass
class RunConfig:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    protocol: Protocol = field(default_factory=Protocol)
    test_domains: Optional[List[str]] = None
    ablation: AblationFlags = field(default_factory=AblationFlags)
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    output_dir: Optional[str] = None

    def validate(self) -> None:
        self.corpus.validate()
        self.model.validate()
        self.loss.validate()
        self.protocol.validate()
        if self.model.image_size != self.corpus.image_size:
            raise ConfigError(
                f"model.image_size: {self.model.image_size} differs from corpus.image_size {self.corpus.image_size}"
            )
        if self.optimizer.kind not in ("sgd", "adam"):
            raise ConfigError(f"optimizer.kind: expected 'sgd' or 'adam', got {self.optimizer.kind!r}")
        if not self.optimizer.learning_rate > 0:
            raise ConfigError("optimizer.learning_rate: must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs: must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size: must be >= 2 (the contrastive term needs pairs)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: {self.seed} is not an unsigned 64-bit integer")
        for d in self.resolved_test_domains():
            if d not in DOMAINS:
                raise ConfigError(f"test_domains: unknown family {d!r}")
            if self.protocol.kind == "cross-domain" and d == self.protocol.train_domain:
                raise ConfigError("test_domains: cross-domain runs cannot test on the training family")

    def resolved_test_domains(self) -> List[str]:
        if self.test_domains is not None:
            return list(self.test_domains)
        if self.protocol.kind == "cross-domain":
            return [self.protocol.test_domain]
        return [self.protocol.train_domain]

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Digest of everything that affects results (output_dir excluded)."""
        payload = self.to_dict()
        payload.pop("output_dir", None)
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "RunConfig":
        return from_dict(_merge(self.to_dict(), changes))


def _merge(base: Dict[str, Any], changes: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for k, v in changes.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


_NESTED = {
    RunConfig: {
        "corpus": CorpusSpec,
        "model": ModelConfig,
        "loss": LossWeights,
        "optimizer": OptimizerConfig,
        "protocol": Protocol,
        "ablation": AblationFlags,
    },
    ModelConfig: {"rgb": BackboneConfig, "fre": BackboneConfig},
}


def _coerce(value: Any, annotation: str, path: str) -> Any:
    ann = str(annotation)
    if "Dict" in ann or "List" in ann:
        if "Dict" in ann and not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object, got {value!r}")
        if "List" in ann and value is not None and not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    if value is None and "Optional" in ann:
        return None
    try:
        if ann.startswith("bool"):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if ann.startswith("int") or ann == "Optional[int]":
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError
            return int(value)
        if ann.startswith("float"):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if "str" in ann:
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: invalid value {value!r} (expected {ann})") from None
    return value


def _build(cls, data: Dict[str, Any], path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {data!r}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    nested = _NESTED.get(cls, {})
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"{sub}: unknown field")
        if key in nested:
            defaults = dataclasses.asdict(fields[key].default_factory())
            kwargs[key] = _build(nested[key], _merge(defaults, value) if isinstance(value, dict) else value, sub)
        else:
            kwargs[key] = _coerce(value, fields[key].type, sub)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def from_dict(data: Dict[str, Any]) -> RunConfig:
    data = dict(data)
    version = data.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"version: unsupported config version {version}")
    cfg = _build(RunConfig, data, "")
    cfg.validate()
    return cfg


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


def save_config(config: RunConfig, path: Union[str, Path]) -> None:
    payload = {"version": CONFIG_VERSION, **config.to_dict()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def apply_overrides(config: RunConfig, assignments: List[str]) -> RunConfig:
    """Apply ``dotted.path=value`` strings; values are parsed as JSON, else taken as strings."""
    changes: Dict[str, Any] = {}
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = changes
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config.replace(**changes)


def smoke_config(seed: int = 0) -> RunConfig:
    """Short in-domain T2I-like run with a small step size (lr 1e-4, 5 epochs).

    At this learning rate the median epoch loss decreases steadily, which
    makes it the reference run for loss-curve sanity checks.
    """
    return RunConfig(optimizer=OptimizerConfig(learning_rate=1e-4), epochs=5, seed=seed)
