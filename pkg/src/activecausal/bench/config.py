"""Experiment configs: a flat ``key = value`` text format with a schema version.

Example::

    schema = 1
    name = structured-chain5-ait
    graph = chain 5          # or "er 8 1", or "file asia.net"
    strategy = ait
    budget = 200
    seeds = 0 1 2
    eta = 0.0
    train.dag_coeff = 0.5    # any TrainConfig field
    train.ait.graphs_count = 50
    probe = 1-2              # optional: run the informative-target probe

Blank lines and ``#`` comments are ignored. Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from ..ait import AITConfig
from ..graphs import STRUCTURED_KINDS
from ..sdi import STRATEGIES, TrainConfig

SCHEMA_VERSION = 1
PRESET_SUFFIX = ".cfg"


class ConfigError(ValueError):
    pass


@dataclass
class GraphSpec:
    kind: str  # a structured kind, "er" or "file"
    n: int = 0
    k: int = 0
    path: str = ""

    @classmethod
    def parse(cls, text: str) -> "GraphSpec":
        parts = text.split()
        if not parts:
            raise ConfigError("empty graph spec")
        kind = parts[0]
        try:
            if kind in STRUCTURED_KINDS and len(parts) == 2:
                return cls(kind, n=int(parts[1]))
            if kind == "er" and len(parts) == 3:
                return cls(kind, n=int(parts[1]), k=int(parts[2]))
        except ValueError:
            raise ConfigError(f"bad graph spec {text!r}") from None
        if kind == "file" and len(parts) == 2:
            return cls(kind, path=parts[1])
        raise ConfigError(f"bad graph spec {text!r}; expected '<kind> n', 'er n k' or 'file path'")

    def __str__(self):
        if self.kind == "file":
            return f"file {self.path}"
        if self.kind == "er":
            return f"er {self.n} {self.k}"
        return f"{self.kind} {self.n}"


@dataclass
class ExperimentConfig:
    graph: GraphSpec
    name: str = "experiment"
    strategy: str = "ait"
    budget: int = 200
    seeds: list = field(default_factory=lambda: [0])
    eta: float = 0.0
    allowed_targets: Optional[list] = None
    full_scale: bool = False
    slow: bool = False
    probe_edges: Optional[list] = None  # informative-target probe instead of discovery
    repetitions: int = 50
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.graph, str):
            self.graph = GraphSpec.parse(self.graph)
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        if not 0.0 <= self.eta < 1.0:
            raise ConfigError(f"eta must be in [0, 1), got {self.eta}")
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        self.train_config(self.graph.n or 5)  # validates overrides early

    def train_config(self, n: int) -> TrainConfig:
        overrides = dict(self.train)
        ait_over = {k[len("ait."):]: v for k, v in overrides.items() if k.startswith("ait.")}
        overrides = {k: v for k, v in overrides.items() if not k.startswith("ait.")}
        try:
            base = TrainConfig.full_scale(n) if self.full_scale else TrainConfig()
            if ait_over:
                overrides["ait"] = dataclasses.replace(base.ait, **ait_over)
            return dataclasses.replace(base, **overrides)
        except TypeError as exc:
            raise ConfigError(f"bad train override: {exc}") from None

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_TRAIN_TYPES = {f.name: f.type for f in fields(TrainConfig) if f.name != "ait"}
_AIT_TYPES = {f.name: f.type for f in fields(AITConfig)}


def _coerce(type_name, raw: str):
    type_name = str(type_name)
    if type_name in ("int", "<class 'int'>"):
        return int(raw)
    if type_name in ("float", "<class 'float'>"):
        return float(raw)
    if type_name in ("bool", "<class 'bool'>"):
        return _parse_bool(raw)
    return raw


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _int_list(raw: str) -> list:
    return [int(tok) for tok in raw.replace(",", " ").split()]


def _pair_list(raw: str) -> list:
    pairs = []
    for tok in raw.replace(",", " ").split():
        a, sep, b = tok.partition("-")
        if not sep:
            raise ValueError(f"expected pairs like 1-2, got {tok!r}")
        pairs.append((int(a), int(b)))
    return pairs


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    train: dict = {}
    schema = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        try:
            if key == "schema":
                schema = int(raw)
            elif key in ("name", "strategy"):
                values[key] = raw
            elif key == "graph":
                values[key] = GraphSpec.parse(raw)
            elif key == "budget":
                values[key] = int(raw)
            elif key == "eta":
                values[key] = float(raw)
            elif key == "seeds":
                values[key] = _int_list(raw)
            elif key == "allowed_targets":
                values[key] = _int_list(raw)
            elif key == "probe":
                values["probe_edges"] = _pair_list(raw)
            elif key == "repetitions":
                values[key] = int(raw)
            elif key in ("full_scale", "slow"):
                values[key] = _parse_bool(raw)
            elif key.startswith("train.ait.") and key[len("train.ait."):] in _AIT_TYPES:
                sub = key[len("train.ait."):]
                train["ait." + sub] = _coerce(_AIT_TYPES[sub], raw)
            elif key.startswith("train.") and key[len("train."):] in _TRAIN_TYPES:
                sub = key[len("train."):]
                train[sub] = _coerce(_TRAIN_TYPES[sub], raw)
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    if schema is None:
        raise ConfigError(f"{source}: missing 'schema' line")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"{source}: schema {schema} not supported (expected {SCHEMA_VERSION})")
    if "graph" not in values:
        raise ConfigError(f"{source}: missing 'graph'")
    try:
        return ExperimentConfig(train=train, **values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def dumps_config(cfg: ExperimentConfig) -> str:
    lines = [f"schema = {SCHEMA_VERSION}", f"name = {cfg.name}", f"graph = {cfg.graph}",
             f"strategy = {cfg.strategy}", f"budget = {cfg.budget}",
             "seeds = " + " ".join(str(s) for s in cfg.seeds), f"eta = {cfg.eta!r}"]
    if cfg.allowed_targets is not None:
        lines.append("allowed_targets = " + " ".join(str(i) for i in cfg.allowed_targets))
    if cfg.full_scale:
        lines.append("full_scale = true")
    if cfg.slow:
        lines.append("slow = true")
    if cfg.probe_edges is not None:
        lines.append("probe = " + " ".join(f"{a}-{b}" for a, b in cfg.probe_edges))
        lines.append(f"repetitions = {cfg.repetitions}")
    lines += [f"train.{k} = {v}" for k, v in sorted(cfg.train.items())]
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def _preset_dir():
    return resources.files("activecausal.bench") / "presets"


def list_presets() -> list[str]:
    return sorted(p.name[:-len(PRESET_SUFFIX)] for p in _preset_dir().iterdir()
                  if p.name.endswith(PRESET_SUFFIX))


def load_preset(name: str) -> ExperimentConfig:
    entry = _preset_dir() / (name + PRESET_SUFFIX)
    if not entry.is_file():
        raise ConfigError(f"no preset named {name!r}; see list_presets()")
    return parse_config(entry.read_text(), name + PRESET_SUFFIX)
