"""Flat key-value run configuration shared by every command.

A run is fully described by one RunConfig. Commands resolve it in three
layers (built-in defaults, then a config file, then CLI flags), write the
resolved snapshot next to their outputs, and a re-run from that snapshot
reproduces the outputs byte for byte. The file format is one `key = value`
per line with `#` comments; floats are rendered with repr so the round trip
is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .envsim import EnvConfig
from .fuzzy import FuzzyWeights
from .neuralnet import NetworkConfig
from .orchestrator import input_width
from .training import ExecutionPolicy, GridSpace, LabelMode, TrainConfig


class ConfigFileError(ValueError):
    """Malformed config file content; message carries the line number."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved parameters for environment, model, training, and evaluation."""

    # environment
    d: int = 8
    c: int = 4
    n_agents: int = 3
    alpha: float = 1.0
    domain_bias: float = 1.0
    master_seed: int = 900
    # fuzzy quality weights
    w_completeness: float = 0.4
    w_relevance: float = 0.4
    w_confidence: float = 0.2
    # network
    hidden_dims: tuple[int, ...] = (128, 64)
    dropout: float = 0.0
    init_seed: int = 5
    # training
    iterations: int = 500
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    confidence_weight: float = 0.2
    label_mode: str = "hard"
    soft_temperature: float = 0.1
    train_seed: int = 11
    executor: str = "oracle"
    # evaluation
    n_tasks: int = 300
    eval_seed: int = 777
    warmup_tasks: int = 50
    warmup_seed: int = 113
    random_seed: int = 180
    static_warmup_tasks: int = 100
    strategies: tuple[str, ...] = ("neural", "random", "round-robin", "static-best")
    # hyperparameter grid
    grid_hidden_dims: tuple[tuple[int, ...], ...] = ((64, 32), (128, 64), (256, 128, 64))
    grid_dropout: tuple[float, ...] = (0.0, 0.2)
    grid_learning_rate: tuple[float, ...] = (0.001, 0.01)
    grid_batch_size: tuple[int, ...] = (64, 128)
    grid_confidence_weight: tuple[float, ...] = (0.1, 0.2, 0.0)
    val_tasks: int = 300
    val_seed: int = 7
    # serving
    address: str = "127.0.0.1:8000"
    queue_cap: int = 100
    serve_seed: int = 4242
    auto_expire_seconds: float = 0.0
    # paths
    out_dir: str = "runs"
    checkpoint: str = ""

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            d=self.d,
            c=self.c,
            n_agents=self.n_agents,
            alpha=self.alpha,
            domain_bias=self.domain_bias,
            master_seed=self.master_seed,
        )

    def fuzzy_weights(self) -> FuzzyWeights:
        return FuzzyWeights(
            w_c=self.w_completeness,
            w_r=self.w_relevance,
            w_f=self.w_confidence,
        ).validate()

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            input_dim=input_width(self.d, self.c, self.n_agents),
            hidden_dims=self.hidden_dims,
            n_agents=self.n_agents,
            dropout_rate=self.dropout,
            confidence_head=True,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            confidence_weight=self.confidence_weight,
            label_mode=LabelMode(self.label_mode),
            soft_temperature=self.soft_temperature,
            seed=self.train_seed,
            executor=ExecutionPolicy(self.executor),
        ).validate()

    def grid_space(self) -> GridSpace:
        return GridSpace(
            hidden_dims=self.grid_hidden_dims,
            dropout=self.grid_dropout,
            learning_rate=self.grid_learning_rate,
            batch_size=self.grid_batch_size,
            confidence_weight=self.grid_confidence_weight,
        )


def _parse_dims(text: str) -> tuple[int, ...]:
    dims = tuple(int(p) for p in text.split("x") if p)
    if not dims:
        raise ValueError("empty layer list")
    return dims


def _render_dims(dims: tuple[int, ...]) -> str:
    return "x".join(str(d) for d in dims)


def _parse_list(text: str, item):
    return tuple(item(p.strip()) for p in text.split(",") if p.strip())


_PARSERS = {
    int: int,
    float: float,
    str: str,
}


def _parse_value(name: str, text: str):
    default = _DEFAULTS[name]
    if name == "hidden_dims":
        return _parse_dims(text)
    if name == "grid_hidden_dims":
        return _parse_list(text, _parse_dims)
    if name == "strategies":
        return _parse_list(text, str)
    if isinstance(default, tuple):
        item = type(default[0])
        return _parse_list(text, _PARSERS[item])
    if isinstance(default, bool):
        raise AssertionError("no boolean keys defined")
    return _PARSERS[type(default)](text)


def _render_value(name: str, value) -> str:
    if name == "hidden_dims":
        return _render_dims(value)
    if name == "grid_hidden_dims":
        return ",".join(_render_dims(v) for v in value)
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_DEFAULTS = {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
_FIELD_ORDER = tuple(f.name for f in fields(RunConfig))


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines into an override dict.

    Unknown keys and unparsable values are rejected with the line number.
    """
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigFileError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _DEFAULTS:
            raise ConfigFileError(f"line {lineno}: unknown key {key!r}")
        try:
            overrides[key] = _parse_value(key, value)
        except (ValueError, KeyError) as exc:
            raise ConfigFileError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return overrides


def read_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def render_config(config: RunConfig) -> str:
    """Stable textual form; parsing it back yields an equal RunConfig."""
    lines = ["# resolved run configuration"]
    for name in _FIELD_ORDER:
        lines.append(f"{name} = {_render_value(name, getattr(config, name))}")
    return "\n".join(lines) + "\n"


def write_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(render_config(config))


def resolve(file_overrides: dict | None = None, cli_overrides: dict | None = None) -> RunConfig:
    """Layer defaults, config-file values, and CLI flags, in that order."""
    config = RunConfig()
    if file_overrides:
        config = replace(config, **file_overrides)
    if cli_overrides:
        cleaned = {k: v for k, v in cli_overrides.items() if v is not None}
        config = replace(config, **cleaned)
    return config
