"""Run configuration: a flat ``key = value`` document.

Grammar: one ``key = value`` (or ``key: value``) per line; ``#`` and ``;``
start comments; an optional ``[run]`` header line is accepted.  Keys must
be fields of :class:`RunConfig`; values are parsed as the field's type.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    k: int = 64
    embed_dim: int = 64
    hidden: int = 128
    demo_games: int = 200
    encoder_epochs: int = 10
    encoder_lr: float = 0.01
    feature_games: int = 100
    kmeans_seed: int = 42
    bottleneck_epochs: int = 10
    bottleneck_lr: float = 0.01
    rl_generations: int = 300
    rl_games: int = 40
    rl_lr: float = 0.05
    eval_seeds: int = 5
    eval_games: int = 100
    encoder_seed: int = 7
    seed: int = 0
    opponent: str = "heuristic"
    komi: float = 8.5

    def __post_init__(self):
        if self.opponent not in ("heuristic", "random"):
            raise ConfigError(f"unknown opponent {self.opponent!r}")
        if self.k < 1 or self.embed_dim < 1 or self.hidden < 1:
            raise ConfigError("k, embed_dim and hidden must be positive")
        for name in ("demo_games", "feature_games", "encoder_epochs", "bottleneck_epochs",
                     "rl_games", "eval_seeds", "eval_games"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.rl_generations < 0:
            raise ConfigError("rl_generations must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **overrides) -> "RunConfig":
        return from_mapping({**self.to_dict(), **{k: v for k, v in overrides.items() if v is not None}})


def _coerce(name: str, typ, value):
    if isinstance(value, str):
        value = value.strip()
        try:
            if typ is int:
                return int(value)
            if typ is float:
                return float(value)
        except ValueError:
            raise ConfigError(f"{name}: expected {typ.__name__}, got {value!r}") from None
        return value
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, typ) or isinstance(value, bool):
        raise ConfigError(f"{name}: expected {typ.__name__}, got {value!r}")
    return value


_TYPES = {"int": int, "float": float, "str": str}


def from_mapping(values: dict) -> RunConfig:
    known = {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type for f in fields(RunConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**{k: _coerce(k, known[k], v) for k, v in values.items()})


def parse_config(text: str) -> RunConfig:
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if parser.sections() != ["run"]:
        raise ConfigError("config must hold a single [run] section")
    return from_mapping(dict(parser["run"]))


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())
