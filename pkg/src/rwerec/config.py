"""Experiment configuration: flat TOML key/value files plus CLI overrides."""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field

import tomli

from .data import DataError
from .ideology import FitConfig
from .split import SplitSpec

ALGORITHMS = ("p3", "rp3b", "itemknn", "rwe-d", "rwe-b")


class ConfigError(ValueError):
    """Invalid experiment configuration (a usage error)."""


@dataclass
class ExperimentConfig:
    dataset: str = ""
    format: str = "tsv-edges"
    min_user_degree: int = 1
    min_item_degree: int = 1
    algorithm: str = "p3"
    betas: list = field(default_factory=lambda: [0.5])
    nus: list = field(default_factory=lambda: [1.0])
    epsilon: float = 0.9
    neighbors: list = field(default_factory=lambda: [100])
    walk_length: int = 3
    iterations: int = 10
    test_fraction: float = 0.3
    min_interactions: int = 4
    repetitions: int = 3
    seed: int = 0
    positions: str = ""
    item_kind: str = "content"
    elite_edges: str = ""
    content_edges: str = ""
    ideology_lambda: float = 0.1
    ideology_mu: float = 1.0
    ideology_learning_rate: float = 0.05
    ideology_max_epochs: int = 500
    ideology_tolerance: float = 1e-6
    list_length: int = 20
    block_size: int = 256
    jobs: int = 1
    outdir: str = "runs"

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.test_fraction, self.min_interactions, self.repetitions, self.seed)

    def fit_config(self) -> FitConfig:
        return FitConfig(lam=self.ideology_lambda, mu=self.ideology_mu,
                         learning_rate=self.ideology_learning_rate, max_epochs=self.ideology_max_epochs,
                         tolerance=self.ideology_tolerance, seed=self.seed)

    def grid(self) -> list[dict]:
        """Hyperparameter points for the selected algorithm, in a fixed order."""
        if self.algorithm == "p3":
            return [{}]
        if self.algorithm == "rp3b":
            return [{"beta": float(b)} for b in self.betas]
        if self.algorithm == "itemknn":
            return [{"neighbors": int(k)} for k in self.neighbors]
        if self.algorithm == "rwe-d":
            return [{"beta": float(b), "nu": float(n)} for b, n in itertools.product(self.betas, self.nus)]
        return [{"nu": float(n), "epsilon": float(self.epsilon)} for n in self.nus]

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not self.dataset:
            raise ConfigError("dataset path is required")
        if not self.grid():
            raise ConfigError(f"empty hyperparameter grid for {self.algorithm}")
        if self.algorithm == "rwe-b" and not (self.positions or self.elite_edges or self.content_edges):
            raise ConfigError("rwe-b needs a positions file or endorsement edges to fit positions")
        if self.walk_length % 2 == 0:
            raise ConfigError("walk_length must be odd")
        if self.item_kind not in ("content", "elite"):
            raise ConfigError("item_kind must be 'content' or 'elite'")


def gridpoint_name(point: dict) -> str:
    if not point:
        return "default"
    return "_".join(f"{k}={v:g}" for k, v in sorted(point.items()))


def _coerce(name: str, value, default):
    if isinstance(default, list):
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split()]
        if not isinstance(value, list):
            value = [value]
        return [float(v) if name != "neighbors" else int(v) for v in value]
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a flat key/value TOML file, then apply non-``None`` overrides."""
    values: dict = {}
    if path:
        try:
            with open(path, "rb") as fh:
                values = tomli.load(fh)
        except FileNotFoundError:
            raise DataError(f"config file {path} not found") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        nested = [k for k, v in values.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"{path}: nested tables are not supported ({', '.join(nested)})")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = ExperimentConfig()
    known = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    for key, value in values.items():
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(cfg, name, _coerce(name, value, getattr(cfg, name)))
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    return cfg
