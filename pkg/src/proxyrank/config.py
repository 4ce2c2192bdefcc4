"""Run configuration: every paper-silent constant, with its default, lives here.

The config file is JSON with the same nesting as the dataclasses below.
Unknown keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .proxylib import DEFAULT_TRUNCATE_TOKENS, SignTable
from .ranking import CoefficientGrid, RankerSpec


class ConfigError(ValueError):
    """Invalid configuration file or overrides."""


def _check_keys(obj: Mapping[str, Any], cls, context: str) -> None:
    allowed = {f.name for f in fields(cls)}
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown config key(s) in {context}: {sorted(unknown)}")


@dataclass
class Sparse3Config:
    exponents: tuple[int, ...] = (-3, -2, -1, 0, 1, 2, 3)
    include_zero: bool = True

    def grid(self) -> CoefficientGrid:
        return CoefficientGrid(exponents=tuple(self.exponents), include_zero=self.include_zero)


@dataclass
class RankSvmConfig:
    regularization: float = 1.0
    kernel_width: float | None = None
    max_iter: int = 500
    tol: float = 1e-6


@dataclass
class CvprotocolConfig:
    k: int = 2
    fraction: float = 0.6
    seeds: tuple[int, ...] = tuple(range(20))
    ranker: str = "ranksvm_linear"


@dataclass
class FitProtocolConfig:
    split_fraction: float = 0.5
    # Checkpoints with step <= train_max_step form the fit window; when null,
    # everything but the last checkpoint does.
    train_max_step: float | None = None


@dataclass
class Config:
    truncate_tokens: int = DEFAULT_TRUNCATE_TOKENS
    signs: dict[str, int] = field(default_factory=dict)
    sparse3: Sparse3Config = field(default_factory=Sparse3Config)
    ranksvm: RankSvmConfig = field(default_factory=RankSvmConfig)
    cv: CvprotocolConfig = field(default_factory=CvprotocolConfig)
    fit: FitProtocolConfig = field(default_factory=FitProtocolConfig)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "Config":
        _check_keys(obj, cls, "config")
        config = cls()
        if "truncate_tokens" in obj:
            config.truncate_tokens = int(obj["truncate_tokens"])
            if config.truncate_tokens < 1:
                raise ConfigError("truncate_tokens must be >= 1")
        if "signs" in obj:
            signs = obj["signs"]
            if not isinstance(signs, dict):
                raise ConfigError("signs must be a map of core metric -> +1/-1")
            config.signs = {str(k): int(v) for k, v in signs.items()}
        for name, sub_cls in (("sparse3", Sparse3Config), ("ranksvm", RankSvmConfig),
                              ("cv", CvprotocolConfig), ("fit", FitProtocolConfig)):
            if name in obj:
                sub = obj[name]
                if not isinstance(sub, dict):
                    raise ConfigError(f"config section {name!r} must be an object")
                _check_keys(sub, sub_cls, name)
                kwargs = dict(sub)
                if name == "sparse3" and "exponents" in kwargs:
                    kwargs["exponents"] = tuple(int(e) for e in kwargs["exponents"])
                if name == "cv" and "seeds" in kwargs:
                    kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
                setattr(config, name, sub_cls(**kwargs))
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(obj)

    def validate(self) -> None:
        try:
            self.sign_table()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0.0 < self.cv.fraction <= 1.0:
            raise ConfigError("cv.fraction must be in (0, 1]")
        if not self.cv.seeds:
            raise ConfigError("cv.seeds must be non-empty")
        if not 0.0 < self.fit.split_fraction < 1.0:
            raise ConfigError("fit.split_fraction must be in (0, 1)")
        try:
            self.ranker_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sign_table(self) -> SignTable:
        return SignTable.with_overrides(self.signs)

    def ranker_spec(self) -> RankerSpec:
        return RankerSpec(
            variant=self.cv.ranker,
            regularization=self.ranksvm.regularization,
            kernel_width=self.ranksvm.kernel_width,
            grid=self.sparse3.grid(),
            max_iter=self.ranksvm.max_iter,
            tol=self.ranksvm.tol,
        )


def load_config(path: str | None) -> Config:
    return Config.from_file(path) if path else Config()
