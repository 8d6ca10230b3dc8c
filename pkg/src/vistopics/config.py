"""Pipeline configuration: one TOML file with a section per stage.

CLI flags override the file; environment variables are reserved for
secrets and tool paths (VISTOPICS_API_KEY, VISTOPICS_DECODER). Unknown
sections or keys are rejected so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .captioning import CaptionerConfig
from .dedup import DedupConfig
from .extract import DecoderConfig, ExtractionConfig
from .preprocess import PreprocessConfig


class ConfigError(Exception):
    """Invalid configuration; message names the offending key."""


@dataclass
class LdaOptions:
    k: int | None = None  # fixed topic count; None means use the sweep selection
    alpha: float | None = None  # None: sweep selection, else 2/k
    eta: float = 0.01
    iters: int = 1000
    burn_in: int = 500
    thin: int = 10
    restarts: int = 1
    folds: int = 5
    k_grid: list[int] = field(default_factory=lambda: list(range(5, 101, 5)))
    alpha_multipliers: list[float] = field(default_factory=lambda: [25.0, 10.0, 5.0, 2.0, 1.0])
    foldin_iters: int = 100
    foldin_burn: int = 50


@dataclass
class ValidationOptions:
    n_items: int = 105
    pool_depth: int = 10


@dataclass
class ServiceOptions:
    bind: str = "127.0.0.1:8000"
    ui_dir: str | None = None


@dataclass
class PipelineConfig:
    input_dir: str = ""
    run_dir: str = "run"
    seed: int = 0
    jobs: int | None = None
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    captioner: CaptionerConfig = field(default_factory=CaptionerConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    lda: LdaOptions = field(default_factory=LdaOptions)
    validation: ValidationOptions = field(default_factory=ValidationOptions)
    service: ServiceOptions = field(default_factory=ServiceOptions)

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


_SECTION_TYPES = {
    "extraction": ExtractionConfig,
    "decoder": DecoderConfig,
    "dedup": DedupConfig,
    "captioner": CaptionerConfig,
    "preprocess": PreprocessConfig,
    "lda": LdaOptions,
    "validation": ValidationOptions,
    "service": ServiceOptions,
}
_TOP_LEVEL_KEYS = {"input_dir", "run_dir", "seed", "jobs"}


def _build_section(cls, table: dict, section: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in section [{section}]")
        if known[key].type in ("tuple[str, ...]",) and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in section [{section}]: {exc}")


def load_config(path: Path) -> PipelineConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}")
    return parse_config(raw)


def parse_config(raw: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    for key, value in raw.items():
        if key in _TOP_LEVEL_KEYS:
            setattr(cfg, key, value)
        elif key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"'{key}' must be a section, not a value")
            setattr(cfg, key, _build_section(_SECTION_TYPES[key], value, key))
        else:
            raise ConfigError(f"unknown key '{key}' at top level")
    return cfg
