"""
Run configuration.

Layering, lowest to highest: built-in defaults, VIS_* environment variables
(optionally loaded from a .env file), CLI flags. No variable is required.
The default seed is a fixed constant so default runs are reproducible.
"""

import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Mapping, Optional

from core.errors import ConfigError
from core.resample import DEFAULT_ALPHA, DEFAULT_B, DEFAULT_SEED
from core.stability import StabilityThresholds

logger = logging.getLogger(__name__)

ENV_PREFIX = "VIS_"


def _bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _list(raw: str) -> List[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


@dataclass
class RunConfig:
    command: str = "report"
    inputs: List[str] = field(default_factory=list)
    out_dir: str = "out"
    seed: int = DEFAULT_SEED
    B: int = DEFAULT_B
    alpha: float = DEFAULT_ALPHA
    target_width_share: float = 0.05
    target_width_prevalence: float = 0.15
    sufficiency: float = 0.25
    stability: float = 0.9
    drift_alpha: float = 0.05
    practical_delta: float = 0.02
    min_fraction: float = 1.0
    job_order: Optional[str] = None
    checksums: Optional[str] = None
    preset: str = "searchgpt-like"
    regime: str = "daily"
    metric: str = "share"
    convergence_order: str = "prefix"
    draws: int = 1
    include_duplicates: bool = False

    @classmethod
    def from_env(cls, env: Optional[Mapping[str, str]] = None, **overrides) -> "RunConfig":
        """Build from VIS_<FIELD> variables, then apply non-None overrides."""
        if env is None:
            try:
                from dotenv import load_dotenv
                load_dotenv()
            except ImportError:
                pass
            env = os.environ

        values: Dict[str, object] = {}
        problems: Dict[str, str] = {}
        for f in fields(cls):
            name = ENV_PREFIX + f.name.upper()
            raw = env.get(name)
            if raw is None:
                continue
            try:
                values[f.name] = _cast(f.name, raw)
            except ValueError as e:
                problems[name] = str(e)
        if problems:
            raise ConfigError(problems)

        values.update({k: v for k, v in overrides.items() if v is not None})
        config = cls(**values)
        config.validate()
        return config

    def validate(self) -> None:
        problems: Dict[str, str] = {}
        for name in ("alpha", "drift_alpha"):
            if not 0 < getattr(self, name) < 1:
                problems[name] = "must be in (0, 1)"
        if self.B < 100:
            problems["B"] = "must be >= 100"
        if self.seed < 0:
            problems["seed"] = "must be >= 0"
        if not 0 < self.min_fraction <= 1:
            problems["min_fraction"] = "must be in (0, 1]"
        if self.metric not in ("share", "prevalence"):
            problems["metric"] = "must be 'share' or 'prevalence'"
        if self.convergence_order not in ("prefix", "random"):
            problems["convergence_order"] = "must be 'prefix' or 'random'"
        if self.draws < 1:
            problems["draws"] = "must be >= 1"
        for name in ("target_width_share", "target_width_prevalence", "sufficiency", "practical_delta"):
            if getattr(self, name) < 0:
                problems[name] = "must be >= 0"
        if problems:
            raise ConfigError(problems)

    @property
    def thresholds(self) -> StabilityThresholds:
        return StabilityThresholds(sufficiency=self.sufficiency, stability=self.stability)

    def target_width(self, metric: str) -> float:
        return self.target_width_share if metric == "share" else self.target_width_prevalence

    def echo(self) -> dict:
        """Parameters that shape results (paths excluded), for provenance."""
        out = asdict(self)
        for key in ("command", "inputs", "out_dir", "job_order", "checksums"):
            out.pop(key)
        return out


_CASTS = {int: int, float: float, bool: _bool}


def _cast(name: str, raw: str):
    if name == "inputs":
        return _list(raw)
    kind = RunConfig.__dataclass_fields__[name].type
    if kind in _CASTS:
        return _CASTS[kind](raw.strip())
    return raw.strip() or None
