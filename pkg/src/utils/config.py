"""
Experiment configuration: a sectioned `key = value` text format validated by pydantic models.

    [experiment]
    policy = correlation
    alpha = 0.1
    seed = 7

    [scenario]
    generator = replicated-subgraph
    copies = 100
    strong_corr = 0.5
    weak_corr = 0.1
"""

from __future__ import annotations

import logging
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from services.engine import DetectionConfig
from services.errors import ConfigurationError
from services.policies.factory import POLICY_NAMES

logger = logging.getLogger(__name__)

GENERATOR_PARAMS = {
    "nearest-neighbor": ("n", "M", "a"),
    "replicated-subgraph": ("copies", "strong_corr", "weak_corr"),
    "cluster": ("n", "p", "sigma_A"),
    "two-cluster": ("n", "p", "a_corr", "b_corr"),
    "random-tree": ("n", "corr"),
}

SECTIONS = ("experiment", "scenario", "sweep", "compare")
LIST_KEYS = {("sweep", "alphas"), ("sweep", "values"), ("compare", "policies")}


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    generator: Optional[str] = None
    model0: Optional[str] = None
    model1: Optional[str] = None
    n: Optional[int] = Field(default=None, ge=1)
    M: Optional[float] = None
    a: Optional[float] = None
    copies: Optional[int] = Field(default=None, ge=1)
    strong_corr: Optional[float] = None
    weak_corr: Optional[float] = None
    p: Optional[int] = Field(default=None, ge=1)
    sigma_A: Optional[float] = None
    a_corr: Optional[float] = None
    b_corr: Optional[float] = None
    corr: Optional[float] = None

    @model_validator(mode="after")
    def check_source(self):
        if self.generator is None:
            if self.model0 is None or self.model1 is None:
                raise ValueError("scenario needs either 'generator' or both 'model0' and 'model1'")
            return self
        if self.generator not in GENERATOR_PARAMS:
            raise ValueError(
                f"generator: unknown generator '{self.generator}', expected one of {', '.join(GENERATOR_PARAMS)}"
            )
        missing = [key for key in GENERATOR_PARAMS[self.generator] if getattr(self, key) is None]
        if missing:
            raise ValueError(f"generator '{self.generator}' needs {', '.join(missing)}")
        return self

    def parameters(self) -> dict:
        return {key: getattr(self, key) for key in GENERATOR_PARAMS.get(self.generator, ())}


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    alphas: tuple[float, ...] = ()
    parameter: Optional[str] = None
    values: tuple[float, ...] = ()

    @field_validator("alphas")
    @classmethod
    def check_alphas(cls, alphas):
        for value in alphas:
            if not 0 < value < 1:
                raise ValueError(f"every budget must lie in (0, 1), got {value}")
        return alphas

    @model_validator(mode="after")
    def check_parameter(self):
        if (self.parameter is None) != (not self.values):
            raise ValueError("'parameter' and 'values' must be given together")
        return self


class CompareSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    policies: tuple[str, ...] = ("correlation", "chernoff", "random")
    np_sample_size: Optional[int] = Field(default=None, ge=1)
    np_calibration_trials: int = Field(default=1000, ge=1)

    @field_validator("policies")
    @classmethod
    def check_policies(cls, policies):
        for name in policies:
            if name not in POLICY_NAMES:
                raise ValueError(f"unknown policy '{name}', expected one of {', '.join(POLICY_NAMES)}")
        return policies


class ExperimentConfig(BaseModel):
    """
    Everything one CLI run needs. `seed` has no default: every random stream derives from it.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    policy: str = "correlation"
    alpha: float = Field(default=0.1, gt=0, lt=1)
    beta: float = Field(default=0.1, gt=0, lt=1)
    trials: int = Field(default=1000, ge=1)
    seed: int
    max_subset_size: int = Field(default=4, ge=1)
    workers: Optional[int] = Field(default=None, ge=1, description="falls back to QD_WORKERS, then 1")
    prior0: float = Field(default=0.5, ge=0, le=1)
    output: Optional[str] = None
    scenario: ScenarioSpec
    sweep: Optional[SweepSpec] = None
    compare: Optional[CompareSpec] = None

    @field_validator("policy")
    @classmethod
    def check_policy(cls, policy):
        if policy not in POLICY_NAMES:
            raise ValueError(f"unknown policy '{policy}', expected one of {', '.join(POLICY_NAMES)}")
        return policy

    def detection_config(self, alpha: float | None = None, beta: float | None = None) -> DetectionConfig:
        return DetectionConfig(
            alpha=self.alpha if alpha is None else alpha,
            beta=self.beta if beta is None else beta,
            max_subset_size=self.max_subset_size,
        )


def _read_sections(text: str, source: str) -> tuple[dict, dict, list]:
    data, lines, errors = {}, {}, []
    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                errors.append(f"{source}:{line_no}: unknown section [{section}]")
                section = None
                continue
            data.setdefault(section, {})
            continue
        if "=" not in line:
            errors.append(f"{source}:{line_no}: expected 'key = value', got '{raw.strip()}'")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if section is None:
            errors.append(f"{source}:{line_no}: {key}: key outside a known section")
            continue
        if key in data[section]:
            errors.append(f"{source}:{line_no}: {section}.{key}: duplicate key")
            continue
        if (section, key) in LIST_KEYS:
            value = [item.strip() for item in value.split(",") if item.strip()]
        data[section][key] = value
        lines[(section, key)] = line_no
    return data, lines, errors


def _describe(error: dict, lines: dict, source: str) -> str:
    loc = [str(part) for part in error["loc"]]
    if loc and loc[0] in ("scenario", "sweep", "compare") and len(loc) > 1:
        section, key = loc[0], loc[1]
    elif loc and loc[0] not in ("scenario", "sweep", "compare"):
        section, key = "experiment", loc[0]
    else:
        section, key = (loc[0] if loc else "experiment"), None
    message = error["msg"].removeprefix("Value error, ")
    where = f"{source}:{lines[(section, key)]}: " if (section, key) in lines else f"{source}: "
    name = f"{section}.{key}" if key else section
    return f"{where}{name}: {message}"


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> ExperimentConfig:
    """
    Parse and validate an experiment config. `overrides` are [experiment] values (for example
    from CLI flags) that replace what the text says. Every problem is reported, not only the first.
    """
    data, lines, errors = _read_sections(text, source)
    merged = dict(data.get("experiment", {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
            lines.pop(("experiment", key), None)
    for section in ("scenario", "sweep", "compare"):
        if section in data:
            merged[section] = data[section]

    try:
        config = ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        errors.extend(_describe(error, lines, source) for error in e.errors())
        config = None
    if errors:
        raise ConfigurationError(errors)
    logger.debug(f"Parsed config from {source}")
    return config


def _format(value) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical text form; parse_config(serialize_config(c)) == c."""
    dumped = config.model_dump(exclude_none=True)
    out = ["[experiment]"]
    for key, value in dumped.items():
        if key not in ("scenario", "sweep", "compare"):
            out.append(f"{key} = {_format(value)}")
    for section in ("scenario", "sweep", "compare"):
        if section not in dumped:
            continue
        out.append("")
        out.append(f"[{section}]")
        for key, value in dumped[section].items():
            if isinstance(value, (list, tuple)) and not value:
                continue
            out.append(f"{key} = {_format(value)}")
    return "\n".join(out) + "\n"


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as e:
        raise ConfigurationError(f"--config: cannot read {path}: {e.strerror}")
    return parse_config(text, source=path, overrides=overrides)
