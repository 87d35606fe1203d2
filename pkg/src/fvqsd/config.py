"""Declarative configuration documents (YAML or JSON).

One document drives everything: the model family with explicit numeric
parameters, the oracle truncation policy, an optional particle-run or
experiment section, and runtime knobs. Unknown keys are rejected at any
depth; model parameters never carry hidden defaults (runtime defaults are
documented on :class:`RuntimeSection`).

The same pydantic models serve as request bodies of the HTTP service, so
the CLI and the service accept identical documents.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError


class StrictSection(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------------------
# model families


class GaltonWatsonSection(StrictSection):
    family: Literal["galton-watson"]
    offspring: dict[int, float]
    alpha: float


class RateSpec(StrictSection):
    """Coordinate rate r_i(x): constant, coeff * x_i^exponent, or the
    oscillating form coeff * |sin(x_i pi/2)| * x_i + offset."""

    kind: Literal["constant", "coordinate-power", "oscillating"]
    coeff: float
    exponent: Optional[float] = None
    offset: Optional[float] = None

    @model_validator(mode="after")
    def _fields_match_kind(self):
        if self.kind == "coordinate-power" and self.exponent is None:
            raise ValueError("coordinate-power rates need an exponent")
        if self.kind == "oscillating" and self.offset is None:
            raise ValueError("oscillating rates need an offset")
        if self.kind == "constant" and (self.exponent is not None or self.offset is not None):
            raise ValueError("constant rates take only a coeff")
        return self


class BirthDeathSection(StrictSection):
    family: Literal["birth-death"]
    dimension: int = Field(ge=1)
    birth: RateSpec
    death: RateSpec
    absorption_override: Optional[float] = None  # d_i at the unit vectors, when distinct


class OffspringEntry(StrictSection):
    n: list[int]
    p: float


class MultiTypeGWSection(StrictSection):
    family: Literal["multitype-galton-watson"]
    rates: list[float]
    offspring: list[list[OffspringEntry]]
    alpha: float

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.rates) != len(self.offspring):
            raise ValueError("rates and offspring must list one entry per type")
        return self


class DiffusionSection(StrictSection):
    family: Literal["diffusion"]
    dimension: int = Field(ge=1)
    drift_coeff: float  # b(x) = drift_coeff * x
    dispersion: float  # sigma = dispersion * identity
    killing_rate: float  # constant kappa
    beta: float
    gamma_ell: float
    rho: float
    step_size: float = Field(gt=0)


ModelSection = Annotated[
    Union[GaltonWatsonSection, BirthDeathSection, MultiTypeGWSection, DiffusionSection],
    Field(discriminator="family"),
]


# ---------------------------------------------------------------------------
# oracle, particle runs, experiments


class OracleSection(StrictSection):
    start_size: int = Field(default=50, ge=1)
    growth: float = Field(default=2.0, gt=1.0)
    lambda_tol: float = Field(default=1e-4, gt=0)
    residual_tol: float = Field(default=1e-10, gt=0)
    fixed_size: Optional[int] = Field(default=None, ge=1)


class FvSection(StrictSection):
    n: int = Field(ge=2)
    horizon: float = Field(gt=0)
    observation_times: list[float]
    initial: Optional[list[float]] = None  # defaults to the model's reference state


class TestFunctionSection(StrictSection):
    kind: Literal["indicator-leq", "identity", "constant"]
    threshold: Optional[float] = None
    value: Optional[float] = None

    @model_validator(mode="after")
    def _fields_match_kind(self):
        if self.kind == "indicator-leq" and self.threshold is None:
            raise ValueError("indicator-leq needs a threshold")
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant needs a value")
        return self


class DecayExperiment(StrictSection):
    kind: Literal["conditional-decay"]
    times: list[float]
    mode: Literal["oracle", "mc"] = "oracle"
    replicas: int = Field(default=0, ge=0)


class MartingaleExperiment(StrictSection):
    kind: Literal["martingale"]
    x0: list[int]
    times: list[float]
    replicas: int = Field(ge=1)


class MomentBoundExperiment(StrictSection):
    kind: Literal["moment-bound"]
    n: int = Field(ge=2)
    horizon: float = Field(gt=0)
    burn_in: Optional[float] = None  # defaults to 10 / gamma


class QsdConvergenceExperiment(StrictSection):
    kind: Literal["qsd-convergence"]
    n_grid: list[int]
    samples_per_n: int = Field(ge=1)
    f: TestFunctionSection
    burn_in: Optional[float] = None
    sample_gap: Optional[float] = None


class ChaosScalingExperiment(StrictSection):
    kind: Literal["chaos-scaling"]
    n_grid: list[int]
    times: list[float]
    replicas: int = Field(ge=1)
    f: TestFunctionSection


ExperimentSection = Annotated[
    Union[
        DecayExperiment,
        MartingaleExperiment,
        MomentBoundExperiment,
        QsdConvergenceExperiment,
        ChaosScalingExperiment,
    ],
    Field(discriminator="kind"),
]


class RuntimeSection(StrictSection):
    """Runtime defaults: seed 0, single thread, ./results output dir."""

    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)
    out_dir: str = "results"


class ConfigDocument(StrictSection):
    model: ModelSection
    oracle: OracleSection = OracleSection()
    fv: Optional[FvSection] = None
    experiment: Optional[ExperimentSection] = None
    runtime: RuntimeSection = RuntimeSection()


def _format_validation_error(err: ValidationError) -> str:
    lines = []
    for item in err.errors():
        loc = ".".join(str(p) for p in item["loc"]) or "<root>"
        lines.append(f"  at {loc}: {item['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def validate_config(data: dict) -> ConfigDocument:
    try:
        return ConfigDocument.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_validation_error(err)) from err


def load_config(path) -> ConfigDocument:
    """Parse a YAML or JSON document and validate it."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not contain a key-value document")
    return validate_config(data)
