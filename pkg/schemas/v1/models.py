# SPDX-License-Identifier: GPL-3.0-only

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from embedding import Coordinate
from exceptions import DataError
from surrogate import DEFAULT_THETA, DynamicsParams
from timeseries import month_index
from utils import default_threads


class StrictModel(BaseModel):
    """Base for config sections; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


def _check_month(value: Optional[str]) -> Optional[str]:
    if value is not None:
        try:
            month_index(value)
        except DataError as error:
            raise ValueError(error.message) from None
    return value


class CoordinateSpec(StrictModel):
    """A pool coordinate given by ``lag`` (from issue time) or ``offset`` (from target)."""

    variable: str
    lag: Optional[int] = Field(default=None, le=0)
    offset: Optional[int] = Field(default=None, lt=0)

    @model_validator(mode="after")
    def check_one_position(self):
        if (self.lag is None) == (self.offset is None):
            raise ValueError("Give exactly one of 'lag' or 'offset'")
        return self

    def to_coordinate(self, lead: int) -> Coordinate:
        if self.lag is not None:
            return Coordinate(self.variable, self.lag)
        return Coordinate.from_offset(self.variable, self.offset, lead)


class SurrogateSpec(StrictModel):
    """Surrogate model family and "real" system."""

    system: Literal["lorenz63", "lorenz96"] = "lorenz63"
    theta0: Optional[List[float]] = None
    radius: float = Field(default=0.01, ge=0)
    n_runs: int = Field(default=5, ge=1)
    real_theta: Optional[List[float]] = None
    dt: float = Field(default=0.01, gt=0)
    burn_in: int = Field(default=1000, ge=0)
    aggregate: int = Field(default=25, ge=1)
    months: int = Field(default=636, ge=2)
    run_months: Optional[int] = Field(default=None, ge=2)
    obs_noise_sd: float = Field(default=0.0, ge=0)
    start: str = "1960-01"
    x0: Optional[List[float]] = None
    noise_runs: bool = False

    @field_validator("start")
    @classmethod
    def check_start(cls, value: str) -> str:
        return _check_month(value)

    @model_validator(mode="after")
    def check_theta(self):
        expected = len(DEFAULT_THETA[self.system])
        for name in ("theta0", "real_theta"):
            value = getattr(self, name)
            if value is not None and len(value) != expected:
                raise ValueError(f"'{name}' needs {expected} values for {self.system}")
        return self

    def _params(self, theta: List[float], months: int) -> DynamicsParams:
        return DynamicsParams.for_months(
            months,
            system=self.system,
            theta=tuple(theta),
            dt=self.dt,
            burn_in=self.burn_in,
            aggregate=self.aggregate,
        )

    def base_params(self) -> DynamicsParams:
        """Centre of the model family; runs last ``run_months`` when set."""
        theta = self.theta0 or DEFAULT_THETA[self.system]
        return self._params(theta, self.run_months or self.months)

    def real_params(self) -> DynamicsParams:
        theta = self.real_theta or self.theta0 or DEFAULT_THETA[self.system]
        return self._params(theta, self.months)


class CsvSource(StrictModel):
    path: str
    columns: Optional[Dict[str, str]] = None


class DataSpec(StrictModel):
    """Either a surrogate experiment or CSV panels."""

    surrogate: Optional[SurrogateSpec] = None
    model_runs: List[CsvSource] = Field(default_factory=list)
    real: Optional[CsvSource] = None

    @model_validator(mode="after")
    def check_source(self):
        if (self.surrogate is None) == (self.real is None):
            raise ValueError("Give either 'surrogate' or a 'real' CSV source")
        if self.surrogate is not None and self.model_runs:
            raise ValueError("'model_runs' CSVs cannot be combined with 'surrogate'")
        return self


class EmbeddingSpec(StrictModel):
    pool: List[CoordinateSpec] = Field(min_length=1)
    target: str
    lead: int = Field(ge=1)
    dim: int = Field(default=3, ge=1)
    n_views: int = Field(default=100, ge=1)
    k: Optional[int] = Field(default=None, ge=2)
    standardize: bool = True
    neighbor_index: Literal["brute", "kdtree"] = "brute"

    @model_validator(mode="after")
    def check_sizes(self):
        if self.dim > len(self.pool):
            raise ValueError(f"dim {self.dim} exceeds the pool size {len(self.pool)}")
        if self.k is not None and self.k < self.dim + 2:
            raise ValueError(f"k must be at least dim + 2 = {self.dim + 2}")
        for spec in self.pool:
            if spec.offset is not None and spec.offset > -self.lead:
                raise ValueError(
                    f"offset {spec.offset} of '{spec.variable}' must be at most -lead ({-self.lead})"
                )
        if len(set(self.coordinates())) != len(self.pool):
            raise ValueError("pool contains duplicate coordinates")
        return self

    @property
    def neighbors(self) -> int:
        return self.k if self.k is not None else 2 * (self.dim + 1)

    def coordinates(self) -> List[Coordinate]:
        return [spec.to_coordinate(self.lead) for spec in self.pool]

    @property
    def variables(self) -> List[str]:
        names = [spec.variable for spec in self.pool] + [self.target]
        return list(dict.fromkeys(names))


class SpanSpec(StrictModel):
    """Test span as "last N months" or as the last library month."""

    last_months: Optional[int] = Field(default=55, ge=1)
    origin: Optional[str] = None

    @field_validator("origin")
    @classmethod
    def check_origin(cls, value: Optional[str]) -> Optional[str]:
        return _check_month(value)

    @model_validator(mode="after")
    def check_one_span(self):
        if self.origin is not None:
            if "last_months" in self.model_fields_set:
                raise ValueError("Give only one of 'last_months' or 'origin'")
            self.last_months = None
        if self.last_months is None and self.origin is None:
            raise ValueError("Give 'last_months' or 'origin'")
        return self

    def months_after_origin(self, panel_end: int) -> int:
        if self.origin is None:
            return self.last_months
        return panel_end - month_index(self.origin)


class InferenceSpec(StrictModel):
    location_test: Literal["rank_sum", "t_test"] = "rank_sum"
    alpha: float = Field(default=0.1, gt=0, lt=1)
    fdr_q: float = Field(default=0.05, gt=0, lt=1)
    augmentation: bool = True
    projection_lags: List[int] = Field(default_factory=lambda: [0])
    ks_bootstrap: int = Field(default=999, ge=1)
    mixture_bootstrap: int = Field(default=199, ge=1)
    mixture_components: int = Field(default=2, ge=2, le=3)
    mixture_restarts: int = Field(default=10, ge=1)
    calibration_months: int = Field(default=0, ge=0)
    density_times: Optional[int] = Field(default=None, ge=0)

    @field_validator("projection_lags")
    @classmethod
    def check_lags(cls, value: List[int]) -> List[int]:
        if not value or any(lag > 0 for lag in value):
            raise ValueError("projection lags must be a non-empty list of values <= 0")
        return value


class RunConfig(StrictModel):
    """One archivable experiment."""

    data: DataSpec
    embedding: EmbeddingSpec
    test_span: SpanSpec = Field(default_factory=SpanSpec)
    inference: InferenceSpec = Field(default_factory=InferenceSpec)
    seed: int = Field(default=0, ge=0)
    output_dir: str = "out"
    threads: int = Field(default_factory=default_threads, ge=1)


class CommandResult(BaseModel):
    """What a subcommand reports back to the entry point."""

    success: bool
    message: str
    files: List[str] = Field(default_factory=list)
