"""
Experiment Configuration
Validated run parameters for every CLI command plus process-wide settings.

RESPONSIBILITIES:
1. ExperimentConfig: pydantic model of one run (group, chart, seed, radii, scales, ...)
2. Settings: CARNOT_GMT_* environment defaults via pydantic-settings
3. Config echo for provenance; the echo validates back to the same config
"""

from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from carnot_gmt.gmt import Estimator
from carnot_gmt.metric import LayerNorm

COMMANDS = ("group", "degree", "blowup", "measure", "dimension", "charset")


class Settings(BaseSettings):
    """Process-wide defaults; CLI flags override them"""
    model_config = SettingsConfigDict(env_prefix="CARNOT_GMT_", extra="ignore")

    log_level: str = Field(default="INFO", description="Root level of the carnot_gmt logger")
    threads: int = Field(default=1, ge=1, description="joblib worker cap")
    seed: int = Field(default=0, ge=0, description="Default random seed")
    float_tol: float = Field(default=1e-12, gt=0, description="Absolute tolerance for structure checks")
    rel_tol: float = Field(default=1e-8, gt=0, lt=1, description="Relative degree threshold")
    json_digits: int = Field(default=17, ge=1, le=17, description="Significant digits in JSON output")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


def parse_range(text: str) -> Tuple[float, float]:
    """'lo:hi' -> (lo, hi); either order, both positive and distinct"""
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ValueError(f"expected 'start:stop', got {text!r}")
    a, b = float(parts[0]), float(parts[1])
    if a <= 0 or b <= 0 or a == b:
        raise ValueError(f"range endpoints must be positive and distinct, got {text!r}")
    return a, b


class ExperimentConfig(BaseModel):
    """One CLI run; `model_dump_json()` is the provenance echo"""
    command: str = Field(..., description="Subcommand name")
    group: str = Field(default="heisenberg:1", min_length=1, description="Builtin name or group JSON path")
    chart: Optional[str] = Field(default=None, description="Builtin chart name or chart JSON path")
    seed: int = Field(default=0, ge=0, description="Seed for every stochastic step")
    radii: Optional[Tuple[float, float]] = Field(default=None, description="Log-spaced range 'start:stop'")
    radii_count: int = Field(default=8, ge=1, description="Number of radii in the range")
    scales: int = Field(default=8, ge=4, description="Number of covering scales")
    grid: Optional[int] = Field(default=None, ge=2, description="Grid points per parameter axis")
    tol: float = Field(default=1e-8, gt=0, lt=1, description="Relative degree threshold")
    audit_tol: float = Field(default=0.05, gt=0, description="Tolerance of convergence audits")
    threads: int = Field(default=1, ge=1, description="Worker cap")
    out: Optional[str] = Field(default=None, description="Output directory")
    weights: List[float] = Field(default_factory=list, description="Layer weights eps_j of the quasi-norm")
    layer_norm: LayerNorm = Field(default=LayerNorm.SUP, description="Norm on each layer")
    samples: int = Field(default=100000, ge=2, description="Monte Carlo sample count")
    estimator: Estimator = Field(default=Estimator.QUADRATURE, description="Integration rule")
    lam: Optional[str] = Field(default=None, description="lambda in (0, 1], rational string allowed")
    epsilon: Optional[float] = Field(default=None, gt=0, lt=1, description="epsilon of the covering experiment")
    p: Optional[int] = Field(default=None, ge=1, description="Grade for bound-only runs")
    D: Optional[int] = Field(default=None, ge=1, description="Projection degree (defaults to D(p))")
    t0: Optional[List[float]] = Field(default=None, description="Chart parameter of the blow-up point")
    metric: Optional[str] = Field(default=None, description="Constant SPD metric file")
    region: Optional[List[Tuple[float, float]]] = Field(default=None, description="Integration sub-box")
    mask: Optional[str] = Field(default=None, description="Named region mask")
    bound: bool = Field(default=False, description="charset: print the bound only")
    exact: bool = Field(default=False, description="degree: exact rational arithmetic")
    max_points: int = Field(default=50, ge=1, description="charset: characteristic points per experiment")
    points: Optional[str] = Field(default=None, description="dimension: point cloud CSV instead of a chart")

    @field_validator("command")
    @classmethod
    def _known_command(cls, v: str) -> str:
        if v not in COMMANDS:
            raise ValueError(f"unknown command {v!r}")
        return v

    @field_validator("radii", mode="before")
    @classmethod
    def _parse_radii(cls, v):
        if v is None or isinstance(v, (list, tuple)):
            return v
        return parse_range(v)

    @field_validator("group", "chart")
    @classmethod
    def _strip(cls, v: Optional[str]) -> Optional[str]:
        return v.strip() if isinstance(v, str) else v

    @field_validator("weights")
    @classmethod
    def _positive_weights(cls, v: List[float]) -> List[float]:
        if any(w <= 0 for w in v):
            raise ValueError(f"layer weights must be positive, got {v}")
        return v

    @model_validator(mode="after")
    def _chart_required(self) -> "ExperimentConfig":
        needs_chart = self.command in ("degree", "blowup", "measure") or (
            self.command == "dimension" and not self.points
        ) or (
            self.command == "charset" and not self.bound
        )
        if needs_chart and not self.chart:
            raise ValueError(f"command {self.command!r} needs --chart")
        if self.command == "charset" and self.bound and self.p is None and not self.chart:
            raise ValueError("charset --bound needs --p or --chart")
        return self

    def radius_list(self, default: Tuple[float, float]) -> List[float]:
        """Log-spaced, strictly decreasing radii"""
        a, b = self.radii or default
        hi, lo = max(a, b), min(a, b)
        return [float(v) for v in np.logspace(np.log10(hi), np.log10(lo), self.radii_count)]

    def scale_list(self, default: Tuple[float, float]) -> List[float]:
        """Log-spaced covering scales over the same range as radius_list, `scales` of them"""
        a, b = self.radii or default
        hi, lo = max(a, b), min(a, b)
        return [float(v) for v in np.logspace(np.log10(hi), np.log10(lo), self.scales)]
