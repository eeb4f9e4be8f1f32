import math
from typing import Any, Dict, List, Literal, Optional, TypedDict

import numpy as np
from pydantic import (BaseModel, ConfigDict, Field, field_validator,
                      model_validator)

from config import DEFAULT_NUMERICS, DEFAULT_SIMULATION


StatName = Literal["pdf", "cdf", "lcr", "afd"]


class SeriesControl(BaseModel):
    """Accuracy controls shared by the hypergeometric series."""
    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(default=DEFAULT_NUMERICS.series_rel_tol, gt=0.0,
                           lt=1.0,
                           description="Relative tolerance of the series.")
    max_terms: int = Field(default=DEFAULT_NUMERICS.series_max_terms, ge=1,
                           description="Cap on the number of series terms.")


class ChannelParams(BaseModel):
    """The (kappa, mu, m, r_bar, rho) tuple defining a shadowed channel."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kappa: float = Field(ge=0.0, description=(
        "Ratio of total dominant-component power to scattered power."))
    mu: float = Field(gt=0.0, description="Number of multipath clusters.")
    m: float = Field(gt=0.0, description="Nakagami shadowing shape.")
    r_bar: float = Field(default=1.0, gt=0.0, description=(
        "rms envelope level, linear amplitude units."))
    rho: float = Field(default=0.0, gt=-1.0, lt=1.0, description=(
        "Correlation between the multipath and shadowed-dominant slopes."))

    @model_validator(mode="after")
    def _check_slope_terms(self) -> "ChannelParams":
        if self.kappa == 0.0 and self.rho != 0.0:
            raise ValueError(
                "rho = 0 required when kappa = 0 violated: "
                f"got rho={self.rho}"
            )
        if self.lcr_denominator() <= 0.0:
            raise ValueError(
                "sqrt(m)(1-rho^2) + 4 rho sqrt(mu kappa) > 0 violated: "
                f"kappa={self.kappa}, mu={self.mu}, m={self.m}, "
                f"rho={self.rho}"
            )
        return self

    def lcr_denominator(self, shadow_ratio: float = 1.0) -> float:
        """sqrt(m)(1 - rho^2) + 4 rho eta sqrt(mu kappa)."""
        return (math.sqrt(self.m) * (1.0 - self.rho ** 2)
                + 4.0 * self.rho * shadow_ratio
                * math.sqrt(self.mu * self.kappa))

    @property
    def sigma2(self) -> float:
        """Per-quadrature scattered power of one cluster."""
        return self.r_bar ** 2 / (2.0 * self.mu * (1.0 + self.kappa))

    @property
    def omega(self) -> float:
        """Mean power of the resultant dominant component."""
        return self.kappa * self.r_bar ** 2 / (1.0 + self.kappa)

    @property
    def d2(self) -> float:
        return 2.0 * self.mu * self.sigma2 * self.kappa

    def replace(self, **changes: float) -> "ChannelParams":
        return ChannelParams(**{**self.model_dump(), **changes})


class DopplerParams(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    f_m: float = Field(gt=0.0, description="Maximum Doppler frequency, Hz.")
    shadow_f_m: Optional[float] = Field(default=None, gt=0.0, description=(
        "Doppler frequency behind the shadow-slope variance; defaults to "
        "f_m."))

    @property
    def shadow_ratio(self) -> float:
        if self.shadow_f_m is None:
            return 1.0
        return self.shadow_f_m / self.f_m


class CurveFailure(BaseModel):
    index: int
    threshold_db: float
    reason: str


class StatCurve(BaseModel):
    """A (threshold, value) table of one statistic over a dB grid."""
    stat: StatName
    thresholds_db: List[float]
    values: List[Optional[float]] = Field(description=(
        "Statistic per threshold; None where evaluation failed."))
    failures: List[CurveFailure] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_curve(self) -> "StatCurve":
        if len(self.values) != len(self.thresholds_db):
            raise ValueError("values and thresholds_db differ in length")
        grid = np.asarray(self.thresholds_db, dtype=float)
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("thresholds strictly increasing violated")
        present = [v for v in self.values if v is not None]
        if self.stat == "cdf":
            if any(v < 0.0 or v > 1.0 for v in present):
                raise ValueError("CDF values within [0, 1] violated")
            if any(b < a - 1e-12 for a, b in zip(present, present[1:])):
                raise ValueError("CDF values nondecreasing violated")
        elif self.stat in ("lcr", "afd"):
            if any(v < 0.0 for v in present):
                raise ValueError(f"{self.stat} values nonnegative violated")
        return self


class SimConfig(BaseModel):
    """Everything `generate` needs to synthesize a reproducible trace."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    params: ChannelParams
    doppler: DopplerParams
    shadow_doppler_hz: float = Field(gt=0.0, description=(
        "Bandwidth of the shadowing process; defaults to f_m/10."))
    sample_rate_hz: float = Field(gt=0.0)
    duration_s: float = Field(gt=0.0)
    seed: int = Field(ge=0, lt=2 ** 64)
    n_sinusoids: int = Field(default=DEFAULT_SIMULATION.n_sinusoids, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _default_shadow_bandwidth(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("shadow_doppler_hz") is None:
            doppler = data.get("doppler")
            f_m = (doppler.get("f_m") if isinstance(doppler, dict)
                   else getattr(doppler, "f_m", None))
            if f_m is not None:
                data = {**data, "shadow_doppler_hz":
                        DEFAULT_SIMULATION.shadow_fraction * f_m}
        return data

    @model_validator(mode="after")
    def _check_sampling(self) -> "SimConfig":
        f_m = self.doppler.f_m
        if self.params.rho != 0.0:
            raise ValueError(
                f"params.rho = 0 violated: got rho={self.params.rho}; "
                "correlated slopes cannot be simulated"
            )
        if self.sample_rate_hz < DEFAULT_SIMULATION.min_oversampling * f_m:
            raise ValueError(
                "sample_rate_hz >= 16*f_m violated: "
                f"sample_rate_hz={self.sample_rate_hz}, f_m={f_m}"
            )
        shadow_cap = DEFAULT_SIMULATION.max_shadow_fraction * f_m
        if self.shadow_doppler_hz > shadow_cap:
            raise ValueError(
                "shadow_doppler_hz <= f_m violated: "
                f"shadow_doppler_hz={self.shadow_doppler_hz}, f_m={f_m}"
            )
        if self.duration_s * f_m < DEFAULT_SIMULATION.min_doppler_periods:
            raise ValueError(
                "duration_s*f_m >= 100 violated: "
                f"duration_s={self.duration_s}, f_m={f_m}"
            )
        return self

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))


class EnvelopeTrace(BaseModel):
    """Uniformly sampled fading envelope."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    samples: np.ndarray
    sample_rate_hz: float = Field(gt=0.0)
    config_echo: Optional[SimConfig] = None

    @field_validator("samples", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return np.asarray(value, dtype=float).ravel()

    @model_validator(mode="after")
    def _check_samples(self) -> "EnvelopeTrace":
        if not np.all(np.isfinite(self.samples)) or np.any(self.samples < 0):
            raise ValueError("all samples finite and >= 0 violated")
        cfg = self.config_echo
        if cfg is not None and self.samples.size != cfg.n_samples:
            raise ValueError(
                "length = round(duration_s*sample_rate_hz) violated: "
                f"{self.samples.size} != {cfg.n_samples}"
            )
        return self

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


class EmpiricalSecondOrder(BaseModel):
    """Crossing counters of a trace and the LCR/AFD derived from them."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    thresholds_db: np.ndarray
    upcrossings: np.ndarray
    time_below_s: np.ndarray = Field(description=(
        "Total time below each threshold."))
    fade_time_s: np.ndarray = Field(description=(
        "Time below each threshold inside complete fades only."))
    n_fades: np.ndarray
    duration_s: float
    f_m: float
    rms: float = Field(ge=0.0, description=(
        "Trace rms; thresholds_db are relative to it."))
    lcr_normalized: np.ndarray
    afd_normalized: np.ndarray

    @model_validator(mode="after")
    def _check_counters(self) -> "EmpiricalSecondOrder":
        if np.any(self.n_fades > self.upcrossings + 1):
            raise ValueError("n_fades <= upcrossings + 1 violated")
        if np.any(np.diff(self.time_below_s) < 0):
            raise ValueError("time_below nondecreasing in threshold violated")
        return self


class SampleSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    amplitudes: np.ndarray
    rms: float = Field(gt=0.0)

    @field_validator("amplitudes", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return np.asarray(value, dtype=float).ravel()

    @model_validator(mode="after")
    def _check_amplitudes(self) -> "SampleSet":
        values = self.amplitudes
        if values.size == 0:
            raise ValueError("SampleSet must not be empty")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("all entries > 0 and finite violated")
        return self

    @property
    def normalized(self) -> np.ndarray:
        return self.amplitudes / self.rms


class FitReport(BaseModel):
    """Estimated parameters, named after the columns of the published table."""
    kappa_hat: float
    mu_hat: float
    r_bar_hat: float
    m_hat: float
    f_m_hat: Optional[float] = None
    rho_hat: Optional[float] = None
    pdf_residual: float = Field(ge=0.0)
    lcr_residual: Optional[float] = Field(default=None, ge=0.0)
    n_bins: int
    rms: float = Field(gt=0.0, description=(
        "rms of the input before normalization; r_bar_hat is relative to "
        "it."))
    converged: Dict[str, bool]

    @model_validator(mode="after")
    def _check_params(self) -> "FitReport":
        _ = self.params_hat
        return self

    @property
    def params_hat(self) -> ChannelParams:
        return ChannelParams(kappa=self.kappa_hat, mu=self.mu_hat,
                             m=self.m_hat, r_bar=self.r_bar_hat,
                             rho=self.rho_hat or 0.0)

    def table_row(self) -> str:
        def fmt(value: Optional[float]) -> str:
            return "-" if value is None else f"{value:.2f}"
        return "\t".join(fmt(v) for v in (
            self.kappa_hat, self.mu_hat, self.r_bar_hat, self.m_hat,
            self.f_m_hat, self.rho_hat))


class FitOutcome(BaseModel):
    report: FitReport
    lcr_error: Optional[str] = None

    @property
    def partial(self) -> bool:
        return self.lcr_error is not None


class FitState(TypedDict, total=False):
    """State carried through the two-stage fitting graph."""
    amplitudes: np.ndarray
    sample_rate_hz: float
    shadow_ratio: float
    shadow_doppler_hz: Optional[float]
    grid_db: np.ndarray
    sample_set: SampleSet
    params_hat: ChannelParams
    pdf_residual: float
    n_bins: int
    pdf_converged: bool
    f_m_hat: float
    rho_hat: float
    lcr_residual: float
    lcr_converged: bool
    error: Optional[Exception]
    lcr_error: Optional[str]
    report: Optional[FitReport]
