import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple


LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
DEFAULT_LOG_LEVEL = logging.WARNING

logger = logging.getLogger(__name__)

# m = infinity (no shadowing) and kappa -> 0 are reached numerically.
LARGE_M = 1e6
KAPPA_FLOOR = 1e-9

OUTPUT_SIGNIFICANT_DIGITS = 12
TRACE_SIGNIFICANT_DIGITS = 12
TRACE_HEADER = "# kms-trace v1"

# Estimated parameters of the measured D2D and on-body channels:
# (kappa, mu, r_bar, m, f_m, rho).
MEASURED_PRESETS: Dict[str, Dict[str, float]] = {
    "d2d": {"kappa": 1.39, "mu": 1.78, "r_bar": 1.14, "m": 0.55,
            "f_m": 2.40, "rho": 0.29},
    "on-body": {"kappa": 0.66, "mu": 1.39, "r_bar": 1.03, "m": 0.36,
                "f_m": 4.68, "rho": 0.05},
}


@dataclass(frozen=True)
class NumericsConfig:
    series_rel_tol: float = 1e-10
    series_max_terms: int = 10_000
    # largest |term| / |sum| accepted before reporting lost digits
    cancellation_limit: float = 1e12
    # negative arguments below this are reflected with Kummer's transformation
    kummer_reflection_threshold: float = 0.0
    quad_rel_tol: float = 1e-10
    quad_subdivision_limit: int = 200
    cdf_roundoff: float = 1e-12


@dataclass(frozen=True)
class SimulationDefaults:
    n_sinusoids: int = 64
    shadow_fraction: float = 0.1
    min_oversampling: float = 16.0
    min_doppler_periods: float = 100.0
    max_shadow_fraction: float = 1.0
    # fractional mu: CDF tables over r / r_bar in [low, high], log-spaced
    remap_points: int = 400
    remap_span: Tuple[float, float] = (1e-6, 6.0)


@dataclass(frozen=True)
class FitConfig:
    kappa_bounds: Tuple[float, float] = (1e-6, 50.0)
    mu_bounds: Tuple[float, float] = (0.25, 16.0)
    m_bounds: Tuple[float, float] = (0.05, 500.0)
    r_bar_bounds: Tuple[float, float] = (0.5, 2.0)
    min_bins: int = 30
    max_bins: int = 200
    min_nonempty_bins: int = 10
    min_samples: int = 100
    # (kappa, mu, m) corners; a moment-based seed is appended at run time
    start_corners: Tuple[Tuple[float, float, float], ...] = field(
        default_factory=lambda: tuple(
            (kappa, mu, m)
            for kappa in (0.5, 3.0)
            for mu in (0.5, 3.0)
            for m in (0.5, 5.0)
        )
    )
    rho_max: float = 0.95
    rho_grid_points: int = 96
    lcr_db_from: float = -30.0
    lcr_db_to: float = 5.0
    lcr_points: int = 36
    min_thresholds: int = 10
    min_crossings: int = 10
    # RMS error in decades above which a stage-2 fit is flagged
    pathological_log_residual: float = 0.25


DEFAULT_NUMERICS = NumericsConfig()
DEFAULT_SIMULATION = SimulationDefaults()
DEFAULT_FIT = FitConfig()
