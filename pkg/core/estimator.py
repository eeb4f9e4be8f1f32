"""
Two-stage least-squares estimation of kappa-mu shadowed parameters.

Stage one fits (kappa, mu, m, r_bar) to the amplitude histogram of an
rms-normalized record. Stage two fits (f_m, rho) to its level crossing rate
in log10 space, with the stage-one shape held fixed.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import lmfit
import numpy as np
from pydantic import ValidationError
from scipy import optimize

from config import DEFAULT_FIT, FitConfig
from core.errors import (DegenerateHistogramError, FadingError,
                         InsufficientCrossingsError, InsufficientDataError,
                         NumericalError, ParameterDomainError)
from core.model import lcr_normalized, log_slope_factor, pdf
from core.simulator import count_crossings, shadow_slope_frequency
from core.state_models import ChannelParams, SampleSet


logger = logging.getLogger(__name__)

_SHAPE_NAMES = ("kappa", "mu", "m", "r_bar")
# relative improvement a refinement must bring to replace the grid optimum
_REFINE_MARGIN = 1e-9
_LN10 = math.log(10.0)
# f_m is searched over [f_max * 1e-9, f_max]
_F_M_DECADES = 9.0


@dataclass(frozen=True)
class PdfFit:
    params: ChannelParams
    residual: float
    n_bins: int
    converged: bool


@dataclass(frozen=True)
class LcrFit:
    f_m_hat: float
    rho_hat: float
    residual: float
    n_thresholds: int
    converged: bool


def make_sample_set(amplitudes: Sequence[float],
                    config: FitConfig = DEFAULT_FIT) -> SampleSet:
    """Wrap raw amplitudes with their rms."""
    values = np.asarray(amplitudes, dtype=float).ravel()
    if values.size < config.min_samples:
        raise InsufficientDataError(
            f"at least {config.min_samples} samples required, "
            f"got {values.size}"
        )
    rms = float(np.sqrt(np.mean(values ** 2))) if values.size else 0.0
    try:
        return SampleSet(amplitudes=values, rms=rms)
    except ValidationError as e:
        raise InsufficientDataError(
            f"sample set rejected: {e.errors()[0]['msg']}") from e


def histogram(s: SampleSet,
              config: FitConfig = DEFAULT_FIT) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Density histogram of the rms-normalized amplitudes.

    The bin count follows the Freedman-Diaconis rule, clamped to
    [config.min_bins, config.max_bins].

    Returns:
        Bin centers, densities and the number of bins.
    """
    x = s.normalized
    spread = float(np.ptp(x))
    if spread == 0.0:
        raise DegenerateHistogramError(
            "at least 10 nonempty bins required: all amplitudes are equal")

    q75, q25 = np.percentile(x, [75, 25])
    width = 2.0 * (q75 - q25) * x.size ** (-1.0 / 3.0)
    n_bins = config.max_bins if width <= 0.0 else math.ceil(spread / width)
    n_bins = int(min(max(n_bins, config.min_bins), config.max_bins))

    density, edges = np.histogram(x, bins=n_bins, density=True)
    nonempty = int(np.count_nonzero(density))
    if nonempty < config.min_nonempty_bins:
        raise DegenerateHistogramError(
            f"at least {config.min_nonempty_bins} nonempty bins required, "
            f"got {nonempty}"
        )
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, density, n_bins


def _params_from(values: lmfit.Parameters) -> ChannelParams:
    return ChannelParams(**{name: values[name].value for name in _SHAPE_NAMES})


def _pdf_residual(values: lmfit.Parameters, centers: np.ndarray,
                  density: np.ndarray) -> np.ndarray:
    p = _params_from(values)
    try:
        model = np.array([pdf(p, float(r)) for r in centers])
    except FadingError as e:
        logger.debug(f"density failed for kappa={p.kappa:.6g}, mu={p.mu:.6g}, "
                     f"m={p.m:.6g}, r_bar={p.r_bar:.6g}: {e}")
        raise
    return density - model


def _start_points(x: np.ndarray, init: Optional[ChannelParams],
                  config: FitConfig) -> List[ChannelParams]:
    starts = [] if init is None else [init.replace(rho=0.0)]
    for kappa, mu, m in config.start_corners:
        starts.append(ChannelParams(kappa=kappa, mu=mu, m=m, r_bar=1.0))

    # Nakagami moment seed: mu = E[R^2]^2 / Var(R^2)
    power = x ** 2
    variance = float(np.var(power))
    mu0 = float(np.mean(power)) ** 2 / variance if variance > 0 else 1.0
    mu0 = min(max(mu0, config.mu_bounds[0]), config.mu_bounds[1])
    starts.append(ChannelParams(kappa=0.1, mu=mu0, m=5.0, r_bar=1.0))
    return starts


def _make_parameters(start: ChannelParams,
                     config: FitConfig) -> lmfit.Parameters:
    bounds = {"kappa": config.kappa_bounds, "mu": config.mu_bounds,
              "m": config.m_bounds, "r_bar": config.r_bar_bounds}
    values = lmfit.Parameters()
    for name in _SHAPE_NAMES:
        low, high = bounds[name]
        start_value = min(max(getattr(start, name), low), high)
        values.add(name, value=start_value, min=low, max=high)
    return values


def fit_pdf(s: SampleSet, init: Optional[ChannelParams] = None,
            config: FitConfig = DEFAULT_FIT) -> PdfFit:
    """
    Least-squares fit of the envelope density to the amplitude histogram.

    Every start point is refined with bounded least squares; candidates
    (start points included) are ranked by (residual, start index).

    Args:
        s: Amplitudes; normalized by their rms internally.
        init: Optional extra start point, tried first.
        config: Bounds, binning and start corners.

    Returns:
        PdfFit with the estimate (r_bar relative to s.rms), its residual,
        the bin count and whether the winning refinement converged.

    Raises:
        DegenerateHistogramError: fewer than the required nonempty bins.
        NumericalError: the density could not be evaluated at any start.
    """
    centers, density, n_bins = histogram(s, config)
    starts = _start_points(s.normalized, init, config)
    logger.info(f"Fitting PDF on {n_bins} bins from {len(starts)} starts")

    candidates = []
    for index, start in enumerate(starts):
        values = _make_parameters(start, config)
        try:
            start_sse = float(np.sum(
                _pdf_residual(values, centers, density) ** 2))
            candidates.append((start_sse, index, 1, _params_from(values),
                               False))
            result = lmfit.minimize(_pdf_residual, values,
                                    method="least_squares",
                                    args=(centers, density))
        except (FadingError, ValueError) as e:
            logger.debug(f"start {index} failed: {e}")
            continue
        sse = float(np.sum(result.residual ** 2))
        logger.debug(f"start {index}: residual {start_sse:.6g} -> {sse:.6g}")
        candidates.append((sse, index, 0, _params_from(result.params),
                           bool(result.success)))

    if not candidates:
        raise NumericalError(
            f"density failed at every one of {len(starts)} start points")
    sse, index, is_start, params, converged = min(
        candidates, key=lambda c: (c[0], c[1], c[2]))
    if is_start or not converged:
        logger.warning(f"PDF fit did not converge (best start {index}, "
                       f"residual {sse:.6g})")
        converged = False
    return PdfFit(params=params, residual=sse, n_bins=n_bins,
                  converged=converged)


def _log_model_rates(p: ChannelParams, levels: np.ndarray,
                     shadow_ratio: float) -> np.ndarray:
    return np.log10([lcr_normalized(p, float(r), shadow_ratio)
                     for r in levels])


def fit_lcr(s: SampleSet, fs: float, p_hat: ChannelParams,
            shadow_ratio: float = 1.0,
            grid: Optional[Sequence[float]] = None,
            config: FitConfig = DEFAULT_FIT,
            shadow_doppler_hz: Optional[float] = None) -> LcrFit:
    """
    Fit (f_m, rho) to the empirical crossing rate of a uniformly sampled record.

    The closed-form rate factors into a threshold term and a slope factor
    that carries rho and the shadow ratio. For each rho on an even grid over
    [0, rho_max] the best f_m therefore solves one scalar equation; the grid
    optimum is then refined with bounded least squares and the refinement
    kept only if it lowers the residual. rho is confounded with f_m, so ties
    go to the smallest rho.

    Args:
        s: Amplitudes in time order.
        fs: Sample rate in Hz.
        p_hat: Stage-one estimate with r_bar relative to s.rms.
        shadow_ratio: Shadow-to-multipath Doppler ratio, used when
            shadow_doppler_hz is not given.
        grid: Thresholds in dB relative to the record rms.
        config: Grid, bounds and acceptance limits.
        shadow_doppler_hz: Bandwidth of the shadowing process in Hz. The
            ratio then follows the fitted f_m as
            shadow_slope_frequency(m, shadow_doppler_hz) / f_m.

    Raises:
        InsufficientCrossingsError: too few thresholds are crossed often
            enough to support the fit.
    """
    if not math.isfinite(fs) or fs <= 0.0:
        raise ParameterDomainError(f"fs > 0 violated: got fs={fs}")
    if grid is None:
        grid = np.linspace(config.lcr_db_from, config.lcr_db_to,
                           config.lcr_points)
    thresholds = np.asarray(grid, dtype=float)
    levels = 10.0 ** (thresholds / 20.0)

    x = s.normalized
    counts = count_crossings(x, levels, 1.0 / fs)
    well_crossed = int(np.count_nonzero(
        counts.upcrossings >= config.min_crossings))
    if well_crossed < config.min_thresholds:
        raise InsufficientCrossingsError(
            f"at least {config.min_thresholds} thresholds with "
            f">= {config.min_crossings} crossings required, got {well_crossed}"
        )

    used = counts.upcrossings > 0
    duration = x.size / fs
    log_rates = np.log10(counts.upcrossings[used] / duration)
    used_levels = levels[used]
    f_max = fs / 2.0
    base = p_hat.replace(rho=0.0)
    log_threshold_terms = (_log_model_rates(base, used_levels, 1.0)
                           - log_slope_factor(base, 1.0) / _LN10)
    target = float(np.mean(log_rates - log_threshold_terms))

    f_shadow = None
    if shadow_doppler_hz is not None and base.kappa > 0.0:
        f_shadow = shadow_slope_frequency(base.m, shadow_doppler_hz)
    logger.info(f"Fitting LCR on {used_levels.size} thresholds")

    def log_slope(p: ChannelParams, f_m: float) -> float:
        ratio = shadow_ratio if f_shadow is None else f_shadow / f_m
        return log_slope_factor(p, ratio) / _LN10

    def best_f_m(p: ChannelParams) -> float:
        if f_shadow is None:
            return 10.0 ** min(target - log_slope(p, 1.0), math.log10(f_max))

        def gap(log_f: float) -> float:
            return log_f + log_slope(p, 10.0 ** log_f) - target

        low, high = math.log10(f_max) - _F_M_DECADES, math.log10(f_max)
        if gap(high) <= 0.0:
            return f_max
        if gap(low) >= 0.0:
            return 10.0 ** low
        return 10.0 ** optimize.brentq(gap, low, high, xtol=1e-12)

    def errors(p: ChannelParams, f_m: float) -> np.ndarray:
        return (log_rates - math.log10(f_m) - log_threshold_terms
                - log_slope(p, f_m))

    # without a dominant component rho is pinned to 0
    rho_grid = (np.linspace(0.0, config.rho_max, config.rho_grid_points)
                if base.kappa > 0.0 else np.zeros(1))
    best = None
    for rho in rho_grid:
        p = base.replace(rho=float(rho))
        f_m = best_f_m(p)
        sse = float(np.sum(errors(p, f_m) ** 2))
        # strict comparison keeps the smallest rho among equal residuals
        if best is None or sse < best[0] * (1.0 - _REFINE_MARGIN):
            best = (sse, float(rho), f_m)
    sse, rho_hat, f_m_hat = best

    def residual(values: lmfit.Parameters) -> np.ndarray:
        return errors(base.replace(rho=values["rho"].value),
                      values["f_m"].value)

    values = lmfit.Parameters()
    values.add("f_m", value=f_m_hat, min=f_max * 10.0 ** -_F_M_DECADES,
               max=f_max)
    values.add("rho", value=rho_hat, min=0.0, max=config.rho_max,
               vary=base.kappa > 0.0)
    refined_ok = False
    try:
        result = lmfit.minimize(residual, values, method="least_squares")
        refined_sse = float(np.sum(result.residual ** 2))
        refined_ok = bool(result.success)
        if refined_sse < sse * (1.0 - _REFINE_MARGIN):
            logger.debug(f"refinement lowered LCR residual {sse:.6g} -> "
                         f"{refined_sse:.6g}")
            sse = refined_sse
            f_m_hat = float(result.params["f_m"].value)
            rho_hat = float(result.params["rho"].value)
    except (FadingError, ValueError) as e:
        logger.debug(f"LCR refinement failed: {e}")

    rms_log_error = math.sqrt(sse / used_levels.size)
    converged = refined_ok and f_m_hat < f_max
    if rms_log_error > config.pathological_log_residual:
        logger.warning(f"LCR fit residual is pathological: rms error "
                       f"{rms_log_error:.3f} decades")
        converged = False
    return LcrFit(f_m_hat=f_m_hat, rho_hat=rho_hat, residual=sse,
                  n_thresholds=int(used_levels.size), converged=converged)
