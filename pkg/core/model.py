"""
Closed-form statistics of the kappa-mu shadowed fading envelope.

Thresholds are handled as rho_t = r / r_bar. Every prefactor is accumulated
as a logarithm and exponentiated once, so large m (the unshadowed limit) and
large mu stay finite.
"""
import logging
import math
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
from scipy import special

from config import (DEFAULT_NUMERICS, KAPPA_FLOOR, LARGE_M,
                    MEASURED_PRESETS)
from core.errors import FadingError, NumericalError, ParameterDomainError
from core.specfun import (integrate_adaptive, ln_gamma, log_humbert_phi2,
                          log_kummer_1f1)
from core.state_models import (ChannelParams, CurveFailure, DopplerParams,
                               SeriesControl, StatCurve, StatName)


logger = logging.getLogger(__name__)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# CDF values above 1 by less than this are rounding; beyond it the series failed
_CDF_UPPER_SLACK = 1e-9
# Phi2 tolerance: tighter than the default so a saturated CDF stays ordered
_CDF_CONTROL = SeriesControl(rel_tol=1e-14)


def _check_amplitude(r: float, strict: bool = False) -> None:
    if not math.isfinite(r) or r < 0.0 or (strict and r == 0.0):
        bound = "r > 0" if strict else "r >= 0"
        raise ParameterDomainError(f"{bound} violated: got r={r}")


def _check_shadow_ratio(shadow_ratio: float) -> None:
    if not math.isfinite(shadow_ratio) or shadow_ratio <= 0.0:
        raise ParameterDomainError(
            f"shadow_ratio > 0 violated: got {shadow_ratio}")


def _log_shadow_power(p: ChannelParams) -> float:
    """ln(m^m / (mu kappa + m)^m), stable as m grows."""
    return -p.m * math.log1p(p.mu * p.kappa / p.m)


def _log_kernel(p: ChannelParams, rho_t: float) -> float:
    """ln of exp(-mu(1+kappa) rho_t^2) 1F1(m; mu; mu^2 kappa (1+kappa) rho_t^2 / (mu kappa + m))."""
    a2 = p.mu * (1.0 + p.kappa) * rho_t ** 2
    z = p.mu * p.kappa * a2 / (p.mu * p.kappa + p.m)
    return -a2 + log_kummer_1f1(p.m, p.mu, z)


def _log_phi2(p: ChannelParams, rho_t: float) -> float:
    x = -p.mu * (1.0 + p.kappa) * rho_t ** 2
    y = x * p.m / (p.mu * p.kappa + p.m)
    return log_humbert_phi2(p.mu - p.m, p.m, p.mu + 1.0, x, y, _CDF_CONTROL)


def _slope_terms(p: ChannelParams, shadow_ratio: float) -> Tuple[float, float]:
    """
    (m + s^2 + 2 rho s sqrt(m), sqrt(m)(1 - rho^2) + 4 rho s) with
    s = shadow_ratio * sqrt(mu kappa).
    """
    _check_shadow_ratio(shadow_ratio)
    s = shadow_ratio * math.sqrt(p.mu * p.kappa)
    root_m = math.sqrt(p.m)
    spread = p.m + s * s + 2.0 * p.rho * s * root_m
    denominator = p.lcr_denominator(shadow_ratio)
    if denominator <= 0.0:
        raise ParameterDomainError(
            "sqrt(m)(1-rho^2) + 4 rho eta sqrt(mu kappa) > 0 violated: "
            f"rho={p.rho}, shadow_ratio={shadow_ratio}"
        )
    return spread, denominator


def _exp(log_value: float) -> float:
    with np.errstate(over="ignore"):
        return float(np.exp(log_value))


def pdf(p: ChannelParams, r: float) -> float:
    """
    Envelope probability density f_R(r).

    Args:
        p: Channel parameters; rho does not enter the first-order density.
        r: Amplitude, r >= 0.

    Returns:
        The density in 1/amplitude. At r = 0 it is 0 for mu > 1/2, finite
        for mu = 1/2 and infinite below.
    """
    _check_amplitude(r)
    rho_t = r / p.r_bar
    log_scale = math.log(2.0) - math.log(p.r_bar) + p.mu * math.log(p.mu) \
        - ln_gamma(p.mu)

    if r == 0.0:
        if p.mu > 0.5:
            return 0.0
        if p.mu < 0.5:
            return math.inf
        # mu = 1/2: the power of rho_t vanishes and the kernel is 1
        return _exp(log_scale + p.mu * math.log1p(p.kappa)
                    + _log_shadow_power(p))

    log_power = (2.0 * p.mu - 1.0) * math.log(rho_t)
    if p.kappa == 0.0:
        # Nakagami density with shape mu
        return _exp(log_scale + log_power - p.mu * rho_t ** 2)

    return _exp(log_scale + log_power + p.mu * math.log1p(p.kappa)
                + _log_shadow_power(p) + _log_kernel(p, rho_t))


def cdf(p: ChannelParams, r: float) -> float:
    """
    Envelope distribution F_R(r) through Humbert's Phi2.

    Falls back to quadrature of the density when the series does not
    converge or returns a value outside [0, 1].

    Raises:
        NumericalError: both the series and the quadrature fallback failed.
    """
    _check_amplitude(r)
    if r == 0.0:
        return 0.0
    rho_t = r / p.r_bar
    if p.kappa == 0.0:
        return float(special.gammainc(p.mu, p.mu * rho_t ** 2))

    try:
        log_value = ((p.mu - 1.0) * math.log(p.mu) + _log_shadow_power(p)
                     + p.mu * math.log1p(p.kappa) - ln_gamma(p.mu)
                     + 2.0 * p.mu * math.log(rho_t)
                     + _log_phi2(p, rho_t))
        value = _exp(log_value)
        if value > 1.0 + _CDF_UPPER_SLACK:
            raise NumericalError(f"Phi2 series gave F_R={value} > 1")
    except (NumericalError, ParameterDomainError) as e:
        logger.warning(f"CDF series failed at r={r} ({e}); "
                       "falling back to quadrature of the PDF")
        value = integrate_adaptive(lambda x: pdf(p, x), 0.0, r)

    if value < 0.0 and value >= -DEFAULT_NUMERICS.cdf_roundoff:
        return 0.0
    return min(value, 1.0)


def slope_variance_multipath(p: ChannelParams, d: DopplerParams) -> float:
    """pi^2 f_m^2 r_bar^2 / (mu (1 + kappa)), in amplitude^2/s^2."""
    return (math.pi * d.f_m * p.r_bar) ** 2 / (p.mu * (1.0 + p.kappa))


def slope_variance_shadow(p: ChannelParams, d: DopplerParams) -> float:
    """
    Slope variance of the shadowed dominant component,
    pi^2 f^2 kappa r_bar^2 / (m (1 + kappa)).

    The Doppler frequency f is d.shadow_f_m when given, otherwise d.f_m.
    """
    if p.kappa == 0.0:
        raise ParameterDomainError(
            "kappa > 0 required for the shadow slope variance: "
            "there is no dominant component"
        )
    f_s = d.shadow_f_m if d.shadow_f_m is not None else d.f_m
    return ((math.pi * f_s * p.r_bar) ** 2 * p.kappa
            / (p.m * (1.0 + p.kappa)))


def _slope_deviations(p: ChannelParams, d: DopplerParams) -> Tuple[float, float]:
    sigma_a = math.sqrt(slope_variance_multipath(p, d))
    sigma_b = 0.0 if p.kappa == 0.0 else math.sqrt(
        slope_variance_shadow(p, d))
    return sigma_a, sigma_b


def slope_pdf(p: ChannelParams, d: DopplerParams, rdot: float) -> float:
    """Density of the envelope slope R' = A' + B' with corr(A', B') = rho."""
    sigma_a, sigma_b = _slope_deviations(p, d)
    one_minus = 1.0 - p.rho ** 2
    total = sigma_a ** 2 + 2.0 * p.rho * sigma_a * sigma_b + sigma_b ** 2
    shape = (sigma_a ** 2 * one_minus + 4.0 * p.rho * sigma_a * sigma_b) / total
    exponent = -rdot ** 2 / (2.0 * one_minus * sigma_a ** 2) * shape
    return math.exp(exponent) / math.sqrt(2.0 * math.pi * one_minus * total)


def mean_positive_slope(p: ChannelParams, d: DopplerParams) -> float:
    """Integral of rdot * f(rdot) over rdot > 0, in amplitude/s."""
    sigma_a, sigma_b = _slope_deviations(p, d)
    one_minus = 1.0 - p.rho ** 2
    total = sigma_a ** 2 + 2.0 * p.rho * sigma_a * sigma_b + sigma_b ** 2
    denominator = sigma_a * one_minus + 4.0 * p.rho * sigma_b
    if denominator <= 0.0:
        raise ParameterDomainError(
            "sigma_A(1-rho^2) + 4 rho sigma_B > 0 violated: "
            f"rho={p.rho}, shadow_f_m={d.shadow_f_m}"
        )
    return (math.sqrt(one_minus * total) * sigma_a
            / (math.sqrt(2.0 * math.pi) * denominator))


def lcr(p: ChannelParams, d: DopplerParams, r: float) -> float:
    """Level crossing rate in crossings per second, f_R(r) times the mean positive slope."""
    _check_amplitude(r, strict=True)
    return pdf(p, r) * mean_positive_slope(p, d)


def log_slope_factor(p: ChannelParams, shadow_ratio: float = 1.0) -> float:
    """
    Natural log of the part of N_R(r) / f_m that carries rho and the shadow
    ratio: ln(sqrt((1 - rho^2)(m + s^2 + 2 rho s sqrt(m))) / denominator).

    It does not depend on r, so rho and shadow_ratio move the crossing rate
    by the same factor at every threshold. Zero for kappa = 0.
    """
    if p.kappa == 0.0:
        return 0.0
    spread, denominator = _slope_terms(p, shadow_ratio)
    return (0.5 * math.log1p(-p.rho ** 2) + 0.5 * math.log(spread)
            - math.log(denominator))


def _log_lcr_normalized(p: ChannelParams, rho_t: float,
                        shadow_ratio: float) -> float:
    log_common = (_HALF_LOG_2PI + (p.mu - 0.5) * math.log(p.mu)
                  - ln_gamma(p.mu) + (2.0 * p.mu - 1.0) * math.log(rho_t))
    if p.kappa == 0.0:
        return log_common - p.mu * rho_t ** 2

    return (log_common + log_slope_factor(p, shadow_ratio)
            + (p.mu - 0.5) * math.log1p(p.kappa) + _log_shadow_power(p)
            + _log_kernel(p, rho_t))


def lcr_normalized(p: ChannelParams, r: float,
                   shadow_ratio: float = 1.0) -> float:
    """
    Level crossing rate divided by the maximum Doppler frequency.

    Args:
        p: Channel parameters, including the slope correlation rho.
        r: Threshold amplitude, r > 0.
        shadow_ratio: Ratio of the Doppler frequency driving the shadow
            slope to f_m. The default 1 uses f_m for both slopes.

    Returns:
        N_R(r) / f_m, independent of f_m itself.
    """
    _check_amplitude(r, strict=True)
    return _exp(_log_lcr_normalized(p, r / p.r_bar, shadow_ratio))


def lcr_normalized_uncorrelated(p: ChannelParams, r: float) -> float:
    """N_R(r)/f_m written directly for uncorrelated slopes (rho ignored)."""
    _check_amplitude(r, strict=True)
    rho_t = r / p.r_bar
    log_value = (_HALF_LOG_2PI + (p.mu - 0.5) * math.log(p.mu)
                 + (p.m - 0.5) * math.log(p.m)
                 + (p.mu - 0.5) * math.log1p(p.kappa)
                 + 0.5 * math.log(p.m + p.mu * p.kappa)
                 - ln_gamma(p.mu) - p.m * math.log(p.mu * p.kappa + p.m)
                 + (2.0 * p.mu - 1.0) * math.log(rho_t))
    if p.kappa == 0.0:
        return _exp(log_value - p.mu * rho_t ** 2)
    return _exp(log_value + _log_kernel(p, rho_t))


def afd_normalized(p: ChannelParams, r: float,
                   shadow_ratio: float = 1.0) -> float:
    """
    Average fade duration multiplied by f_m, as F_R(r) / (N_R(r)/f_m).

    Returns +inf when the crossing rate underflows while the CDF is still
    positive, and 0 when both underflow.
    """
    _check_amplitude(r, strict=True)
    probability = cdf(p, r)
    rate = lcr_normalized(p, r, shadow_ratio)
    if rate == 0.0:
        return math.inf if probability > 0.0 else 0.0
    return probability / rate


def afd(p: ChannelParams, d: DopplerParams, r: float) -> float:
    """Average fade duration in seconds."""
    return afd_normalized(p, r, d.shadow_ratio) / d.f_m


def afd_normalized_closed_form(p: ChannelParams, r: float) -> float:
    """T_R(r) f_m as the single expression combining Phi2 and 1F1."""
    _check_amplitude(r, strict=True)
    rho_t = r / p.r_bar
    spread, denominator = _slope_terms(p, 1.0)
    log_value = (math.log(denominator) + 0.5 * math.log1p(p.kappa)
                 - _HALF_LOG_2PI - 0.5 * math.log1p(-p.rho ** 2)
                 - 0.5 * math.log(p.mu) - 0.5 * math.log(spread)
                 + math.log(rho_t) + _log_phi2(p, rho_t)
                 - _log_kernel(p, rho_t))
    return _exp(log_value)


def afd_normalized_uncorrelated(p: ChannelParams, r: float) -> float:
    _check_amplitude(r, strict=True)
    rho_t = r / p.r_bar
    log_value = (0.5 * math.log(p.m) + 0.5 * math.log1p(p.kappa)
                 - _HALF_LOG_2PI - 0.5 * math.log(p.mu)
                 - 0.5 * math.log(p.m + p.mu * p.kappa)
                 + math.log(rho_t) + _log_phi2(p, rho_t)
                 - _log_kernel(p, rho_t))
    return _exp(log_value)


_SPECIAL_CASE_ARITY = {"rayleigh": 0, "rice": 1, "nakagami": 1,
                       "kappa_mu": 2}


def special_case_params(kind: str, *shape: float) -> ChannelParams:
    """
    Map a classical fading family onto the kappa-mu shadowed parameters.

    Args:
        kind: One of "rayleigh", "rice" (shape: k), "nakagami" (shape: m0)
            or "kappa_mu" (shape: kappa, mu).
        *shape: The family's own shape parameters, all positive.

    Returns:
        ChannelParams with m = LARGE_M and rho = 0. A vanishing dominant
        component is represented by kappa = KAPPA_FLOOR.
    """
    if kind not in _SPECIAL_CASE_ARITY:
        raise ParameterDomainError(
            f"unknown special case '{kind}'; expected one of "
            f"{sorted(_SPECIAL_CASE_ARITY)}"
        )
    if len(shape) != _SPECIAL_CASE_ARITY[kind]:
        raise ParameterDomainError(
            f"{kind} takes {_SPECIAL_CASE_ARITY[kind]} shape parameter(s), "
            f"got {len(shape)}"
        )
    for value in shape:
        if not math.isfinite(value) or value <= 0.0:
            raise ParameterDomainError(
                f"{kind} shape parameters > 0 violated: got {shape}")

    if kind == "rayleigh":
        kappa, mu = KAPPA_FLOOR, 1.0
    elif kind == "rice":
        kappa, mu = shape[0], 1.0
    elif kind == "nakagami":
        kappa, mu = KAPPA_FLOOR, shape[0]
    else:
        kappa, mu = shape
    return ChannelParams(kappa=kappa, mu=mu, m=LARGE_M, r_bar=1.0, rho=0.0)


def table_preset(name: str) -> Tuple[ChannelParams, DopplerParams]:
    """Parameters estimated for the measured D2D and on-body channels."""
    try:
        row = MEASURED_PRESETS[name]
    except KeyError:
        raise ParameterDomainError(
            f"unknown preset '{name}'; expected one of "
            f"{sorted(MEASURED_PRESETS)}"
        ) from None
    params = ChannelParams(kappa=row["kappa"], mu=row["mu"], m=row["m"],
                           r_bar=row["r_bar"], rho=row["rho"])
    return params, DopplerParams(f_m=row["f_m"])


# Statistics selectable by name; lcr and afd are the f_m-normalized forms.
available_statistics_map: Dict[str, Callable[..., float]] = {
    "pdf": pdf,
    "cdf": cdf,
    "lcr": lcr_normalized,
    "afd": afd_normalized,
}

_SLOPE_STATS = ("lcr", "afd")


def curve(p: ChannelParams, stat: StatName, grid: Sequence[float],
          shadow_ratio: float = 1.0) -> StatCurve:
    """
    Evaluate one statistic at r = r_bar * 10^(dB/20) for each grid point.

    Points whose evaluation fails are kept as None with the reason recorded
    in StatCurve.failures.
    """
    if stat not in available_statistics_map:
        raise ParameterDomainError(
            f"unknown statistic '{stat}'; expected one of "
            f"{sorted(available_statistics_map)}"
        )
    thresholds = [float(v) for v in grid]
    if not thresholds:
        raise ParameterDomainError("threshold grid must not be empty")
    if not all(math.isfinite(v) for v in thresholds):
        raise ParameterDomainError("threshold grid must be finite")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ParameterDomainError("thresholds strictly increasing violated")

    evaluate = available_statistics_map[stat]
    kwargs = {"shadow_ratio": shadow_ratio} if stat in _SLOPE_STATS else {}

    values = []
    failures = []
    for index, threshold_db in enumerate(thresholds):
        r = p.r_bar * 10.0 ** (threshold_db / 20.0)
        try:
            values.append(evaluate(p, r, **kwargs))
        except FadingError as e:
            logger.warning(f"{stat} failed at {threshold_db} dB: {e}")
            values.append(None)
            failures.append(CurveFailure(index=index,
                                         threshold_db=threshold_db,
                                         reason=str(e)))
    return StatCurve(stat=stat, thresholds_db=thresholds, values=values,
                     failures=failures)
