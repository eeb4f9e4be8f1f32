"""
Scalar special functions behind the closed-form envelope statistics.

Every hypergeometric evaluation is carried out on the logarithm of its terms,
so prefactors such as exp(-mu (1 + kappa) rho_t^2) can be combined with the
series without intermediate overflow. All functions are pure.
"""
import logging
import math
import warnings
from typing import Callable, Tuple

import numpy as np
from scipy import integrate, special

from config import DEFAULT_NUMERICS
from core.errors import (ParameterDomainError, QuadratureError,
                         SeriesConvergenceError)
from core.state_models import SeriesControl


logger = logging.getLogger(__name__)

DEFAULT_CONTROL = SeriesControl()

# consecutive small terms required before a series is declared converged
_TAIL_TERMS = 3
_MIN_TERMS = 32


def ln_gamma(x: float) -> float:
    """Natural logarithm of the gamma function for finite x > 0."""
    if not math.isfinite(x) or x <= 0.0:
        raise ParameterDomainError(f"ln_gamma requires finite x > 0, got {x}")
    return float(special.gammaln(x))


def _is_nonpositive_integer(a: float) -> bool:
    return a <= 0.0 and a == math.floor(a)


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ParameterDomainError(f"{name} must be finite, got {value}")


def _peak_index(a: float, b: float, x: float) -> float:
    """Index near which |(a)_k x^k / ((b)_k k!)| is largest."""
    ax = abs(x)
    # (a + k)|x| = (b + k)(k + 1)
    p = b + 1.0 - ax
    q = b - a * ax
    disc = p * p - 4.0 * q
    if disc <= 0.0:
        return 0.0
    return max(0.0, (-p + math.sqrt(disc)) / 2.0)


def _terms_needed(a: float, b: float, x: float) -> int:
    peak = _peak_index(a, b, x)
    return int(peak + 8.0 * math.sqrt(peak + 1.0)) + _MIN_TERMS


def _series_log_terms(a: float, b: float, x: float,
                      n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Log-magnitudes and signs of the first n terms of 1F1(a; b; x)."""
    k = np.arange(n - 1, dtype=float)
    ratio = (a + k) * x / ((b + k) * (k + 1.0))
    with np.errstate(divide="ignore"):
        log_ratio = np.log(np.abs(ratio))
    log_abs = np.concatenate(([0.0], np.cumsum(log_ratio)))
    signs = np.concatenate(([1.0], np.cumprod(np.sign(ratio))))
    return log_abs, signs


def _accumulate(log_abs: np.ndarray, signs: np.ndarray,
                exact: bool = False) -> Tuple[float, float]:
    """Sum terms given as (log|t|, sign t); returns (log|sum|, sign sum)."""
    if np.all(signs >= 0.0):
        return float(special.logsumexp(log_abs)), 1.0

    peak = float(np.max(log_abs))
    scaled = signs * np.exp(log_abs - peak)
    total = math.fsum(scaled.tolist())
    if total == 0.0:
        if exact:
            return -math.inf, 0.0
        raise SeriesConvergenceError(
            "alternating series cancelled to zero; digits lost"
        )
    lost = 1.0 / abs(total)
    if not exact and lost > DEFAULT_NUMERICS.cancellation_limit:
        raise SeriesConvergenceError(
            f"cancellation ratio {lost:.3g} exceeds "
            f"{DEFAULT_NUMERICS.cancellation_limit:.0e}"
        )
    return peak + math.log(abs(total)), math.copysign(1.0, total)


def _tail_converged(log_abs: np.ndarray, log_sum: float,
                    rel_tol: float) -> bool:
    if log_abs.size <= _TAIL_TERMS:
        return bool(np.all(np.isneginf(log_abs[1:])))
    tail = log_abs[-_TAIL_TERMS:]
    decreasing = log_abs[-1] <= log_abs[-2]
    return bool(decreasing
                and np.all(tail <= math.log(rel_tol) + log_sum))


def _log_kummer_series(a: float, b: float, x: float,
                       ctrl: SeriesControl) -> Tuple[float, float]:
    terminating = _is_nonpositive_integer(a)
    n = _terms_needed(a, b, x)
    if terminating:
        n = min(n, int(-a) + 2)
    n = max(2, min(n, ctrl.max_terms))

    while True:
        log_abs, signs = _series_log_terms(a, b, x, n)
        log_sum, sign = _accumulate(log_abs, signs, exact=terminating)
        if terminating or _tail_converged(log_abs, log_sum, ctrl.rel_tol):
            logger.debug(f"1F1({a}; {b}; {x}) converged with {n} terms")
            return log_sum, sign
        if n >= ctrl.max_terms:
            raise SeriesConvergenceError(
                f"1F1({a}; {b}; {x}) did not reach rel_tol={ctrl.rel_tol} "
                f"within {ctrl.max_terms} terms"
            )
        n = min(2 * n, ctrl.max_terms)


def _log_kummer_asymptotic(a: float, b: float, x: float,
                           ctrl: SeriesControl) -> Tuple[float, float]:
    """Large positive x: Gamma(b)/Gamma(a) e^x x^(a-b) sum_s (b-a)_s (1-a)_s / (s! x^s)."""
    total = 1.0
    term = 1.0
    for s in range(ctrl.max_terms):
        ratio = (b - a + s) * (1.0 - a + s) / ((s + 1.0) * x)
        if abs(ratio) >= 1.0:
            break
        term *= ratio
        total += term
        if abs(term) <= ctrl.rel_tol * abs(total):
            sign = (special.gammasgn(b) * special.gammasgn(a)
                    * math.copysign(1.0, total))
            log_abs = (x + (a - b) * math.log(x) + special.gammaln(b)
                       - special.gammaln(a) + math.log(abs(total)))
            return float(log_abs), float(sign)
    raise SeriesConvergenceError(
        f"1F1({a}; {b}; {x}) needs more than {ctrl.max_terms} series terms "
        "and its asymptotic expansion does not reach the tolerance"
    )


def _log_kummer(a: float, b: float, x: float,
                ctrl: SeriesControl) -> Tuple[float, float]:
    _check_finite(a=a, b=b, x=x)
    if b <= 0.0:
        raise ParameterDomainError(f"1F1 requires b > 0, got b={b}")
    if x == 0.0 or a == 0.0:
        return 0.0, 1.0
    if (x < DEFAULT_NUMERICS.kummer_reflection_threshold
            and not _is_nonpositive_integer(a)):
        # 1F1(a; b; x) = e^x 1F1(b - a; b; -x)
        log_abs, sign = _log_kummer(b - a, b, -x, ctrl)
        return x + log_abs, sign
    if (x > 0.0 and not _is_nonpositive_integer(a)
            and _terms_needed(a, b, x) > ctrl.max_terms):
        return _log_kummer_asymptotic(a, b, x, ctrl)
    return _log_kummer_series(a, b, x, ctrl)


def kummer_1f1(a: float, b: float, x: float,
               ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """
    Kummer's confluent hypergeometric function 1F1(a; b; x).

    Args:
        a: Numerator parameter.
        b: Denominator parameter, b > 0.
        x: Finite argument. Negative arguments are evaluated through
            Kummer's transformation e^x 1F1(b - a; b; -x).
        ctrl: Series tolerance and term cap.

    Returns:
        The function value (inf if it exceeds the float range).

    Raises:
        ParameterDomainError: b <= 0 or a non-finite input.
        SeriesConvergenceError: the tolerance was not met within
            ctrl.max_terms terms or too many digits cancelled.
    """
    log_abs, sign = _log_kummer(a, b, x, ctrl)
    with np.errstate(over="ignore"):
        return float(sign * np.exp(log_abs))


def log_kummer_1f1(a: float, b: float, x: float,
                   ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """ln 1F1(a; b; x) for arguments where the function is positive."""
    log_abs, sign = _log_kummer(a, b, x, ctrl)
    if sign <= 0.0:
        raise ParameterDomainError(
            f"1F1({a}; {b}; {x}) is not positive; its logarithm is undefined"
        )
    return log_abs


def _phi2_single_sum(b1: float, b2: float, c: float, x: float, y: float,
                     ctrl: SeriesControl) -> Tuple[float, float]:
    """sum_k (b2)_k y^k / ((c)_k k!) 1F1(b1; c + k; x), in log form."""
    log_terms = []
    signs = []
    log_coeff, coeff_sign = 0.0, 1.0
    small_run = 0
    log_tol = math.log(ctrl.rel_tol)

    for k in range(ctrl.max_terms):
        inner_log, inner_sign = _log_kummer(b1, c + k, x, ctrl)
        log_terms.append(log_coeff + inner_log)
        signs.append(coeff_sign * inner_sign)

        log_sum, sign = _accumulate(np.asarray(log_terms), np.asarray(signs))
        if k > 0 and log_terms[-1] <= log_tol + log_sum:
            small_run += 1
        else:
            small_run = 0
        if small_run >= _TAIL_TERMS:
            logger.debug(f"Phi2 single sum converged after {k + 1} terms")
            return log_sum, sign

        ratio = (b2 + k) * y / ((c + k) * (k + 1.0))
        if ratio == 0.0:
            return log_sum, sign
        log_coeff += math.log(abs(ratio))
        coeff_sign *= math.copysign(1.0, ratio)

    raise SeriesConvergenceError(
        f"Phi2({b1}, {b2}; {c}; {x}, {y}) did not converge within "
        f"{ctrl.max_terms} terms"
    )


def _log_phi2(b1: float, b2: float, c: float, x: float, y: float,
              ctrl: SeriesControl) -> Tuple[float, float]:
    _check_finite(b1=b1, b2=b2, c=c, x=x, y=y)
    if c <= 0.0:
        raise ParameterDomainError(f"Phi2 requires c > 0, got c={c}")
    if y == 0.0:
        return _log_kummer(b1, c, x, ctrl)
    if x == 0.0:
        return _log_kummer(b2, c, y, ctrl)

    shift = 0.0
    if min(x, y) < 0.0:
        # Phi2(b1, b2; c; x, y) = e^x Phi2(c - b1 - b2, b2; c; -x, y - x)
        # and its mirror image on y; both leave nonnegative arguments.
        rest = c - b1 - b2
        if x <= y:
            shift, b1, x, y = x, rest, -x, y - x
        else:
            shift, b2, x, y = y, rest, x - y, -y
        if y == 0.0:
            log_abs, sign = _log_kummer(b1, c, x, ctrl)
            return shift + log_abs, sign
        if x == 0.0:
            log_abs, sign = _log_kummer(b2, c, y, ctrl)
            return shift + log_abs, sign

    log_abs, sign = _phi2_single_sum(b1, b2, c, x, y, ctrl)
    return shift + log_abs, sign


def humbert_phi2(b1: float, b2: float, c: float, x: float, y: float,
                 ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """
    Humbert's bivariate confluent hypergeometric function Phi2.

    Evaluated as the single sum over k of (b2)_k y^k / ((c)_k k!) times
    1F1(b1; c + k; x), after moving negative arguments to the positive side.

    Raises:
        ParameterDomainError: c <= 0 or a non-finite input.
        SeriesConvergenceError: no convergence within ctrl.max_terms.
    """
    log_abs, sign = _log_phi2(b1, b2, c, x, y, ctrl)
    with np.errstate(over="ignore"):
        return float(sign * np.exp(log_abs))


def log_humbert_phi2(b1: float, b2: float, c: float, x: float, y: float,
                     ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """ln Phi2 for arguments where the function is positive."""
    log_abs, sign = _log_phi2(b1, b2, c, x, y, ctrl)
    if sign <= 0.0:
        raise ParameterDomainError(
            f"Phi2({b1}, {b2}; {c}; {x}, {y}) is not positive; "
            "its logarithm is undefined"
        )
    return log_abs


def integrate_adaptive(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    rel_tol: float = DEFAULT_NUMERICS.quad_rel_tol,
    limit: int = DEFAULT_NUMERICS.quad_subdivision_limit
) -> float:
    """
    Adaptive Gauss-Kronrod quadrature of f over [lo, hi].

    Args:
        f: Integrand, finite on [lo, hi] (integrable endpoint singularities
            are tolerated).
        lo: Lower limit.
        hi: Upper limit; a finite truncation of an infinite range.
        rel_tol: Requested relative accuracy.
        limit: Maximum number of subintervals.

    Raises:
        ParameterDomainError: lo >= hi.
        QuadratureError: the estimate did not converge within the subinterval limit.
    """
    if not lo < hi:
        raise ParameterDomainError(f"integration requires lo < hi, got "
                                   f"[{lo}, {hi}]")
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abs_err = integrate.quad(f, lo, hi, epsabs=0.0,
                                            epsrel=rel_tol, limit=limit)
        except integrate.IntegrationWarning as e:
            raise QuadratureError(
                f"quadrature over [{lo}, {hi}] did not converge within "
                f"{limit} subdivisions: {e}"
            ) from e
    logger.debug(f"quad over [{lo}, {hi}] = {value} (+/- {abs_err})")
    return float(value)
