"""
Monte Carlo synthesis of kappa-mu shadowed envelopes and crossing counters.

Random streams are split from the configured seed with
np.random.SeedSequence(seed, spawn_key=(k,)):

    k = 0        shadowing process xi(t)
    k = j + 1    real multipath component Z_j(t)

so a trace depends only on the seed and the configuration.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy import stats

from config import DEFAULT_SIMULATION, TRACE_HEADER, SimulationDefaults
from core.errors import NumericalError, ParameterDomainError, TraceFormatError
from core.model import cdf
from core.specfun import integrate_adaptive
from core.state_models import (ChannelParams, DopplerParams,
                               EmpiricalSecondOrder, EnvelopeTrace, SimConfig)


logger = logging.getLogger(__name__)

_SHADOW_STREAM = 0
# the shadow-slope expectation is integrated over g in [-8, 8]
_GAUSS_SPAN = 8.0
# logit F is not resolved once 1 - F falls below this
_LOGIT_CEILING = 1e-10


@dataclass(frozen=True)
class CrossingCounts:
    """Per-level counters of one sampled trace."""
    upcrossings: np.ndarray
    time_below_s: np.ndarray
    fade_time_s: np.ndarray
    n_fades: np.ndarray


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed,
                                                        spawn_key=(key,)))


def _sum_of_sinusoids(t: np.ndarray, f_max: float, n_sinusoids: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Unit-variance Gaussian process with a Clarke spectrum limited to f_max."""
    theta = rng.uniform(-np.pi, np.pi)
    phases = rng.uniform(-np.pi, np.pi, size=n_sinusoids)
    n = np.arange(1, n_sinusoids + 1)
    alphas = (2.0 * np.pi * n - np.pi + theta) / (4.0 * n_sinusoids)
    omegas = 2.0 * np.pi * f_max * np.cos(alphas)

    out = np.zeros_like(t)
    for omega, phase in zip(omegas, phases):
        out += np.cos(omega * t + phase)
    return out * math.sqrt(2.0 / n_sinusoids)


def _quadrature_count(mu: float) -> int:
    """Real Gaussian components of the base process, round(2 mu) and at least 1."""
    return max(1, math.floor(2.0 * mu + 0.5))


def _nakagami_quantile(g: np.ndarray, m: float) -> np.ndarray:
    """Map a standard normal value onto a unit-power Nakagami-m amplitude."""
    g = np.asarray(g, dtype=float)
    lower = stats.gamma.ppf(stats.norm.cdf(g), m, scale=1.0 / m)
    upper = stats.gamma.isf(stats.norm.sf(g), m, scale=1.0 / m)
    return np.sqrt(np.where(g <= 0.0, lower, upper))


def _logit_cdf_table(p: ChannelParams,
                     rho_grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(ln(r / r_bar), logit F_R(r)) over the grid, strictly increasing."""
    values = np.array([cdf(p, float(p.r_bar * rho)) for rho in rho_grid])
    inside = (values > 0.0) & (values < 1.0 - _LOGIT_CEILING)
    log_rho = np.log(rho_grid[inside])
    values = values[inside]
    logit = np.log(values) - np.log1p(-values)
    previous = np.maximum.accumulate(np.concatenate([[-np.inf], logit[:-1]]))
    increasing = logit > previous
    if np.count_nonzero(increasing) < 2:
        raise NumericalError(f"CDF table for {p} has fewer than 2 usable points")
    return log_rho[increasing], logit[increasing]


def _interp_extrapolated(x: np.ndarray, xp: np.ndarray, fp: np.ndarray,
                         low_slope: float) -> np.ndarray:
    """np.interp continued linearly past both ends of the table."""
    y = np.interp(x, xp, fp)
    below = x < xp[0]
    y[below] = fp[0] + low_slope * (x[below] - xp[0])
    above = x > xp[-1]
    high_slope = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
    y[above] = fp[-1] + high_slope * (x[above] - xp[-1])
    return y


def remap_marginal(r: np.ndarray, base: ChannelParams, target: ChannelParams,
                   defaults: SimulationDefaults = DEFAULT_SIMULATION) -> np.ndarray:
    """
    Memoryless map F_target^-1(F_base(r)) carrying envelope samples drawn
    with the base parameters onto the target distribution.

    Both CDFs are tabulated on a log-spaced grid of r / r_bar and
    interpolated in logit space; below the grid F_R ~ r^(2 mu) is used.
    """
    rho_grid = np.geomspace(*defaults.remap_span, defaults.remap_points)
    log_base, logit_base = _logit_cdf_table(base, rho_grid)
    log_target, logit_target = _logit_cdf_table(target, rho_grid)

    r = np.maximum(np.asarray(r, dtype=float), np.finfo(float).tiny)
    logit = _interp_extrapolated(np.log(r / base.r_bar), log_base, logit_base,
                                 2.0 * base.mu)
    log_rho = _interp_extrapolated(logit, logit_target, log_target,
                                   1.0 / (2.0 * target.mu))
    return target.r_bar * np.exp(log_rho)


def generate_shadow(cfg: SimConfig, t: np.ndarray) -> np.ndarray:
    """Correlated Nakagami-m shadowing xi(t) with E[xi^2] = 1."""
    rng = _stream(cfg.seed, _SHADOW_STREAM)
    g = _sum_of_sinusoids(t, cfg.shadow_doppler_hz, cfg.n_sinusoids, rng)
    return _nakagami_quantile(g, cfg.params.m)


def generate(cfg: SimConfig) -> EnvelopeTrace:
    """
    Synthesize R(t) with R^2 = sum_j (sigma Z_j + xi a)^2 over n = round(2 mu)
    real components.

    Each Z_j is a unit-variance Gaussian process with a Clarke spectrum and
    the dominant amplitude a = d / sqrt(n) is common to all of them, so the
    samples follow the kappa-mu shadowed law with mu_b = n / 2. When mu_b
    differs from mu, the multipath Doppler is scaled by sqrt(mu_b / mu) to
    keep the slope variance of mu and every sample is passed through
    `remap_marginal`.
    """
    p = cfg.params
    n_samples = cfg.n_samples
    n_components = _quadrature_count(p.mu)
    base = p.replace(mu=0.5 * n_components)
    f_base = cfg.doppler.f_m * math.sqrt(base.mu / p.mu)
    logger.info(f"Generating {n_samples} samples from {n_components} "
                f"component(s) at {cfg.sample_rate_hz} Hz")

    t = np.arange(n_samples) / cfg.sample_rate_hz
    sigma = math.sqrt(base.sigma2)
    amplitude = math.sqrt(base.d2 / n_components)
    shadow = generate_shadow(cfg, t) if base.d2 > 0.0 else None

    power = np.zeros(n_samples)
    for j in range(n_components):
        rng = _stream(cfg.seed, j + 1)
        z = sigma * _sum_of_sinusoids(t, f_base, cfg.n_sinusoids, rng)
        if shadow is not None:
            z += amplitude * shadow
        power += z * z
    envelope = np.sqrt(power)

    if base.mu != p.mu:
        logger.info(f"Remapping the mu={base.mu} envelope onto mu={p.mu}")
        envelope = remap_marginal(envelope, base, p)
    return EnvelopeTrace(samples=envelope,
                         sample_rate_hz=cfg.sample_rate_hz, config_echo=cfg)


def draw_envelope_samples(p: ChannelParams, n: int, seed: int) -> np.ndarray:
    """
    Independent envelope draws: R^2 = sigma^2 chi'^2(2 mu, xi^2 d^2 / sigma^2)
    with xi^2 ~ Gamma(m, 1/m).
    """
    if n < 1:
        raise ParameterDomainError(f"n >= 1 violated: got n={n}")
    rng = np.random.default_rng(seed)
    shadow_power = rng.gamma(shape=p.m, scale=1.0 / p.m, size=n)
    noncentrality = shadow_power * p.d2 / p.sigma2
    chi = rng.noncentral_chisquare(2.0 * p.mu, noncentrality)
    return np.sqrt(p.sigma2 * chi)


def shadow_slope_variance(m: float, shadow_doppler_hz: float) -> float:
    """
    Mean-square slope of the simulated xi(t), 2 pi^2 f^2 E[h'(g)^2], where
    h is the normal-to-Nakagami quantile map.
    """
    if m <= 0.0 or shadow_doppler_hz <= 0.0:
        raise ParameterDomainError(
            f"m > 0 and shadow_doppler_hz > 0 violated: m={m}, "
            f"shadow_doppler_hz={shadow_doppler_hz}"
        )

    def integrand(g: float) -> float:
        h = float(_nakagami_quantile(g, m))
        density = stats.nakagami.pdf(h, m)
        value = stats.norm.pdf(g) ** 3 / density ** 2
        # quantiles beyond double precision carry no mass
        return value if math.isfinite(value) else 0.0

    expectation = integrate_adaptive(integrand, -_GAUSS_SPAN, _GAUSS_SPAN,
                                     rel_tol=1e-8)
    return 2.0 * (math.pi * shadow_doppler_hz) ** 2 * expectation


def shadow_slope_frequency(m: float, shadow_doppler_hz: float) -> float:
    """
    The frequency f, in Hz, for which pi^2 f^2 / m equals the mean-square
    slope of the simulated xi(t).
    """
    return math.sqrt(shadow_slope_variance(m, shadow_doppler_hz) * m) / math.pi


def effective_shadow_ratio(cfg: SimConfig) -> float:
    """
    The shadow_ratio under which the closed-form crossing rate uses the
    slope variance of the simulated shadowing instead of pi^2 f_m^2 / m.
    """
    p = cfg.params
    if p.kappa == 0.0:
        return 1.0
    return (shadow_slope_frequency(p.m, cfg.shadow_doppler_hz)
            / cfg.doppler.f_m)


def count_crossings(samples: np.ndarray, levels: Sequence[float],
                    dt: float) -> CrossingCounts:
    """
    Count crossings of each level.

    An upcrossing is a sample pair with s_k < L <= s_{k+1}. time_below
    counts every sample below L; fade_time and n_fades cover only fades
    closed by an upcrossing, so a run cut off by the end of the record is
    left out of both.
    """
    samples = np.asarray(samples, dtype=float)
    levels = np.asarray(levels, dtype=float)
    n = samples.size
    upcrossings = np.zeros(levels.size, dtype=int)
    below_counts = np.zeros(levels.size, dtype=int)
    fade_counts = np.zeros(levels.size, dtype=int)

    for j, level in enumerate(levels):
        below = samples < level
        upcrossings[j] = np.count_nonzero(below[:-1] & ~below[1:])
        below_counts[j] = np.count_nonzero(below)
        trailing = 0
        if n and below[-1]:
            above = np.flatnonzero(~below)
            trailing = n - (above[-1] + 1) if above.size else n
        fade_counts[j] = below_counts[j] - trailing

    return CrossingCounts(upcrossings=upcrossings,
                          time_below_s=below_counts * dt,
                          fade_time_s=fade_counts * dt,
                          n_fades=upcrossings.copy())


def measure(trace: EnvelopeTrace, d: DopplerParams,
            grid: Sequence[float]) -> EmpiricalSecondOrder:
    """
    Empirical crossing rate and fade duration at thresholds given in dB
    relative to the trace rms.
    """
    thresholds = np.asarray(grid, dtype=float)
    if thresholds.size == 0:
        raise ParameterDomainError("threshold grid must not be empty")
    if not np.all(np.isfinite(thresholds)) or np.any(np.diff(thresholds) <= 0):
        raise ParameterDomainError(
            "thresholds strictly increasing and finite violated")
    if trace.samples.size == 0:
        raise ParameterDomainError("trace must not be empty")

    rms = float(np.sqrt(np.mean(trace.samples ** 2)))
    levels = rms * 10.0 ** (thresholds / 20.0)
    counts = count_crossings(trace.samples, levels, 1.0 / trace.sample_rate_hz)

    duration = trace.duration_s
    lcr = counts.upcrossings / (duration * d.f_m)
    afd = np.zeros(thresholds.size)
    closed = counts.n_fades > 0
    afd[closed] = counts.fade_time_s[closed] / counts.n_fades[closed] * d.f_m
    logger.info(f"Measured {thresholds.size} thresholds over {duration:.1f} s; "
                f"max upcrossings {counts.upcrossings.max()}")

    return EmpiricalSecondOrder(
        thresholds_db=thresholds, rms=rms,
        upcrossings=counts.upcrossings, time_below_s=counts.time_below_s,
        fade_time_s=counts.fade_time_s, n_fades=counts.n_fades,
        duration_s=duration, f_m=d.f_m, lcr_normalized=lcr,
        afd_normalized=afd,
    )


def write_trace(trace: EnvelopeTrace, path: Union[str, Path]) -> None:
    """Write the kms-trace v1 layout: header, sample rate, one amplitude per line."""
    lines = [TRACE_HEADER, f"sample_rate_hz={trace.sample_rate_hz:.17g}"]
    lines.extend(f"{value:.12g}" for value in trace.samples)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote {trace.samples.size} samples to {path}")


def read_trace(path: Union[str, Path]) -> EnvelopeTrace:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise TraceFormatError(f"cannot read trace '{path}': {e}") from e

    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise TraceFormatError(
            f"'{path}': first line must be '{TRACE_HEADER}'")
    if len(lines) < 2 or not lines[1].startswith("sample_rate_hz="):
        raise TraceFormatError(
            f"'{path}': second line must be 'sample_rate_hz=<value>'")
    try:
        sample_rate = float(lines[1].split("=", 1)[1])
    except ValueError as e:
        raise TraceFormatError(f"'{path}': bad sample rate: {e}") from e

    values = []
    for number, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise TraceFormatError(
                f"'{path}' line {number}: not a number: {line!r}") from None
    if not values:
        raise TraceFormatError(f"'{path}': trace holds no samples")

    try:
        return EnvelopeTrace(samples=np.array(values),
                             sample_rate_hz=sample_rate)
    except ValidationError as e:
        raise TraceFormatError(
            f"'{path}': {e.errors()[0]['msg']}") from e
