# MolChan Noise Module
# -*- coding: utf-8 -*-
"""
 Additive amplitude noise: O(t) = (f(d, s, v) + N) * bracket ** -0.65 with
 E[N] = 0 and std(N) = L(d, s, v).  One N is drawn per trial.

 Classes
    NoiseDistribution                               # GAUSSIAN, UNIFORM, LAPLACE
    NoiseSpec(surfaces, distribution, sigma_floor, amplitude_floor, silent)
    NoiseSampleSet(samples, config)
    AmplitudeDraw(noise, amplitude, clamped)

 Functions
    noise_sample(a_fit, config, surfaces)           # N = a_fit - f(config)
    noise_samples_by_config(fits, surfaces)         # {SystemConfig: NoiseSampleSet}
    sample_noise(config, spec, rng_seed, count)     # count draws of N
    amplitude_draw(config, spec, rng_seed)          # The per-trial f + N, floored
    generate_noisy_trace(config, spec, times, rng_seed, opts)
    additive_noise(trace, surfaces, opts)           # O(t) - h(t) residual series
    noise_stats(samples)                            # (mean, std)

"""

# Modules
from collections import OrderedDict, namedtuple
from enum import Enum
import logging
import math

import numpy as np

from .core import (
    AMPLITUDE_FLOOR, DEFAULT_EVALUATION, SIGMA_FLOOR,
    ChannelCoefficients, CoefficientSurfaces, DomainError, InputError,
    eval_f, eval_g, eval_L, eval_impulse_response, eval_universal_response,
)
from .estimation import Trace

log = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)
SQRT2 = math.sqrt(2.0)


class NoiseDistribution(Enum):
    """Zero-mean draws scaled to standard deviation sigma"""
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"     # on [-sqrt(3) sigma, sqrt(3) sigma]
    LAPLACE = "laplace"     # scale sigma / sqrt(2)

    @classmethod
    def is_known(cls, value):
        return value in cls._value2member_map_

    @classmethod
    def lookup(cls, value):
        if isinstance(value, cls):
            return value
        name = str(value).strip().lower()
        if not cls.is_known(name):
            raise InputError('unknown noise distribution %r, expected one of %s'
                             % (value, ', '.join(m.value for m in cls)))
        return cls(name)

    def draw(self, rng, sigma, size):
        if self is NoiseDistribution.UNIFORM:
            return rng.uniform(-SQRT3 * sigma, SQRT3 * sigma, size)
        if self is NoiseDistribution.LAPLACE:
            return rng.laplace(0.0, sigma / SQRT2, size)
        return rng.normal(0.0, sigma, size)


class NoiseSpec(namedtuple('NoiseSpec', 'surfaces distribution sigma_floor amplitude_floor silent')):
    """
    Noise generation settings.

    Args:
        surfaces (CoefficientSurfaces): supplies f, g, b_star and the L surface
        distribution (NoiseDistribution or str): default gaussian
        sigma_floor (float): smallest sigma taken from the L surface
        amplitude_floor (float): smallest f + N used to build a trace
        silent (bool): no draw at all, N = 0 exactly
    """
    __slots__ = ()

    def __new__(cls, surfaces, distribution=NoiseDistribution.GAUSSIAN, sigma_floor=SIGMA_FLOOR,
                amplitude_floor=AMPLITUDE_FLOOR, silent=False):
        if not isinstance(surfaces, CoefficientSurfaces):
            raise InputError('NoiseSpec needs CoefficientSurfaces, got %r' % (surfaces,))
        if not (sigma_floor > 0 and amplitude_floor > 0):
            raise InputError('sigma_floor and amplitude_floor must be positive')
        return super(NoiseSpec, cls).__new__(
            cls, surfaces, NoiseDistribution.lookup(distribution),
            float(sigma_floor), float(amplitude_floor), bool(silent)
        )


class NoiseSampleSet(namedtuple('NoiseSampleSet', 'samples config')):
    __slots__ = ()

    def __new__(cls, samples, config):
        samples = tuple(float(x) for x in samples)
        if not all(math.isfinite(x) for x in samples):
            raise InputError('noise samples must be finite')
        return super(NoiseSampleSet, cls).__new__(cls, samples, config)

    def __len__(self):
        return len(self.samples)


AmplitudeDraw = namedtuple('AmplitudeDraw', 'noise amplitude clamped')


def noise_sample(a_fit, config, surfaces):
    return a_fit - eval_f(config, surfaces)

def noise_samples_by_config(fits, surfaces):
    """
    Group (SystemConfig, FitResult) pairs by config and turn each fitted
    amplitude into a noise sample against the f surface.
    """
    grouped = OrderedDict()
    for config, fit in fits:
        grouped.setdefault(config, []).append(noise_sample(fit.coefficients.a, config, surfaces))
    return OrderedDict((cfg, NoiseSampleSet(grouped[cfg], cfg)) for cfg in sorted(grouped))

def _sigma(config, spec):
    return eval_L(config, spec.surfaces, spec.sigma_floor).sigma

def sample_noise(config, spec, rng_seed, count):
    """count independent draws of N for one config, reproducible from rng_seed"""
    count = int(count)
    if count < 1:
        raise InputError('count must be at least 1, got %r' % count)
    if spec.silent:
        return NoiseSampleSet(np.zeros(count), config)
    rng = np.random.default_rng(rng_seed)
    return NoiseSampleSet(spec.distribution.draw(rng, _sigma(config, spec), count), config)

def amplitude_draw(config, spec, rng_seed):
    """The amplitude f + N of one trial, raised to amplitude_floor when it falls below"""
    f = eval_f(config, spec.surfaces)
    if spec.silent:
        noise = 0.0
    else:
        rng = np.random.default_rng(rng_seed)
        noise = float(spec.distribution.draw(rng, _sigma(config, spec), 1)[0])
    amplitude = f + noise
    if amplitude < spec.amplitude_floor:
        log.debug("amplitude %r at %s raised to %r", amplitude, config.label(), spec.amplitude_floor)
        return AmplitudeDraw(noise, spec.amplitude_floor, True)
    return AmplitudeDraw(noise, amplitude, False)

def _check_generation_times(times, opts):
    t = tuple(float(x) for x in times)
    for k, value in enumerate(t):
        if not (math.isfinite(value) and value >= opts.t_min):
            raise InputError('time %r at sample %d is below t_min=%r' % (value, k, opts.t_min))
        if k and value <= t[k - 1]:
            raise InputError('times are not strictly increasing at sample %d' % k)
    return t

def generate_noisy_trace(config, spec, times, rng_seed, opts=None, trial_id=0, draw=None):
    """
    One synthetic trial: a single draw of N scales the whole response.

    Args:
        config (SystemConfig)
        spec (NoiseSpec)
        times (sequence of float): strictly increasing, all >= opts.t_min
        rng_seed (int)
        opts (EvaluationOptions, optional)
        trial_id (int): stored on the returned Trace
        draw (AmplitudeDraw, optional): use this draw instead of making one

    Response:
        Trace
    """
    opts = opts or DEFAULT_EVALUATION
    t = _check_generation_times(times, opts)
    draw = draw or amplitude_draw(config, spec, rng_seed)
    coeffs = ChannelCoefficients(draw.amplitude, spec.surfaces.b_star, eval_g(config, spec.surfaces))
    try:
        values = eval_impulse_response(np.asarray(t), coeffs, config.distance, opts) if t else ()
    except DomainError as err:
        raise InputError(str(err))
    return Trace(t, values, config, trial_id)

def additive_noise(trace, surfaces, opts=None):
    """Per-sample residual O(t) - h(t; d, s, v) of a trace against the surfaces"""
    t, obs = trace.arrays()
    try:
        return obs - np.asarray(eval_universal_response(t, trace.config, surfaces, opts))
    except DomainError as err:
        raise InputError(str(err))

def noise_stats(samples):
    """Sample mean and (n - 1) standard deviation"""
    values = samples.samples if isinstance(samples, NoiseSampleSet) else tuple(samples)
    if len(values) < 2:
        raise InputError('noise std needs at least 2 samples, got %d' % len(values))
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1))
