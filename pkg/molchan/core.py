# MolChan Module
# -*- coding: utf-8 -*-
"""
 Python module to model, calibrate and simulate a sprayed-chemical
 molecular communication link read out by a metal-oxide gas sensor

 Core Classes and Helper Functions

 Classes
  * SystemConfig(distance, spray_duration, initial_voltage)
        Experiment knobs: distance in meters, spray duration in ms, initial sensor voltage in volts
  * ChannelCoefficients(a, b, c)
        Amplitude, effective diffusion and effective velocity of the end-to-end response
  * ConcentrationParams(molecule_count, diffusion, velocity, distance)
  * SensorParams(scale, exponent=-0.65, reference_resistance=1.0)
  * CoefficientSurfaces(f_betas, g_betas, L_betas, b_star)
        Linear maps from a SystemConfig to a, c and the noise standard deviation
  * EvaluationOptions(t_min=0.1, response_cap=1e6, underflow_floor=1e-30, exponent=-0.65)

 Module Functions
    set_debug(toggle, color)                        # Activate verbose debugging output
    set_log_level(level)                            # off, info or debug (MOLCHAN_LOG values)
    error_json(number, payload)                     # Error details as a dict
    termcolor(color)                                # Terminal colour codes for CLI output

    eval_bracket(t, d, b, c)                        # Advection-diffusion bracket of the response
    eval_impulse_response(t, coeffs, d, opts)       # h(t; a, b, c) = a * bracket ** -0.65
    eval_f(config, surfaces)                        # Amplitude surface
    eval_g(config, surfaces)                        # Velocity surface
    eval_L(config, surfaces)                        # Noise std surface, clamped at SIGMA_FLOOR
    surface_coefficients(config, surfaces)          # ChannelCoefficients implied by the surfaces
    eval_universal_response(t, config, surfaces, opts)
    eval_legacy_response(t, a, b, c, d)             # Older correction-factor propagation model
    eval_concentration(t, params)                   # Molecule concentration at the sensor
    eval_end_to_end_resistance(t, params, sensor)   # Sensor resistance driven by eval_concentration
    resistance_from_concentration(C, params)        # R_s = a1 * C ** n
    resistance_ratio(C, params)                     # R_s / R_0 = (a1 / R_0) * C ** n
    estimate_power_law_exponent(points)             # Log-log slope of (C, R_s/R_0) points
    peak_time(b, c, d)                              # Time of the bracket maximum

 All evaluators accept a scalar time (returning a float) or a numpy array of
 times (returning an array).  Times are seconds from spray onset.

"""

# Modules
from collections import namedtuple
import logging
import math
import sys

import numpy as np
from colorama import Fore, Style, init

# Colorama terminal color capability for all platforms
init()

version_tuple = (1, 0, 0)
version = __version__ = "%d.%d.%d" % version_tuple

log = logging.getLogger(__name__)

# Model Constants
SENSOR_EXPONENT = -0.65     # log-log slope of the alcohol sensitivity line
B_STAR = 0.1950             # fixed effective diffusion from the per-trial average
T_MIN = 0.1                 # seconds, the model is undefined closer to spray onset
RESPONSE_CAP = 1e6          # largest response value ever returned
UNDERFLOW_FLOOR = 1e-30     # bracket values below this are treated as zero
SIGMA_FLOOR = 1e-6          # smallest noise standard deviation handed out by eval_L
AMPLITUDE_FLOOR = 1e-3      # smallest a + N used when synthesising traces

# Calibrated hull (the grid the published surfaces were estimated on)
HULL_DISTANCE = (2.0, 5.0)          # m
HULL_SPRAY_DURATION = (50.0, 200.0) # ms
HULL_INITIAL_VOLTAGE = (1.0, 1.9)   # V

# Default Sampling Grid
DEFAULT_T_START = 0.5
DEFAULT_T_END = 60.0
DEFAULT_T_STEP = 0.1

# Output Files
SURFACES_FILE = 'surfaces.txt'
TABLE_FILE = 'coefficients.csv'
DIAGNOSTICS_FILE = 'diagnostics.txt'

# trial id of a trace averaged over several trials
AGGREGATE_TRIAL = -1

# MolChan Error Response Codes
ERR_DOMAIN = 800
ERR_INPUT = 801
ERR_PARSE = 802
ERR_NUMERIC = 803
ERR_CONVERGE = 804
ERR_IO = 805
ERR_STAGE = 806

error_codes = {
    ERR_DOMAIN: "Argument Outside Model Domain",
    ERR_INPUT: "Invalid Input",
    ERR_PARSE: "Malformed Trace or Surfaces File",
    ERR_NUMERIC: "Numerical Failure During Fit",
    ERR_CONVERGE: "Fit Did Not Converge",
    ERR_IO: "Unable to Read or Write File",
    ERR_STAGE: "Calibration Stage Failed",
    None: "Unknown Error",
}


class MolChanError(Exception):
    code = None


class DomainError(MolChanError, ValueError):
    code = ERR_DOMAIN


class InputError(MolChanError, ValueError):
    code = ERR_INPUT


class ParseError(InputError):
    code = ERR_PARSE

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = 'line %d: %s' % (lineno, message)
        super(ParseError, self).__init__(message)
        self.lineno = lineno


class NumericalError(MolChanError, ArithmeticError):
    code = ERR_NUMERIC

    def __init__(self, message, last_iterate=None):
        super(NumericalError, self).__init__(message)
        self.last_iterate = last_iterate


class CalibrationError(MolChanError):
    code = ERR_STAGE

    def __init__(self, stage, trace_id, cause):
        super(CalibrationError, self).__init__(
            'stage %r failed on trace %r: %s' % (stage, trace_id, cause)
        )
        self.stage = stage
        self.trace_id = trace_id
        self.cause = cause
        if getattr(cause, 'code', None) is not None:
            self.code = cause.code


def error_json(number=None, payload=None):
    """Return error details as a dict"""
    vals = (error_codes.get(number, error_codes[None]), str(number), payload)
    log.debug("ERROR %s - %s - payload: %r", *vals)
    return {"Error": vals[0], "Err": vals[1], "Payload": payload}

def set_debug(toggle=True, color=True):
    """Enable molchan verbose logging"""
    pkg_log = logging.getLogger('molchan')
    if toggle:
        if color:
            logging.basicConfig(
                format=Fore.RED + Style.BRIGHT + "%(levelname)s:%(message)s" + Style.RESET_ALL,
                level=logging.DEBUG,
            )
        else:
            logging.basicConfig(format="%(levelname)s:%(message)s", level=logging.DEBUG)
        pkg_log.setLevel(logging.DEBUG)
        log.debug("MolChan [%s]", __version__)
        log.debug("Python %s on %s", sys.version, sys.platform)
        log.debug("Using numpy %s", np.__version__)
    else:
        pkg_log.setLevel(logging.NOTSET)

LOG_LEVELS = {
    'off': logging.ERROR,
    'info': logging.INFO,
    'debug': logging.DEBUG,
}

def set_log_level(level, color=False):
    """Apply a MOLCHAN_LOG style level name (off, info or debug)"""
    name = (level or 'off').strip().lower()
    if name not in LOG_LEVELS:
        raise InputError('unknown log level %r, expected one of %s' % (level, ', '.join(LOG_LEVELS)))
    if name == 'debug':
        set_debug(True, color)
        return
    logging.basicConfig(format="%(levelname)s:%(message)s")
    logging.getLogger('molchan').setLevel(LOG_LEVELS[name])

TermColors = namedtuple("TermColors", "bold, normal, yellow")

def termcolor(color=True):
    if color is False:
        return TermColors("", "", "")
    return TermColors(
        Style.BRIGHT,
        Style.RESET_ALL,
        Fore.YELLOW,
    )


########################################################
#                   Domain Types
########################################################

def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise DomainError('%s must be positive and finite, got %r' % (name, value))
    return value

def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise DomainError('%s must be finite, got %r' % (name, value))
    return value

def _within(value, bounds):
    return bounds[0] <= value <= bounds[1]


class SystemConfig(namedtuple('SystemConfig', 'distance spray_duration initial_voltage')):
    """
    Experiment knobs.  Tuple order gives the lexicographic
    (distance, spray_duration, initial_voltage) ordering used everywhere.

    Args:
        distance (float): transmitter to sensor separation in meters
        spray_duration (float): valve opening time in milliseconds
        initial_voltage (float): sensor reading before transmission in volts
    """
    __slots__ = ()

    def __new__(cls, distance, spray_duration, initial_voltage):
        return super(SystemConfig, cls).__new__(
            cls,
            _positive('distance', distance),
            _positive('spray_duration', spray_duration),
            _positive('initial_voltage', initial_voltage),
        )

    @property
    def in_calibrated_hull(self):
        return (
            _within(self.distance, HULL_DISTANCE)
            and _within(self.spray_duration, HULL_SPRAY_DURATION)
            and _within(self.initial_voltage, HULL_INITIAL_VOLTAGE)
        )

    def label(self):
        return 'd=%r m, s=%r ms, v=%r V' % self


class ChannelCoefficients(namedtuple('ChannelCoefficients', 'a b c')):
    """a: amplitude, b: effective diffusion, c: effective velocity"""
    __slots__ = ()

    def __new__(cls, a, b, c):
        return super(ChannelCoefficients, cls).__new__(
            cls, _positive('a', a), _positive('b', b), _finite('c', c)
        )


class ConcentrationParams(namedtuple('ConcentrationParams', 'molecule_count diffusion velocity distance')):
    __slots__ = ()

    def __new__(cls, molecule_count, diffusion, velocity, distance):
        return super(ConcentrationParams, cls).__new__(
            cls,
            _positive('molecule_count', molecule_count),
            _positive('diffusion', diffusion),
            _finite('velocity', velocity),
            _positive('distance', distance),
        )


class SensorParams(namedtuple('SensorParams', 'scale exponent reference_resistance')):
    """Power law R_s = scale * C ** exponent of a metal-oxide sensor"""
    __slots__ = ()

    def __new__(cls, scale, exponent=SENSOR_EXPONENT, reference_resistance=1.0):
        return super(SensorParams, cls).__new__(
            cls,
            _positive('scale', scale),
            _finite('exponent', exponent),
            _positive('reference_resistance', reference_resistance),
        )

    @property
    def ratio_scale(self):
        return self.scale / self.reference_resistance


SURFACE_KEYS = (
    'f_beta_d', 'f_beta_s', 'f_beta_v', 'f_beta_0',
    'g_beta_d', 'g_beta_v', 'g_beta_0',
    'L_beta_d', 'L_beta_s', 'L_beta_v', 'L_beta_0',
    'b_star',
)


class CoefficientSurfaces(namedtuple('CoefficientSurfaces', 'f_betas g_betas L_betas b_star')):
    """
    Linear coefficient surfaces

        f(d, s, v) = f_betas . (d, s, v, 1)     amplitude a
        g(d, v)    = g_betas . (d, v, 1)        velocity c
        L(d, s, v) = L_betas . (d, s, v, 1)     noise standard deviation

    b_star is the fixed effective diffusion shared by every config.
    """
    __slots__ = ()

    def __new__(cls, f_betas, g_betas, L_betas, b_star=B_STAR):
        f_betas = tuple(_finite('f_betas', x) for x in f_betas)
        g_betas = tuple(_finite('g_betas', x) for x in g_betas)
        L_betas = tuple(_finite('L_betas', x) for x in L_betas)
        if len(f_betas) != 4 or len(g_betas) != 3 or len(L_betas) != 4:
            raise DomainError('surfaces need 4 f, 3 g and 4 L betas')
        return super(CoefficientSurfaces, cls).__new__(
            cls, f_betas, g_betas, L_betas, _positive('b_star', b_star)
        )

    def to_dict(self):
        return dict(zip(SURFACE_KEYS, self.f_betas + self.g_betas + self.L_betas + (self.b_star,)))

    @classmethod
    def from_dict(cls, values):
        missing = [k for k in SURFACE_KEYS if k not in values]
        if missing:
            raise InputError('surfaces missing keys: %s' % ', '.join(missing))
        v = [values[k] for k in SURFACE_KEYS]
        return cls(v[0:4], v[4:7], v[7:11], v[11])


PAPER_SURFACES = CoefficientSurfaces(
    f_betas=(-0.4188, 0.0098, -1.7873, 4.6469),
    g_betas=(0.0709, 0.1362, -0.0427),
    L_betas=(-0.1258, 0.0014, -0.2403, 0.9738),
    b_star=B_STAR,
)


class EvaluationOptions(namedtuple('EvaluationOptions', 't_min response_cap underflow_floor exponent')):
    __slots__ = ()

    def __new__(cls, t_min=T_MIN, response_cap=RESPONSE_CAP, underflow_floor=UNDERFLOW_FLOOR,
                exponent=SENSOR_EXPONENT):
        exponent = _finite('exponent', exponent)
        if exponent == 0:
            raise DomainError('exponent must be non-zero')
        return super(EvaluationOptions, cls).__new__(
            cls,
            _positive('t_min', t_min),
            _positive('response_cap', response_cap),
            _positive('underflow_floor', underflow_floor),
            exponent,
        )

DEFAULT_EVALUATION = EvaluationOptions()

ClampedSigma = namedtuple('ClampedSigma', 'sigma clamped')


########################################################
#                  Model Evaluation
########################################################

def _times(t):
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0

def _out(value, scalar):
    return float(value) if scalar else value

def _check_times(t, lower=0.0, inclusive=False, what='t'):
    bad = ~np.isfinite(t) | ((t < lower) if inclusive else (t <= lower))
    if np.any(bad):
        first = float(np.ravel(t)[np.argmax(np.ravel(bad))])
        if inclusive:
            raise DomainError('%s=%r is below the model minimum %r' % (what, first, lower))
        raise DomainError('%s must be positive, got %r' % (what, first))

def eval_bracket(t, d, b, c):
    """d / sqrt(4 pi b t^3) * exp(-(d - c t)^2 / (4 b t))"""
    t, scalar = _times(t)
    _check_times(t)
    d = _positive('d', d)
    b = _positive('b', b)
    c = _finite('c', c)
    with np.errstate(under='ignore'):
        value = d / np.sqrt(4.0 * np.pi * b * t ** 3) * np.exp(-(d - c * t) ** 2 / (4.0 * b * t))
    return _out(value, scalar)

def _respond(a, bracket, opts):
    # bracket ** exponent blows up as the bracket vanishes, cap it
    safe = np.maximum(bracket, opts.underflow_floor)
    with np.errstate(over='ignore'):
        value = a * safe ** opts.exponent
    if opts.exponent < 0:
        value = np.where(bracket < opts.underflow_floor, opts.response_cap, value)
    return np.minimum(value, opts.response_cap)

def eval_impulse_response(t, coeffs, d, opts=None):
    """
    End-to-end impulse response h(t; a, b, c) = a * bracket(t, d, b, c) ** exponent

    Args:
        t (float or array): seconds from spray onset, at least opts.t_min
        coeffs (ChannelCoefficients): fitted or surface-implied coefficients
        d (float): distance in meters
        opts (EvaluationOptions, optional): t_min, cap, floor and exponent

    Response:
        observation units, never above opts.response_cap
    """
    opts = opts or DEFAULT_EVALUATION
    t, scalar = _times(t)
    _check_times(t, opts.t_min, inclusive=True)
    bracket = eval_bracket(t, d, coeffs.b, coeffs.c)
    return _out(_respond(coeffs.a, bracket, opts), scalar)

def eval_f(config, surfaces):
    bd, bs, bv, b0 = surfaces.f_betas
    return bd * config.distance + bs * config.spray_duration + bv * config.initial_voltage + b0

def eval_g(config, surfaces):
    # velocity does not depend on spray duration
    bd, bv, b0 = surfaces.g_betas
    return bd * config.distance + bv * config.initial_voltage + b0

def eval_L(config, surfaces, sigma_floor=SIGMA_FLOOR):
    """Noise standard deviation, clamped at sigma_floor where the plane goes negative"""
    bd, bs, bv, b0 = surfaces.L_betas
    raw = bd * config.distance + bs * config.spray_duration + bv * config.initial_voltage + b0
    if raw < sigma_floor:
        log.debug("L surface is %r at %s, clamped to %r", raw, config.label(), sigma_floor)
        return ClampedSigma(sigma_floor, True)
    return ClampedSigma(raw, False)

def surface_coefficients(config, surfaces):
    """ChannelCoefficients (f, b_star, g) for a config, DomainError if f is not positive"""
    a = eval_f(config, surfaces)
    if a <= 0:
        raise DomainError('amplitude surface is %r at %s' % (a, config.label()))
    return ChannelCoefficients(a, surfaces.b_star, eval_g(config, surfaces))

def eval_universal_response(t, config, surfaces, opts=None):
    """h(t; d, s, v): the impulse response with a = f, b = b_star and c = g"""
    opts = opts or DEFAULT_EVALUATION
    t, scalar = _times(t)
    _check_times(t, opts.t_min, inclusive=True)
    bracket = eval_bracket(t, config.distance, surfaces.b_star, eval_g(config, surfaces))
    return _out(_respond(eval_f(config, surfaces), bracket, opts), scalar)

def eval_legacy_response(t, a, b, c, d):
    """Older propagation-only model (a / sqrt(t^3)) * exp(-b (d - c t)^2 / t)"""
    t, scalar = _times(t)
    _check_times(t)
    b = _positive('b', b)
    with np.errstate(under='ignore'):
        value = a / np.sqrt(t ** 3) * np.exp(-b * (d - c * t) ** 2 / t)
    return _out(value, scalar)

def eval_concentration(t, params):
    """Advection-diffusion concentration of params.molecule_count molecules at the sensor"""
    bracket = eval_bracket(t, params.distance, params.diffusion, params.velocity)
    return params.molecule_count * bracket

def resistance_from_concentration(C, params):
    """R_s = a1 * C ** n, decreasing in C for negative n"""
    C, scalar = _times(C)
    if np.any(~(C > 0)):
        raise DomainError('concentration must be positive for the sensor power law')
    return _out(params.scale * C ** params.exponent, scalar)

def resistance_ratio(C, params):
    """R_s / R_0 = a2 * C ** n with a2 = a1 / R_0"""
    C, scalar = _times(C)
    if np.any(~(C > 0)):
        raise DomainError('concentration must be positive for the sensor power law')
    return _out(params.ratio_scale * C ** params.exponent, scalar)

def eval_end_to_end_resistance(t, params, sensor):
    """Sensor resistance a1 * C(t) ** n before the constants are lumped into (a, b, c)"""
    return resistance_from_concentration(eval_concentration(t, params), sensor)

def estimate_power_law_exponent(points):
    """
    Least-squares slope of log(ratio) against log(concentration)

    Args:
        points: sequence of (concentration, resistance ratio) pairs, both positive

    Response:
        the exponent n of ratio = a2 * C ** n
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise DomainError('need at least 2 (concentration, ratio) points')
    if np.any(~(pts > 0)):
        raise DomainError('power law points must have positive coordinates')
    x = np.log(pts[:, 0])
    y = np.log(pts[:, 1])
    dx = x - x.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0:
        raise DomainError('power law points need at least two distinct concentrations')
    return float(np.dot(dx, y - y.mean()) / sxx)

def peak_time(b, c, d):
    """
    Time at which the bracket peaks (the response dips) for drift c

    Solves c^2 t^2 + 6 b t - d^2 = 0.  The rationalised root
    d^2 / (3b + sqrt(9b^2 + c^2 d^2)) also covers c = 0, where it is d^2 / (6b).
    """
    b = _positive('b', b)
    d = _positive('d', d)
    c = _finite('c', c)
    return d * d / (3.0 * b + math.sqrt(9.0 * b * b + c * c * d * d))
