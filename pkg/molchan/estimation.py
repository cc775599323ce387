# MolChan Estimation Module
# -*- coding: utf-8 -*-
"""
 Calibration of the end-to-end channel model from sensor traces

 Classes
    Trace(times, values, config, trial_id)          # One trial: timestamps, readings, SystemConfig
    FitOptions(initial_guess=None, max_iterations=200, relative_sse_tolerance=1e-8,
               lower_bounds=(0, 0), damping_init=1e-3, fit_window_start=T_MIN,
               evaluation=DEFAULT_EVALUATION, workers=1)
    FitResult(coefficients, rmse, sse, iterations, converged)
    CoefficientTable                                # Per-config mean/std of a and c
    CalibrationResult(surfaces, table, per_trace_fits, free_fits, diagnostics, clamped_L,
                      noise_samples)

 Functions
    fit_channel(trace, options)                     # Free (a, b, c) least squares fit
    fit_channel_fixed_b(trace, b_star, options)     # (a, c) fit with b held at b_star
    fit_legacy_channel(trace, options)              # Fit of the older propagation-only model
    compare_models(trace, options)                  # Both fits side by side
    linearized_guess(trace, exponent, b_fixed)      # Log-linear initial estimate
    extremum_guess(trace, exponent, b_fixed)        # Fallback initial estimate
    rmse(trace, predicted)
    compute_b_star(fits)
    aggregate_coefficients(fits)                    # [(SystemConfig, FitResult)] -> CoefficientTable
    marginal_effects(fits, axis)                    # Per-level averages for one system parameter
    fit_linear_surfaces(table, b_star)              # OLS of the f, g and L planes
    surface_residuals(table, surfaces)              # Per-surface regression RMSE
    calibrate(dataset, options)                     # Full two-stage pipeline
    predict_trace(config, surfaces, times, opts)

"""

# Modules
from collections import OrderedDict, namedtuple
from concurrent.futures import ThreadPoolExecutor
import logging
import math

import numpy as np
import scipy.linalg

from .core import (
    DEFAULT_EVALUATION, SENSOR_EXPONENT, T_MIN, B_STAR,
    ChannelCoefficients, CoefficientSurfaces, SystemConfig,
    DomainError, InputError, MolChanError, NumericalError, CalibrationError,
    eval_bracket, eval_impulse_response, eval_legacy_response,
    eval_universal_response, eval_f, eval_L, _positive,
)

log = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 8         # usable samples needed before a fit is attempted
FD_STEP = 1e-6              # forward difference step, absolute and relative
DAMPING_RETRIES = 12        # damping increases tried before giving up on an iteration
SSE_FLOOR_RTOL = 1e-14      # residuals below this fraction of |obs| are rounding noise
FALLBACK_B = 0.2            # b seed when the trace cannot be linearised

AXES = ('distance', 'spray_duration', 'initial_voltage')


class Trace(namedtuple('Trace', 'times values config trial_id')):
    """
    One recorded (or simulated) sensor trial.

    Args:
        times (sequence of float): strictly increasing seconds from spray onset, all >= 0
        values (sequence of float): readings in observation units, finite
        config (SystemConfig): experiment knobs of the trial
        trial_id (int): trial number within its config, AGGREGATE_TRIAL for averages
    """
    __slots__ = ()

    def __new__(cls, times, values, config, trial_id=0):
        times = tuple(float(x) for x in times)
        values = tuple(float(x) for x in values)
        if len(times) != len(values):
            raise InputError('trace has %d times but %d values' % (len(times), len(values)))
        if not isinstance(config, SystemConfig):
            raise InputError('trace config must be a SystemConfig, got %r' % (config,))
        for k, t in enumerate(times):
            if not (math.isfinite(t) and t >= 0):
                raise InputError('trace time %r at sample %d is not a non-negative number' % (t, k))
            if k and t <= times[k - 1]:
                raise InputError('trace times are not strictly increasing at sample %d' % k)
        for k, v in enumerate(values):
            if not math.isfinite(v):
                raise InputError('trace value %r at sample %d is not finite' % (v, k))
        return super(Trace, cls).__new__(cls, times, values, config, int(trial_id))

    def arrays(self):
        return np.asarray(self.times, dtype=float), np.asarray(self.values, dtype=float)

    def label(self):
        return '%s trial %d' % (self.config.label(), self.trial_id)


class FitOptions(namedtuple('FitOptions', 'initial_guess max_iterations relative_sse_tolerance '
                                          'lower_bounds damping_init fit_window_start evaluation workers')):
    __slots__ = ()

    def __new__(cls, initial_guess=None, max_iterations=200, relative_sse_tolerance=1e-8,
                lower_bounds=(0.0, 0.0), damping_init=1e-3, fit_window_start=T_MIN,
                evaluation=DEFAULT_EVALUATION, workers=1):
        if int(max_iterations) < 1:
            raise InputError('max_iterations must be at least 1')
        if not relative_sse_tolerance > 0 or not damping_init > 0:
            raise InputError('tolerances must be positive')
        if int(workers) < 1:
            raise InputError('workers must be at least 1')
        lower_bounds = tuple(float(x) for x in lower_bounds)
        if len(lower_bounds) != 2 or min(lower_bounds) < 0:
            raise InputError('lower_bounds must be two non-negative numbers (a, b)')
        return super(FitOptions, cls).__new__(
            cls, initial_guess, int(max_iterations), float(relative_sse_tolerance),
            lower_bounds, float(damping_init), float(fit_window_start), evaluation, int(workers)
        )


FitResult = namedtuple('FitResult', 'coefficients rmse sse iterations converged')
TraceFit = namedtuple('TraceFit', 'trace_id config trial_id fit')
CoefficientRow = namedtuple('CoefficientRow', 'mean_a std_a mean_c std_c trial_count')
MarginalEffect = namedtuple('MarginalEffect', 'level mean_a std_a mean_b std_b mean_c std_c trial_count')
CalibrationResult = namedtuple(
    'CalibrationResult', 'surfaces table per_trace_fits free_fits diagnostics clamped_L noise_samples'
)


class ModelComparison(namedtuple('ModelComparison', 'universal legacy')):
    __slots__ = ()

    @property
    def better(self):
        """Name of the model with the lower RMSE, universal on ties"""
        return 'universal' if self.universal.rmse <= self.legacy.rmse else 'legacy'


########################################################
#                 Least Squares Solver
########################################################

def _fit_window(trace, options):
    if not isinstance(trace, Trace):
        raise InputError('expected a Trace, got %r' % (trace,))
    t, obs = trace.arrays()
    start = max(options.fit_window_start, options.evaluation.t_min)
    keep = t >= start
    if int(keep.sum()) < MIN_FIT_SAMPLES:
        raise InputError(
            'trace %s has %d samples at t >= %r, need %d'
            % (trace.label(), int(keep.sum()), start, MIN_FIT_SAMPLES)
        )
    return t[keep], obs[keep]

def _jacobian(residuals, theta, r):
    jac = np.empty((r.size, theta.size))
    for i in range(theta.size):
        h = max(FD_STEP, FD_STEP * abs(theta[i]))
        shifted = theta.copy()
        shifted[i] += h
        jac[:, i] = (residuals(shifted) - r) / h
    jac[~np.isfinite(jac)] = 0.0
    return jac

def _least_squares(model, theta0, obs, options, unpack, label):
    """
    Damped Gauss-Newton (Levenberg-Marquardt) minimisation of sum((obs - model(theta))^2).

    theta lives in the transformed space chosen by the caller; unpack maps it
    back to ChannelCoefficients.  Only strictly better iterates are accepted so
    equal-SSE candidates keep the earlier iterate.
    """
    def residuals(theta):
        try:
            with np.errstate(all='ignore'):
                return obs - model(theta)
        except (DomainError, OverflowError):
            return np.full(obs.shape, np.inf)

    theta = np.asarray(theta0, dtype=float)
    r = residuals(theta)
    sse = float(np.dot(r, r))
    if not math.isfinite(sse):
        raise NumericalError('%s: SSE is not finite at the initial guess' % label, last_iterate=unpack(theta))

    lam = options.damping_init
    floor = (SSE_FLOOR_RTOL * float(np.linalg.norm(obs[np.isfinite(obs)]))) ** 2
    converged = sse <= floor
    iterations = 0
    while not converged and iterations < options.max_iterations:
        iterations += 1
        jac = _jacobian(residuals, theta, r)
        grad = jac.T.dot(r)
        normal = jac.T.dot(jac)
        scale = np.diag(normal).copy()
        scale[scale <= 0] = 1.0

        accepted = False
        finite_seen = False
        for _ in range(DAMPING_RETRIES):
            try:
                step = scipy.linalg.solve(normal + lam * np.diag(scale), -grad, assume_a='sym')
            except (np.linalg.LinAlgError, ValueError):
                lam *= 10.0
                continue
            candidate = theta + step
            r_new = residuals(candidate)
            sse_new = float(np.dot(r_new, r_new))
            if math.isfinite(sse_new):
                finite_seen = True
                if sse_new < sse:
                    accepted = True
                    break
            lam *= 10.0

        if not accepted:
            if not finite_seen:
                raise NumericalError('%s: SSE diverged after %d iterations' % (label, iterations),
                                     last_iterate=unpack(theta))
            # no damping yields a reduction, the relative change is zero
            converged = True
            break

        change = (sse - sse_new) / sse
        theta, r, sse = candidate, r_new, sse_new
        lam = max(lam / 10.0, 1e-15)
        if sse <= floor or change < options.relative_sse_tolerance:
            converged = True

    log.debug("%s: %d iterations, sse=%r, converged=%r", label, iterations, sse, converged)
    return theta, sse, iterations, converged

def _result(coeffs, sse, n, iterations, converged):
    return FitResult(coeffs, math.sqrt(sse / n), sse, iterations, converged)


########################################################
#                   Initial Guesses
########################################################

def _usable(t, obs, cap):
    keep = (obs > 0) & (obs < cap) & np.isfinite(obs)
    return t[keep], obs[keep]

def linearized_guess(trace, exponent=SENSOR_EXPONENT, b_fixed=None, opts=None, window_start=T_MIN):
    """
    Initial estimate from the log of the response.

    ln h = K - 1.5 n ln t + alpha / t + gamma t with alpha = -n d^2 / (4b),
    gamma = -n c^2 / (4b) is linear in (K, alpha, gamma), so a linear solve
    over the positive, uncapped samples gives (a, b, c) directly.  c is taken
    non-negative.  Returns None when the trace cannot be linearised.
    """
    opts = opts or DEFAULT_EVALUATION
    n = exponent
    d = trace.config.distance
    t, obs = trace.arrays()
    keep = t >= max(window_start, opts.t_min)
    t, obs = _usable(t[keep], obs[keep], opts.response_cap)
    needed = 2 if b_fixed else 3
    if t.size < needed:
        return None
    y = np.log(obs) + 1.5 * n * np.log(t)
    try:
        if b_fixed:
            b = float(b_fixed)
            y = y + n * d * d / (4.0 * b * t)
            K, gamma = scipy.linalg.lstsq(np.column_stack((np.ones_like(t), t)), y)[0]
        else:
            K, alpha, gamma = scipy.linalg.lstsq(np.column_stack((np.ones_like(t), 1.0 / t, t)), y)[0]
            b = -n * d * d / (4.0 * alpha)
        if not (b > 0 and math.isfinite(b)):
            return None
        c2 = -4.0 * b * gamma / n
        c = math.sqrt(c2) if c2 > 0 else 0.0
        a = math.exp(K - n * math.log(d) + 0.5 * n * math.log(4.0 * math.pi * b) - n * d * c / (2.0 * b))
        return ChannelCoefficients(a, b, c)
    except (ValueError, OverflowError, DomainError, np.linalg.LinAlgError):
        return None

def extremum_guess(trace, exponent=SENSOR_EXPONENT, b_fixed=None, window_start=T_MIN):
    """a from the extremum sample and its bracket, c = d / t_extremum, b = 0.2"""
    t, obs = trace.arrays()
    keep = t >= window_start
    t, obs = t[keep], obs[keep]
    d = trace.config.distance
    b = float(b_fixed) if b_fixed else FALLBACK_B
    k = int(np.argmin(obs)) if exponent < 0 else int(np.argmax(obs))
    t_ext = max(t[k], window_start)
    c = d / t_ext
    value = obs[k]
    try:
        a = value / eval_bracket(t_ext, d, b, c) ** exponent if value > 0 else 1.0
    except (DomainError, ZeroDivisionError, OverflowError):
        a = 1.0
    if not (math.isfinite(a) and a > 0):
        a = 1.0
    return ChannelCoefficients(a, b, c)

def _seed(trace, options, b_fixed=None):
    if options.initial_guess is not None:
        guess = options.initial_guess
        return guess._replace(b=b_fixed) if b_fixed else guess
    opts = options.evaluation
    guess = linearized_guess(trace, opts.exponent, b_fixed, opts, options.fit_window_start)
    if guess is None:
        log.debug("trace %s could not be linearised, using the extremum guess", trace.label())
        guess = extremum_guess(trace, opts.exponent, b_fixed, max(options.fit_window_start, opts.t_min))
    return guess


########################################################
#                       Fitting
########################################################

def _log_offset(value, lower):
    return math.log(max(value - lower, 1e-300))

def fit_channel(trace, options=None):
    """
    Fit h(t; a, b, c) to a trace by nonlinear least squares.

    a and b are searched as log(a - a_min) and log(b - b_min) so the lower
    bounds always hold; c is unconstrained.

    Args:
        trace (Trace): at least MIN_FIT_SAMPLES samples with t >= fit_window_start
        options (FitOptions, optional)

    Response:
        FitResult
    """
    options = options or FitOptions()
    t, obs = _fit_window(trace, options)
    d = trace.config.distance
    lo_a, lo_b = options.lower_bounds
    opts = options.evaluation

    def unpack(theta):
        return ChannelCoefficients(lo_a + math.exp(theta[0]), lo_b + math.exp(theta[1]), theta[2])

    def model(theta):
        return eval_impulse_response(t, unpack(theta), d, opts)

    guess = _seed(trace, options)
    theta0 = (_log_offset(guess.a, lo_a), _log_offset(guess.b, lo_b), guess.c)
    theta, sse, iterations, converged = _least_squares(
        model, theta0, obs, options, unpack, 'fit %s' % trace.label()
    )
    return _result(unpack(theta), sse, t.size, iterations, converged)

def fit_channel_fixed_b(trace, b_star, options=None):
    """Fit (a, c) with b held at b_star; the returned b is b_star exactly"""
    options = options or FitOptions()
    try:
        b_star = _positive('b_star', b_star)
    except DomainError as err:
        raise InputError(str(err))
    t, obs = _fit_window(trace, options)
    d = trace.config.distance
    lo_a = options.lower_bounds[0]
    opts = options.evaluation

    def unpack(theta):
        return ChannelCoefficients(lo_a + math.exp(theta[0]), b_star, theta[1])

    def model(theta):
        return eval_impulse_response(t, unpack(theta), d, opts)

    guess = _seed(trace, options, b_fixed=b_star)
    theta0 = (_log_offset(guess.a, lo_a), guess.c)
    theta, sse, iterations, converged = _least_squares(
        model, theta0, obs, options, unpack, 'fixed-b fit %s' % trace.label()
    )
    return _result(unpack(theta), sse, t.size, iterations, converged)

def _legacy_guess(t, obs, d):
    t, obs = t[obs > 0], obs[obs > 0]
    if t.size >= 3:
        # ln C + 1.5 ln t = (ln a + 2bdc) - b d^2 / t - b c^2 t
        y = np.log(obs) + 1.5 * np.log(t)
        try:
            K, alpha, gamma = scipy.linalg.lstsq(np.column_stack((np.ones_like(t), 1.0 / t, t)), y)[0]
            b = -alpha / (d * d)
            if b > 0:
                c = math.sqrt(-gamma / b) if gamma < 0 else 0.0
                return ChannelCoefficients(math.exp(K - 2.0 * b * d * c), b, c)
        except (ValueError, OverflowError, DomainError, np.linalg.LinAlgError):
            pass
    k = int(np.argmax(obs)) if obs.size else 0
    t_ext = float(t[k]) if obs.size else 1.0
    return ChannelCoefficients(1.0, 1.0, d / t_ext)

def fit_legacy_channel(trace, options=None):
    """Fit the propagation-only model (a / sqrt(t^3)) exp(-b (d - c t)^2 / t)"""
    options = options or FitOptions()
    t, obs = _fit_window(trace, options)
    d = trace.config.distance
    lo_a, lo_b = options.lower_bounds

    def unpack(theta):
        return ChannelCoefficients(lo_a + math.exp(theta[0]), lo_b + math.exp(theta[1]), theta[2])

    def model(theta):
        p = unpack(theta)
        return eval_legacy_response(t, p.a, p.b, p.c, d)

    guess = options.initial_guess or _legacy_guess(t, obs, d)
    theta0 = (_log_offset(guess.a, lo_a), _log_offset(guess.b, lo_b), guess.c)
    theta, sse, iterations, converged = _least_squares(
        model, theta0, obs, options, unpack, 'legacy fit %s' % trace.label()
    )
    return _result(unpack(theta), sse, t.size, iterations, converged)

def compare_models(trace, options=None):
    """Fit both response models to one trace"""
    options = options or FitOptions()
    legacy_options = options._replace(initial_guess=None)
    return ModelComparison(fit_channel(trace, options), fit_legacy_channel(trace, legacy_options))

def rmse(trace, predicted):
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(trace.values, dtype=float)
    if predicted.shape != observed.shape:
        raise InputError('trace has %d samples but %d predictions' % (observed.size, predicted.size))
    if observed.size == 0:
        raise InputError('rmse of an empty trace')
    residual = observed - predicted
    return math.sqrt(float(np.dot(residual, residual)) / observed.size)


########################################################
#                Aggregation and Surfaces
########################################################

def compute_b_star(fits):
    """Mean of the b estimates, summed in the order given"""
    fits = list(fits)
    if not fits:
        raise InputError('b_star needs at least one fit')
    total = 0.0
    for fit in fits:
        total += fit.coefficients.b
    return total / len(fits)

def _mean_std(values):
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(sum((x - mean) ** 2 for x in values) / (n - 1))

def _grouped(fits, key):
    groups = OrderedDict()
    for config, fit in fits:
        groups.setdefault(key(config), []).append(fit.coefficients)
    return OrderedDict(sorted(groups.items()))


class CoefficientTable(object):
    """Per-config sample statistics of the fitted a and c, ordered by config"""

    def __init__(self, rows):
        self.rows = OrderedDict(sorted(rows.items()))
        for config, row in self.rows.items():
            if row.trial_count < 1:
                raise InputError('config %s has no trials' % config.label())

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows.items())

    def __getitem__(self, config):
        return self.rows[config]

    def configs(self):
        return list(self.rows)

    def __repr__(self):
        return 'CoefficientTable(%d configs)' % len(self.rows)


def aggregate_coefficients(fits):
    """
    Group (SystemConfig, FitResult) pairs by config and reduce each group to the
    sample mean and (n - 1) standard deviation of a and c.
    """
    fits = list(fits)
    if not fits:
        raise InputError('no fits to aggregate')
    rows = {}
    for config, coeffs in _grouped(fits, lambda cfg: cfg).items():
        mean_a, std_a = _mean_std([p.a for p in coeffs])
        mean_c, std_c = _mean_std([p.c for p in coeffs])
        rows[config] = CoefficientRow(mean_a, std_a, mean_c, std_c, len(coeffs))
    return CoefficientTable(rows)

def marginal_effects(fits, axis):
    """Averages of a, b and c over every trial sharing one level of a system parameter"""
    if axis not in AXES:
        raise InputError('axis must be one of %s, got %r' % (', '.join(AXES), axis))
    fits = list(fits)
    if not fits:
        raise InputError('no fits to average')
    effects = OrderedDict()
    for level, coeffs in _grouped(fits, lambda cfg: getattr(cfg, axis)).items():
        mean_a, std_a = _mean_std([p.a for p in coeffs])
        mean_b, std_b = _mean_std([p.b for p in coeffs])
        mean_c, std_c = _mean_std([p.c for p in coeffs])
        effects[level] = MarginalEffect(level, mean_a, std_a, mean_b, std_b, mean_c, std_c, len(coeffs))
    return effects

def _design(configs, with_duration):
    if with_duration:
        rows = [(c.distance, c.spray_duration, c.initial_voltage, 1.0) for c in configs]
    else:
        rows = [(c.distance, c.initial_voltage, 1.0) for c in configs]
    return np.asarray(rows, dtype=float)

def _regress(name, design, target):
    if design.shape[0] < design.shape[1] or np.linalg.matrix_rank(design) < design.shape[1]:
        raise InputError('%s surface design matrix is rank deficient (%d configs)' % (name, design.shape[0]))
    betas = scipy.linalg.lstsq(design, target)[0]
    return tuple(float(x) for x in betas)

def _surface_targets(table):
    configs = table.configs()
    rows = [table[c] for c in configs]
    return (
        configs,
        np.asarray([r.mean_a for r in rows]),
        np.asarray([r.mean_c for r in rows]),
        np.asarray([r.std_a for r in rows]),
    )

def fit_linear_surfaces(table, b_star=B_STAR):
    """
    Ordinary least squares for the three planes:
    f on [d, s, v, 1] against mean_a, g on [d, v, 1] against mean_c and
    L on [d, s, v, 1] against std_a.
    """
    configs, mean_a, mean_c, std_a = _surface_targets(table)
    full = _design(configs, True)
    reduced = _design(configs, False)
    return CoefficientSurfaces(
        f_betas=_regress('f', full, mean_a),
        g_betas=_regress('g', reduced, mean_c),
        L_betas=_regress('L', full, std_a),
        b_star=b_star,
    )

def surface_residuals(table, surfaces):
    """Regression RMSE of each surface against the table it was fitted to"""
    configs, mean_a, mean_c, std_a = _surface_targets(table)
    full = _design(configs, True)
    reduced = _design(configs, False)
    out = OrderedDict()
    for name, design, betas, target in (
        ('f', full, surfaces.f_betas, mean_a),
        ('g', reduced, surfaces.g_betas, mean_c),
        ('L', full, surfaces.L_betas, std_a),
    ):
        residual = target - design.dot(np.asarray(betas))
        out[name] = math.sqrt(float(np.dot(residual, residual)) / residual.size)
    return out


########################################################
#                 Calibration Pipeline
########################################################

def _run_stage(stage, traces, fit, workers):
    def task(item):
        index, trace = item
        try:
            return fit(trace)
        except MolChanError as err:
            log.error("%s failed on trace %d (%s): %s", stage, index, trace.label(), err)
            raise CalibrationError(stage, index, err)

    items = list(enumerate(traces))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, items))
    else:
        results = [task(item) for item in items]
    stalled = sum(1 for r in results if not r.converged)
    if stalled:
        log.warning("%s: %d of %d fits did not converge", stage, stalled, len(results))
    return results

def calibrate(dataset, options=None):
    """
    Run the calibration pipeline over a dataset of traces.

    Stages, each completed before the next starts:
        1. free fit of (a, b, c) on every trace
        2. b_star = mean of the stage 1 b values, in dataset order
        3. refit of (a, c) on every trace with b = b_star
        4. per-config aggregation of the stage 3 fits
        5. OLS of the f, g and L surfaces

    Args:
        dataset (sequence of Trace)
        options (FitOptions, optional): options.workers > 1 runs the fits of a
            stage on a thread pool; results do not depend on it

    Response:
        CalibrationResult
    """
    options = options or FitOptions()
    traces = list(dataset)
    if not traces:
        raise InputError('calibration dataset is empty')
    workers = options.workers

    log.info("calibrate: free fits of %d traces", len(traces))
    free = _run_stage('free-fit', traces, lambda tr: fit_channel(tr, options), workers)

    b_star = compute_b_star(free)
    log.info("calibrate: b_star=%r", b_star)

    log.info("calibrate: fixed-b refits")
    fixed = _run_stage('fixed-b-fit', traces, lambda tr: fit_channel_fixed_b(tr, b_star, options), workers)

    try:
        table = aggregate_coefficients((tr.config, fit) for tr, fit in zip(traces, fixed))
    except MolChanError as err:
        raise CalibrationError('aggregate', None, err)
    try:
        surfaces = fit_linear_surfaces(table, b_star)
    except MolChanError as err:
        raise CalibrationError('surfaces', None, err)
    diagnostics = surface_residuals(table, surfaces)
    log.info("calibrate: surface residual rmse %s",
             ', '.join('%s=%.6g' % kv for kv in diagnostics.items()))

    clamped = tuple(cfg for cfg in table.configs() if eval_L(cfg, surfaces).clamped)
    # amplitude noise of every trial against the fitted f
    noise = OrderedDict((cfg, []) for cfg in table.configs())
    for tr, fit in zip(traces, fixed):
        noise[tr.config].append(fit.coefficients.a - eval_f(tr.config, surfaces))
    noise = OrderedDict((cfg, tuple(n)) for cfg, n in noise.items())
    return CalibrationResult(
        surfaces=surfaces,
        table=table,
        per_trace_fits=tuple(TraceFit(i, tr.config, tr.trial_id, f) for i, (tr, f) in enumerate(zip(traces, fixed))),
        free_fits=tuple(TraceFit(i, tr.config, tr.trial_id, f) for i, (tr, f) in enumerate(zip(traces, free))),
        diagnostics=diagnostics,
        clamped_L=clamped,
        noise_samples=noise,
    )

def predict_trace(config, surfaces, times, opts=None):
    """
    Universal response of a config at each time.

    Warns outside the calibrated hull and where f <= 0.  The raw surface
    value is used, so such a prediction can be negative; synthetic traces
    raise the same amplitude to AMPLITUDE_FLOOR instead.
    """
    opts = opts or DEFAULT_EVALUATION
    t = np.asarray(times, dtype=float)
    if t.size and (np.any(~np.isfinite(t)) or float(t.min()) < opts.t_min):
        raise InputError('prediction times must be >= t_min=%r' % opts.t_min)
    if not config.in_calibrated_hull:
        log.warning("config %s is outside the calibrated hull, extrapolating", config.label())
    a = eval_f(config, surfaces)
    if a <= 0:
        log.warning("amplitude surface is %r at %s, the prediction is not a physical response", a, config.label())
    return np.asarray(eval_universal_response(t, config, surfaces, opts), dtype=float).reshape(t.shape)
