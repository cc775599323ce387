#!/usr/bin/env python3

import io
import logging
import math
import os
import tempfile

import unittest
try:
    from unittest.mock import MagicMock, patch  # Python 3
except ImportError:
    from mock import MagicMock, patch

import numpy as np
import pandas as pd

# Enable info logging to see calibration progress
log = logging.getLogger('molchan')
logging.basicConfig()
log.setLevel(level=logging.INFO)

import molchan
from molchan import estimation
from molchan.plot import line_chart

CONFIG = molchan.SystemConfig(2.0, 150.0, 1.3)
HELD_OUT = molchan.SystemConfig(2.5, 130.0, 1.5)
CLAMPED = molchan.SystemConfig(5.0, 50.0, 1.9)
TIMES = molchan.time_grid(0.5, 60.0, 0.1)

# published f plane shifted up so the amplitude stays positive over the whole grid
GENERATOR = molchan.PAPER_SURFACES._replace(f_betas=(-0.4188, 0.0098, -1.7873, 6.0))

SMALL_GRID = molchan.ParameterGrid((2.0, 3.0), (50.0, 100.0), (1.0, 1.3))


def synthetic_trace(a, b, c, d, times=TIMES, config=None):
    config = config or molchan.SystemConfig(d, 100.0, 1.3)
    values = molchan.eval_impulse_response(np.asarray(times), molchan.ChannelCoefficients(a, b, c), d)
    return molchan.Trace(times, values, config)

def relative(value, expected):
    return abs(value - expected) / abs(expected)


class TestModelCore(unittest.TestCase):
    def test_surface_arithmetic(self):
        S = molchan.PAPER_SURFACES
        self.assertAlmostEqual(molchan.eval_f(CONFIG, S), 2.95581, delta=1e-9)
        self.assertAlmostEqual(molchan.eval_g(CONFIG, S), 0.27616, delta=1e-9)
        self.assertAlmostEqual(molchan.eval_L(CONFIG, S).sigma, 0.61981, delta=1e-9)
        self.assertFalse(molchan.eval_L(CONFIG, S).clamped)
        self.assertAlmostEqual(molchan.eval_f(HELD_OUT, S), 2.19295, delta=1e-9)
        self.assertAlmostEqual(molchan.eval_g(HELD_OUT, S), 0.33885, delta=1e-9)

    def test_velocity_ignores_spray_duration(self):
        other = CONFIG._replace(spray_duration=50.0)
        self.assertEqual(molchan.eval_g(CONFIG, molchan.PAPER_SURFACES), molchan.eval_g(other, molchan.PAPER_SURFACES))

    def test_noise_surface_clamp(self):
        sigma = molchan.eval_L(CLAMPED, molchan.PAPER_SURFACES)
        self.assertEqual(sigma.sigma, molchan.SIGMA_FLOOR)
        self.assertTrue(sigma.clamped)

    def test_universal_response_value(self):
        value = molchan.eval_universal_response(10.0, CONFIG, molchan.PAPER_SURFACES)
        self.assertIsInstance(value, float)
        self.assertAlmostEqual(value, 24.976, delta=1e-2)
        bracket = molchan.eval_bracket(10.0, 2.0, 0.195, 0.27616)
        self.assertAlmostEqual(bracket, 0.03751, delta=1e-4)

    def test_array_evaluation_matches_scalar(self):
        t = np.array([0.5, 2.0, 10.0, 45.0])
        values = molchan.eval_universal_response(t, CONFIG, molchan.PAPER_SURFACES)
        for k, x in enumerate(t):
            self.assertLess(relative(values[k], molchan.eval_universal_response(float(x), CONFIG, molchan.PAPER_SURFACES)), 1e-12)

    def test_domain_errors(self):
        with self.assertRaises(molchan.DomainError):
            molchan.eval_bracket(0.0, 2.0, 0.195, 0.3)
        with self.assertRaises(molchan.DomainError):
            molchan.eval_bracket(1.0, 2.0, 0.0, 0.3)
        with self.assertRaises(molchan.DomainError):
            molchan.eval_impulse_response(0.05, molchan.ChannelCoefficients(1.0, 0.195, 0.3), 2.0)
        with self.assertRaises(molchan.DomainError):
            molchan.ChannelCoefficients(-1.0, 0.195, 0.3)
        with self.assertRaises(molchan.DomainError):
            molchan.SystemConfig(0.0, 100.0, 1.0)

    def test_response_cap(self):
        coeffs = molchan.ChannelCoefficients(1.0, 0.05, 0.05)
        value = molchan.eval_impulse_response(0.1, coeffs, 5.0)
        self.assertEqual(value, molchan.RESPONSE_CAP)
        values = molchan.eval_impulse_response(np.asarray(TIMES), coeffs, 5.0)
        self.assertTrue(np.all(values <= molchan.RESPONSE_CAP))
        self.assertTrue(np.all(np.isfinite(values)))

    def test_peak_time(self):
        self.assertAlmostEqual(molchan.peak_time(0.195, 0.27616, 2.0), 2.8786, delta=1e-3)
        self.assertAlmostEqual(molchan.peak_time(0.195, 0.0, 2.0), 4.0 / (6 * 0.195), delta=1e-12)

    def test_peak_time_matches_grid_search(self):
        rng = np.random.default_rng(7)
        grid = np.arange(1, 600001) * 1e-4
        for _ in range(100):
            b = rng.uniform(0.05, 0.5)
            c = rng.uniform(0.05, 0.6)
            d = rng.uniform(2.0, 5.0)
            best = grid[int(np.argmax(molchan.eval_bracket(grid, d, b, c)))]
            self.assertLess(abs(molchan.peak_time(b, c, d) - best), 2e-4)

    def test_peak_is_a_local_maximum(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            b, c, d = rng.uniform(0.05, 0.5), rng.uniform(0.0, 0.6), rng.uniform(2.0, 5.0)
            t = molchan.peak_time(b, c, d)
            top = molchan.eval_bracket(t, d, b, c)
            self.assertGreater(top, molchan.eval_bracket(t - 1e-3, d, b, c))
            self.assertGreater(top, molchan.eval_bracket(t + 1e-3, d, b, c))

    def test_universal_response_is_impulse_response_of_surfaces(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            config = molchan.SystemConfig(rng.uniform(2.0, 5.0), rng.uniform(50.0, 200.0), rng.uniform(1.0, 1.9))
            t = rng.uniform(0.1, 60.0)
            coeffs = molchan.ChannelCoefficients(molchan.eval_f(config, GENERATOR), GENERATOR.b_star,
                                                 molchan.eval_g(config, GENERATOR))
            self.assertEqual(molchan.eval_universal_response(t, config, GENERATOR),
                             molchan.eval_impulse_response(t, coeffs, config.distance))
            self.assertEqual(molchan.surface_coefficients(config, GENERATOR), coeffs)

    def test_response_scales_with_amplitude(self):
        t = np.asarray(TIMES)
        unit = molchan.eval_impulse_response(t, molchan.ChannelCoefficients(1.0, 0.195, 0.3), 2.0)
        for k in (0.5, 2.0, 7.3):
            scaled = molchan.eval_impulse_response(t, molchan.ChannelCoefficients(k, 0.195, 0.3), 2.0)
            self.assertTrue(np.array_equal(scaled, k * unit))

    def test_sensor_law_is_decreasing(self):
        rng = np.random.default_rng(10)
        sensor = molchan.SensorParams(2.0)
        for _ in range(200):
            low, high = sorted(10.0 ** rng.uniform(-3.0, 3.0, 2))
            if low == high:
                continue
            self.assertGreater(molchan.resistance_from_concentration(low, sensor),
                               molchan.resistance_from_concentration(high, sensor))

    def test_concentration_is_linear_in_molecule_count(self):
        t = np.array([0.5, 3.0, 12.0, 40.0])
        unit = molchan.eval_concentration(t, molchan.ConcentrationParams(1.0, 0.2, 0.3, 3.0))
        self.assertTrue(np.array_equal(unit, molchan.eval_bracket(t, 3.0, 0.2, 0.3)))
        for count in (2.0, 1000.0):
            scaled = molchan.eval_concentration(t, molchan.ConcentrationParams(count, 0.2, 0.3, 3.0))
            self.assertTrue(np.array_equal(scaled, count * unit))

    def test_legacy_response(self):
        self.assertAlmostEqual(molchan.eval_legacy_response(2.0, 3.0, 0.5, 1.0, 4.0), 0.39021, delta=1e-4)

    def test_power_law_exponent(self):
        sensor = molchan.SensorParams(3.0)
        points = [(C, molchan.resistance_ratio(C, sensor)) for C in (50.0, 100.0, 500.0, 1000.0)]
        self.assertAlmostEqual(molchan.estimate_power_law_exponent(points), -0.65, delta=1e-10)
        self.assertEqual(molchan.SENSOR_EXPONENT, -0.65)
        with self.assertRaises(molchan.DomainError):
            molchan.estimate_power_law_exponent([(10.0, 1.0)])
        with self.assertRaises(molchan.DomainError):
            molchan.estimate_power_law_exponent([(10.0, 1.0), (10.0, 2.0)])
        with self.assertRaises(molchan.DomainError):
            molchan.resistance_from_concentration(0.0, sensor)

    def test_end_to_end_resistance_lumps_into_response(self):
        params = molchan.ConcentrationParams(1000.0, 0.2, 0.3, 3.0)
        sensor = molchan.SensorParams(2.0)
        coeffs = molchan.ChannelCoefficients(2.0 * 1000.0 ** -0.65, 0.2, 0.3)
        t = np.array([1.0, 5.0, 20.0])
        direct = molchan.eval_end_to_end_resistance(t, params, sensor)
        lumped = molchan.eval_impulse_response(t, coeffs, 3.0)
        for x, y in zip(direct, lumped):
            self.assertLess(relative(x, y), 1e-10)

    def test_surfaces_dict(self):
        values = molchan.PAPER_SURFACES.to_dict()
        self.assertEqual(values['b_star'], 0.1950)
        self.assertEqual(molchan.CoefficientSurfaces.from_dict(values), molchan.PAPER_SURFACES)
        del values['g_beta_0']
        with self.assertRaises(molchan.InputError):
            molchan.CoefficientSurfaces.from_dict(values)

    def test_hull(self):
        self.assertTrue(CONFIG.in_calibrated_hull)
        self.assertFalse(molchan.SystemConfig(6.0, 100.0, 1.3).in_calibrated_hull)

    def test_error_json(self):
        result = molchan.error_json(molchan.ERR_PARSE, 'line 3')
        self.assertEqual(result['Err'], '802')
        self.assertEqual(result['Payload'], 'line 3')
        self.assertEqual(result['Error'], molchan.error_codes[molchan.ERR_PARSE])

    def test_log_level(self):
        with self.assertRaises(molchan.InputError):
            molchan.set_log_level('loud')
        molchan.set_log_level('info')
        self.assertEqual(logging.getLogger('molchan').level, logging.INFO)

    def test_termcolor(self):
        self.assertEqual(molchan.termcolor(False), molchan.TermColors('', '', ''))
        self.assertEqual(molchan.TermColors._fields, ('bold', 'normal', 'yellow'))
        self.assertFalse(hasattr(molchan.CoefficientSurfaces, 'without_noise'))


class TestEstimation(unittest.TestCase):
    def test_fit_recovery(self):
        rng = np.random.default_rng(2024)
        times = tuple(np.linspace(0.5, 60.0, 200))
        for _ in range(50):
            a = rng.uniform(0.5, 5.0)
            b = rng.uniform(0.05, 0.5)
            c = rng.uniform(0.05, 0.6)
            d = rng.uniform(2.0, 5.0)
            fit = molchan.fit_channel(synthetic_trace(a, b, c, d, times))
            self.assertTrue(fit.converged)
            self.assertLess(relative(fit.coefficients.a, a), 1e-3)
            self.assertLess(relative(fit.coefficients.b, b), 1e-3)
            self.assertLess(relative(fit.coefficients.c, c), 1e-3)

    def test_fit_from_exact_guess(self):
        truth = molchan.ChannelCoefficients(2.0, 0.195, 0.3)
        trace = synthetic_trace(truth.a, truth.b, truth.c, 2.0)
        fit = molchan.fit_channel(trace, molchan.FitOptions(initial_guess=truth))
        self.assertTrue(fit.converged)
        self.assertLess(fit.rmse, 1e-10)
        self.assertLessEqual(fit.iterations, 3)

    def test_fixed_b(self):
        trace = synthetic_trace(2.5, 0.195, 0.35, 3.0)
        fit = molchan.fit_channel_fixed_b(trace, 0.1950)
        self.assertEqual(fit.coefficients.b, 0.1950)
        self.assertLess(relative(fit.coefficients.a, 2.5), 1e-6)
        self.assertLess(relative(fit.coefficients.c, 0.35), 1e-6)
        for bad in (0.0, -1.0):
            with self.assertRaises(molchan.InputError):
                molchan.fit_channel_fixed_b(trace, bad)

    def test_too_few_samples(self):
        trace = synthetic_trace(2.0, 0.2, 0.3, 2.0, times=(0.5, 1.0, 2.0, 3.0, 4.0))
        with self.assertRaises(molchan.InputError):
            molchan.fit_channel(trace)

    def test_trace_validation(self):
        with self.assertRaises(molchan.InputError):
            molchan.Trace((1.0, 0.5), (1.0, 2.0), CONFIG)
        with self.assertRaises(molchan.InputError):
            molchan.Trace((1.0, 2.0), (1.0,), CONFIG)
        with self.assertRaises(molchan.InputError):
            molchan.Trace((1.0, 2.0), (1.0, float('nan')), CONFIG)

    def test_linearized_guess(self):
        trace = synthetic_trace(1.7, 0.3, 0.4, 4.0)
        guess = molchan.linearized_guess(trace)
        self.assertLess(relative(guess.a, 1.7), 1e-8)
        self.assertLess(relative(guess.b, 0.3), 1e-8)
        self.assertLess(relative(guess.c, 0.4), 1e-8)
        capped = molchan.Trace(TIMES, [molchan.RESPONSE_CAP] * len(TIMES), CONFIG)
        self.assertIsNone(molchan.linearized_guess(capped))

    def test_sign_of_velocity_is_seeded_positive(self):
        # h(t; a, b, -c) equals h(t; a * exp(-n d c / b), b, c)
        a, b, c, d = 2.0, 0.2, 0.3, 2.0
        trace = synthetic_trace(a, b, -c, d)
        fit = molchan.fit_channel(trace)
        self.assertGreater(fit.coefficients.c, 0)
        self.assertLess(relative(fit.coefficients.a, a * math.exp(0.65 * d * c / b)), 1e-6)

    def test_extremum_guess(self):
        trace = synthetic_trace(2.0, 0.195, 0.3, 2.0)
        guess = molchan.extremum_guess(trace)
        t_min = trace.times[int(np.argmin(trace.values))]
        self.assertEqual(guess.b, 0.2)
        self.assertAlmostEqual(guess.c, 2.0 / t_min, delta=1e-12)

    def test_fit_with_extremum_seed(self):
        trace = synthetic_trace(2.0, 0.195, 0.3, 2.0)
        with patch.object(estimation, 'linearized_guess', MagicMock(return_value=None)) as seed:
            fit = molchan.fit_channel(trace)
        seed.assert_called_once()
        self.assertLess(relative(fit.coefficients.b, 0.195), 1e-3)

    def test_numerical_error_carries_last_iterate(self):
        trace = synthetic_trace(2.0, 0.195, 0.3, 2.0)
        with patch.object(estimation, 'eval_impulse_response', MagicMock(return_value=np.inf)):
            with self.assertRaises(molchan.NumericalError) as ctx:
                molchan.fit_channel(trace, molchan.FitOptions(initial_guess=molchan.ChannelCoefficients(2.0, 0.195, 0.3)))
        self.assertAlmostEqual(ctx.exception.last_iterate.b, 0.195, delta=1e-12)

    def test_legacy_fit_and_comparison(self):
        t = np.asarray(TIMES)
        values = molchan.eval_legacy_response(t, 3.0, 0.5, 0.3, 2.0)
        legacy_trace = molchan.Trace(TIMES, values, CONFIG)
        fit = molchan.fit_legacy_channel(legacy_trace)
        self.assertLess(relative(fit.coefficients.a, 3.0), 1e-6)
        self.assertLess(relative(fit.coefficients.b, 0.5), 1e-6)
        self.assertLess(relative(fit.coefficients.c, 0.3), 1e-6)

        comparison = molchan.compare_models(synthetic_trace(2.0, 0.195, 0.3, 2.0))
        self.assertEqual(comparison.better, 'universal')
        self.assertLess(comparison.universal.rmse, comparison.legacy.rmse)

    def test_rmse(self):
        trace = synthetic_trace(2.0, 0.195, 0.3, 2.0)
        self.assertEqual(molchan.rmse(trace, trace.values), 0.0)
        self.assertAlmostEqual(molchan.rmse(trace, np.asarray(trace.values) + 0.5), 0.5, delta=1e-12)
        with self.assertRaises(molchan.InputError):
            molchan.rmse(trace, trace.values[:-1])

    def test_b_star_and_aggregation(self):
        values = [(1.0, 0.2, 0.3), (1.5, 0.21, 0.32), (2.2, 0.19, 0.29)]
        fits = [molchan.FitResult(molchan.ChannelCoefficients(*v), 0.0, 0.0, 1, True) for v in values]
        self.assertEqual(molchan.compute_b_star(fits), (0.2 + 0.21 + 0.19) / 3)

        table = molchan.aggregate_coefficients([(CONFIG, f) for f in fits] + [(HELD_OUT, fits[0])])
        self.assertEqual(table.configs(), [CONFIG, HELD_OUT])
        row = table[CONFIG]
        a = [v[0] for v in values]
        mean = sum(a) / 3
        self.assertEqual(row.mean_a, mean)
        self.assertEqual(row.std_a, math.sqrt(sum((x - mean) ** 2 for x in a) / 2))
        self.assertEqual(row.trial_count, 3)
        self.assertEqual(table[HELD_OUT].std_a, 0.0)
        self.assertEqual(table[HELD_OUT].trial_count, 1)
        with self.assertRaises(molchan.InputError):
            molchan.aggregate_coefficients([])

    def _table(self, surfaces, noise=None):
        rows = {}
        for k, config in enumerate(molchan.enumerate_grid()):
            extra = noise[k] if noise is not None else 0.0
            L = surfaces.L_betas
            std = L[0] * config.distance + L[1] * config.spray_duration + L[2] * config.initial_voltage + L[3]
            rows[config] = estimation.CoefficientRow(
                molchan.eval_f(config, surfaces) + extra, std, molchan.eval_g(config, surfaces), 0.0, 10)
        return molchan.CoefficientTable(rows)

    def test_linear_surfaces_exact(self):
        surfaces = molchan.fit_linear_surfaces(self._table(molchan.PAPER_SURFACES))
        for got, want in zip(surfaces.f_betas + surfaces.g_betas + surfaces.L_betas,
                             molchan.PAPER_SURFACES.f_betas + molchan.PAPER_SURFACES.g_betas + molchan.PAPER_SURFACES.L_betas):
            self.assertAlmostEqual(got, want, delta=1e-9)
        self.assertEqual(surfaces.b_star, molchan.B_STAR)

    def test_linear_surfaces_match_normal_equations(self):
        noise = np.random.default_rng(3).normal(0.0, 0.3, 64)
        table = self._table(molchan.PAPER_SURFACES, noise)
        surfaces = molchan.fit_linear_surfaces(table, b_star=0.2)
        X = np.array([(c.distance, c.spray_duration, c.initial_voltage, 1.0) for c in table.configs()])
        y = np.array([table[c].mean_a for c in table.configs()])
        oracle = np.linalg.solve(X.T.dot(X), X.T.dot(y))
        for got, want in zip(surfaces.f_betas, oracle):
            self.assertAlmostEqual(got, want, delta=1e-8)
        self.assertEqual(surfaces.b_star, 0.2)
        residuals = molchan.surface_residuals(table, surfaces)
        self.assertEqual(list(residuals), ['f', 'g', 'L'])
        self.assertLess(residuals['g'], 1e-9)

    def test_linear_surfaces_rank_deficient(self):
        full = self._table(molchan.PAPER_SURFACES)
        rows = dict((c, r) for c, r in full if c.distance == 2.0)
        with self.assertRaises(molchan.InputError) as ctx:
            molchan.fit_linear_surfaces(molchan.CoefficientTable(rows))
        self.assertIn('f surface', str(ctx.exception))

    def test_calibrate_noiseless_inversion(self):
        dataset = molchan.generate_dataset(molchan.ParameterGrid(), GENERATOR, 1, TIMES, 11, silent=True)
        result = molchan.calibrate(dataset)
        self.assertAlmostEqual(result.surfaces.b_star, GENERATOR.b_star, delta=1e-6)
        for got, want in zip(result.surfaces.f_betas + result.surfaces.g_betas, GENERATOR.f_betas + GENERATOR.g_betas):
            self.assertAlmostEqual(got, want, delta=1e-6)
        self.assertEqual(len(result.per_trace_fits), 64)
        self.assertTrue(all(f.fit.coefficients.b == result.surfaces.b_star for f in result.per_trace_fits))
        self.assertEqual(len(result.table), 64)

    def test_calibrate_noisy(self):
        S0 = molchan.PAPER_SURFACES
        errors = []
        for seed in range(5):
            dataset = molchan.generate_dataset(molchan.ParameterGrid(), S0, 10, TIMES, seed)
            self.assertEqual(len(dataset), 640)
            result = molchan.calibrate(dataset)
            S = result.surfaces
            errors.append([relative(got, want) for got, want in
                           zip(S.f_betas + S.g_betas + S.L_betas + (S.b_star,),
                               S0.f_betas + S0.g_betas + S0.L_betas + (S0.b_star,))])

            # noise samples of each config are taken against the fitted f
            for config, samples in result.noise_samples.items():
                self.assertEqual(len(samples), 10)
                self.assertAlmostEqual(sum(samples) / 10, result.table[config].mean_a - molchan.eval_f(config, S), delta=1e-9)

        median = np.median(np.array(errors), axis=0)
        for k in range(7):
            self.assertLess(median[k], 0.05)
        for k in range(7, 11):
            self.assertLess(median[k], 0.15)
        self.assertLess(median[11], 0.01)

    def _noisy_trace(self, seed, scale=0.01):
        trace = synthetic_trace(2.5, 0.3, 0.35, 3.0)
        noise = np.random.default_rng(seed).normal(0.0, scale, len(trace.values))
        return molchan.Trace(trace.times, np.asarray(trace.values) * (1.0 + noise), trace.config)

    def _sse(self, trace, coeffs):
        predicted = molchan.eval_impulse_response(np.asarray(trace.times), coeffs, trace.config.distance)
        return float(np.sum((np.asarray(trace.values) - predicted) ** 2))

    def test_fixed_b_never_beats_free_fit(self):
        for seed in range(5):
            trace = self._noisy_trace(seed)
            free = molchan.fit_channel(trace)
            fixed = molchan.fit_channel_fixed_b(trace, molchan.B_STAR)
            self.assertGreaterEqual(fixed.sse, free.sse * (1.0 - 1e-12))

    def test_fit_is_a_local_minimum(self):
        trace = self._noisy_trace(12)
        fit = molchan.fit_channel(trace)
        self.assertTrue(fit.converged)
        best = self._sse(trace, fit.coefficients)
        self.assertAlmostEqual(best, fit.sse, delta=1e-6 * best)
        for k in range(3):
            for step in (0.99, 1.01):
                moved = list(fit.coefficients)
                moved[k] *= step
                self.assertGreater(self._sse(trace, molchan.ChannelCoefficients(*moved)), best)

    def test_calibrate_workers_do_not_change_results(self):
        dataset = molchan.generate_dataset(SMALL_GRID, GENERATOR, 2, TIMES, 3)
        serial = molchan.calibrate(dataset)
        threaded = molchan.calibrate(dataset, molchan.FitOptions(workers=4))
        self.assertEqual(serial.surfaces, threaded.surfaces)
        self.assertEqual([f.fit for f in serial.per_trace_fits], [f.fit for f in threaded.per_trace_fits])

    def test_calibrate_stage_failure(self):
        dataset = molchan.generate_dataset(SMALL_GRID, GENERATOR, 1, TIMES, 3)
        short = molchan.Trace(TIMES[:4], dataset[2].values[:4], dataset[2].config)
        dataset[2] = short
        with self.assertRaises(molchan.CalibrationError) as ctx:
            molchan.calibrate(dataset)
        self.assertEqual(ctx.exception.stage, 'free-fit')
        self.assertEqual(ctx.exception.trace_id, 2)
        self.assertEqual(ctx.exception.code, molchan.ERR_INPUT)
        with self.assertRaises(molchan.InputError):
            molchan.calibrate([])

    def test_marginal_effects(self):
        dataset = molchan.generate_dataset(SMALL_GRID, GENERATOR, 1, TIMES, 3, silent=True)
        fits = [(t.config, molchan.fit_channel(t)) for t in dataset]
        effects = molchan.marginal_effects(fits, 'distance')
        self.assertEqual(list(effects), [2.0, 3.0])
        self.assertEqual(effects[2.0].trial_count, 4)
        self.assertLess(relative(effects[3.0].mean_b, GENERATOR.b_star), 1e-6)
        with self.assertRaises(molchan.InputError):
            molchan.marginal_effects(fits, 'humidity')

    def test_predict_trace(self):
        values = molchan.predict_trace(CONFIG, molchan.PAPER_SURFACES, [10.0])
        self.assertAlmostEqual(values[0], 24.976, delta=1e-2)
        with self.assertRaises(molchan.InputError):
            molchan.predict_trace(CONFIG, molchan.PAPER_SURFACES, [0.05, 1.0])
        with self.assertLogs('molchan.estimation', level='WARNING'):
            molchan.predict_trace(molchan.SystemConfig(6.0, 100.0, 1.3), molchan.PAPER_SURFACES, [10.0])

    def test_predict_trace_with_negative_amplitude(self):
        self.assertLess(molchan.eval_f(CLAMPED, molchan.PAPER_SURFACES), 0)
        with self.assertLogs('molchan.estimation', level='WARNING') as logs:
            values = molchan.predict_trace(CLAMPED, molchan.PAPER_SURFACES, [5.0, 10.0])
        self.assertTrue(any('amplitude surface' in line for line in logs.output))
        self.assertTrue(all(v < 0 for v in values))
        with self.assertRaises(molchan.DomainError):
            molchan.surface_coefficients(CLAMPED, molchan.PAPER_SURFACES)


class TestNoise(unittest.TestCase):
    def setUp(self):
        self.spec = molchan.NoiseSpec(molchan.PAPER_SURFACES)

    def test_noise_sample(self):
        self.assertAlmostEqual(molchan.noise_sample(3.0, CONFIG, molchan.PAPER_SURFACES), 0.04419, delta=1e-9)
        f = molchan.eval_f(CONFIG, molchan.PAPER_SURFACES)
        self.assertEqual(molchan.noise_sample(f, CONFIG, molchan.PAPER_SURFACES), 0.0)

    def test_noise_statistics(self):
        n = 100000
        samples = molchan.sample_noise(CONFIG, self.spec, 42, n)
        mean, std = molchan.noise_stats(samples)
        self.assertLess(abs(mean), 5 * 0.61981 / math.sqrt(n))
        self.assertLess(relative(std, 0.61981), 0.02)

    def test_other_distributions(self):
        for name in ('uniform', 'laplace'):
            spec = molchan.NoiseSpec(molchan.PAPER_SURFACES, name)
            mean, std = molchan.noise_stats(molchan.sample_noise(CONFIG, spec, 9, 100000))
            self.assertLess(relative(std, 0.61981), 0.02)
        with self.assertRaises(molchan.InputError):
            molchan.NoiseDistribution.lookup('cauchy')

    def test_seed_determinism(self):
        first = molchan.sample_noise(CONFIG, self.spec, 42, 50)
        self.assertEqual(first, molchan.sample_noise(CONFIG, self.spec, 42, 50))
        self.assertNotEqual(first, molchan.sample_noise(CONFIG, self.spec, 43, 50))

    def test_clamped_sigma(self):
        mean, std = molchan.noise_stats(molchan.sample_noise(CLAMPED, self.spec, 1, 100000))
        self.assertLess(relative(std, molchan.SIGMA_FLOOR), 0.02)

    def test_silent(self):
        spec = self.spec._replace(silent=True)
        self.assertEqual(molchan.sample_noise(CONFIG, spec, 1, 5).samples, (0.0,) * 5)
        trace = molchan.generate_noisy_trace(CONFIG, spec, TIMES, 1)
        predicted = molchan.predict_trace(CONFIG, molchan.PAPER_SURFACES, TIMES)
        self.assertEqual(trace.values, tuple(float(x) for x in predicted))
        with self.assertRaises(molchan.InputError):
            molchan.sample_noise(CONFIG, spec, 1, 0)

    def test_trial_level_multiplicativity(self):
        predicted = molchan.predict_trace(CONFIG, molchan.PAPER_SURFACES, TIMES)
        for seed in (1, 2):
            trace = molchan.generate_noisy_trace(CONFIG, self.spec, TIMES, seed)
            ratios = np.asarray(trace.values) / predicted
            self.assertLess(float(ratios.max() - ratios.min()), 1e-12 * float(ratios.max()))
        self.assertEqual(molchan.generate_noisy_trace(CONFIG, self.spec, TIMES, 1),
                         molchan.generate_noisy_trace(CONFIG, self.spec, TIMES, 1))

    def test_monte_carlo_mean(self):
        total = 0.0
        count = 10000
        for seed in range(count):
            total += molchan.generate_noisy_trace(CONFIG, self.spec, [10.0], seed).values[0]
        expected = molchan.predict_trace(CONFIG, molchan.PAPER_SURFACES, [10.0])[0]
        self.assertLess(relative(total / count, expected), 0.01)

    def test_amplitude_floor(self):
        loud = molchan.NoiseSpec(molchan.PAPER_SURFACES._replace(L_betas=(0.0, 0.0, 0.0, 50.0)))
        draws = [molchan.amplitude_draw(CONFIG, loud, seed) for seed in range(200)]
        self.assertTrue(any(d.clamped for d in draws))
        self.assertTrue(all(d.amplitude >= molchan.AMPLITUDE_FLOOR for d in draws))
        with self.assertRaises(molchan.InputError):
            molchan.generate_noisy_trace(CONFIG, loud, [0.05, 1.0], 1)

    def test_noise_stats(self):
        self.assertEqual(molchan.noise_stats([-1.0, 1.0]), (0.0, math.sqrt(2.0)))
        self.assertEqual(molchan.noise_stats([0.5, 0.5, 0.5])[1], 0.0)
        with self.assertRaises(molchan.InputError):
            molchan.noise_stats([1.0])

    def test_samples_by_config_are_centered(self):
        surfaces = molchan.PAPER_SURFACES._replace(f_betas=(0.0, 0.0, 0.0, 2.0))
        fits = [(CONFIG, molchan.FitResult(molchan.ChannelCoefficients(a, 0.2, 0.3), 0.0, 0.0, 1, True))
                for a in (1.0, 2.0, 3.0)]
        samples = molchan.noise_samples_by_config(fits, surfaces)
        self.assertEqual(samples[CONFIG].samples, (-1.0, 0.0, 1.0))
        self.assertEqual(sum(samples[CONFIG].samples), 0.0)

    def test_additive_noise(self):
        spec = self.spec._replace(silent=True)
        trace = molchan.generate_noisy_trace(CONFIG, spec, TIMES, 1)
        self.assertTrue(np.all(molchan.additive_noise(trace, molchan.PAPER_SURFACES) == 0.0))


class TestDataset(unittest.TestCase):
    TEXT = ('# distance_m=2.0\n# spray_ms=150.0\n# init_voltage_V=1.3\n# trial=3\n'
            'time_s,value\n0.5,1.31\n0.6,1.42\n')

    def test_grid(self):
        configs = molchan.enumerate_grid()
        self.assertEqual(len(configs), 64)
        self.assertEqual(configs[0], molchan.SystemConfig(2.0, 50.0, 1.0))
        self.assertEqual(configs, sorted(configs))
        self.assertEqual(len(molchan.enumerate_grid(molchan.ParameterGrid((2.0,), (50.0,), (1.0,)))), 1)
        with self.assertRaises(molchan.InputError):
            molchan.ParameterGrid(())

    def test_parse_trace(self):
        trace = molchan.parse_trace(self.TEXT)
        self.assertEqual(trace.config.distance, 2.0)
        self.assertEqual(trace.trial_id, 3)
        self.assertEqual((trace.times[0], trace.values[0]), (0.5, 1.31))

    def test_parse_errors(self):
        with self.assertRaises(molchan.ParseError) as ctx:
            molchan.parse_trace(self.TEXT + '0.55,2.0\n')
        self.assertEqual(ctx.exception.lineno, 8)
        with self.assertRaises(molchan.ParseError) as ctx:
            molchan.parse_trace(self.TEXT.replace('0.6,1.42', '0.6,abc'))
        self.assertEqual(ctx.exception.lineno, 7)
        with self.assertRaises(molchan.ParseError):
            molchan.parse_trace(self.TEXT.replace('# trial=3\n', ''))
        with self.assertRaises(molchan.ParseError):
            molchan.parse_trace(self.TEXT.replace('time_s,value', 'time,value'))

    def test_parse_errors_name_the_data_line(self):
        for text, lineno in ((self.TEXT + '0.7,1.5,9\n', 8),
                             (self.TEXT + '0.7\n', 8),
                             (self.TEXT + '0.7,inf\n', 8),
                             (self.TEXT.replace('0.5,1.31', '0.5,1.31,7'), 6),
                             (self.TEXT.replace('0.5,1.31', '-0.5,1.31'), 6)):
            with self.assertRaises(molchan.ParseError) as ctx:
                molchan.parse_trace(text)
            self.assertEqual(ctx.exception.lineno, lineno, text)
        trace = molchan.parse_trace(self.TEXT.replace('0.6,1.42', '0.6, 1.42\n\n'))
        self.assertEqual(trace.values, (1.31, 1.42))

    def test_round_trip(self):
        rng = np.random.default_rng(12)
        for k in range(1000):
            n = int(rng.integers(0, 20))
            times = np.cumsum(rng.uniform(0.01, 3.0, n))
            values = rng.normal(0.0, 10.0, n) * 10.0 ** rng.integers(-5, 6, n)
            config = molchan.SystemConfig(*rng.uniform(0.5, 10.0, 3))
            trace = molchan.Trace(times, values, config, k)
            self.assertEqual(molchan.parse_trace(molchan.write_trace(trace)), trace)

    def test_write_trace(self):
        empty = molchan.Trace((), (), CONFIG, 1)
        self.assertEqual(molchan.write_trace(empty).count('\n'), 5)
        exact = molchan.Trace((0.1,), (0.12345678901234567,), CONFIG)
        self.assertEqual(molchan.parse_trace(molchan.write_trace(exact)).values, (0.12345678901234567,))

    def test_write_table(self):
        fits = [(config, molchan.FitResult(molchan.ChannelCoefficients(a, 0.195, 0.1 * a), 0.0, 0.0, 1, True))
                for config in (CONFIG, HELD_OUT) for a in (1.0, 1.1, 1.3)]
        table = molchan.aggregate_coefficients(fits)
        frame = pd.read_csv(io.StringIO(molchan.write_table(table)), float_precision='round_trip')
        self.assertEqual(tuple(frame.columns), molchan.TABLE_COLUMNS)
        self.assertEqual(len(frame), 2)
        self.assertEqual(tuple(frame.iloc[1, :3]), tuple(HELD_OUT))
        self.assertEqual(frame['mean_a'][0], table[CONFIG].mean_a)
        self.assertEqual(frame['std_c'][0], table[CONFIG].std_c)
        self.assertEqual(list(frame['trials']), [3, 3])

    def test_files(self):
        dataset = molchan.generate_dataset(SMALL_GRID, GENERATOR, 2, TIMES[:50], 8)
        with tempfile.TemporaryDirectory() as tmp:
            paths = molchan.save_dataset(tmp, dataset)
            self.assertEqual(len(paths), 16)
            self.assertEqual(os.path.basename(paths[0]), 'd2.0_s50.0_v1.0_t0.csv')
            loaded = molchan.load_dataset(tmp)
            self.assertEqual(sorted(loaded), sorted(dataset))
            empty = os.path.join(tmp, 'empty')
            os.mkdir(empty)
            with self.assertRaises(molchan.InputError):
                molchan.load_dataset(empty)

    def test_mean_trace(self):
        trace = molchan.parse_trace(self.TEXT)
        self.assertEqual(molchan.mean_trace([trace]).values, trace.values)
        self.assertEqual(molchan.mean_trace([trace]).trial_id, molchan.AGGREGATE_TRIAL)
        negated = trace._replace(values=tuple(-v for v in trace.values))
        self.assertEqual(molchan.mean_trace([trace, negated]).values, (0.0, 0.0))
        with self.assertRaises(molchan.InputError):
            molchan.mean_trace([trace, trace._replace(config=HELD_OUT)])
        with self.assertRaises(molchan.InputError):
            molchan.mean_trace([])

    def test_mean_of_noisy_trials(self):
        traces = molchan.generate_dataset(molchan.ParameterGrid((2.0,), (150.0,), (1.3,)),
                                          molchan.PAPER_SURFACES, 10, TIMES, 21)
        mean = molchan.mean_trace(traces)
        predicted = molchan.predict_trace(CONFIG, molchan.PAPER_SURFACES, TIMES)
        ratio = np.asarray(mean.values) / predicted
        # ten draws with sigma / f near 0.21
        self.assertLess(abs(float(ratio.mean()) - 1.0), 5 * 0.21 / math.sqrt(10))

    def test_generate_dataset(self):
        dataset = molchan.generate_dataset(molchan.ParameterGrid(), GENERATOR, 10, TIMES[:20], 4)
        self.assertEqual(len(dataset), 640)
        self.assertEqual(dataset, molchan.generate_dataset(molchan.ParameterGrid(), GENERATOR, 10, TIMES[:20], 4))
        silent = molchan.generate_dataset(molchan.ParameterGrid(), GENERATOR, 1, TIMES[:20], 4, silent=True)
        for trace in silent:
            predicted = molchan.predict_trace(trace.config, GENERATOR, trace.times)
            self.assertEqual(trace.values, tuple(float(x) for x in predicted))
        with self.assertRaises(molchan.InputError):
            molchan.generate_dataset(SMALL_GRID, GENERATOR, 0, TIMES, 4)

    def test_trace_seed(self):
        self.assertEqual(molchan.trace_seed(1, 2, 3), molchan.trace_seed(1, 2, 3))
        self.assertNotEqual(molchan.trace_seed(1, 2, 3), molchan.trace_seed(1, 3, 2))

    def test_time_grid(self):
        self.assertEqual(len(TIMES), 596)
        self.assertEqual((TIMES[0], TIMES[-1]), (0.5, 60.0))
        self.assertEqual(TIMES[5], 1.0)
        self.assertEqual(molchan.time_grid(10, 10, 0.1), (10.0,))
        with self.assertRaises(molchan.InputError):
            molchan.time_grid(1.0, 0.0, 0.1)

    def test_surfaces_file(self):
        text = molchan.write_surfaces(molchan.PAPER_SURFACES)
        self.assertTrue(text.startswith('f_beta_d=-0.4188\n'))
        self.assertEqual(molchan.parse_surfaces(text), molchan.PAPER_SURFACES)
        self.assertIs(molchan.load_surfaces('paper'), molchan.PAPER_SURFACES)
        with self.assertRaises(molchan.ParseError):
            molchan.parse_surfaces(text.replace('b_star', 'c_star'))
        with self.assertRaises(molchan.ParseError):
            molchan.parse_surfaces(text.replace('g_beta_0=-0.0427\n', ''))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, molchan.SURFACES_FILE)
            molchan.save_surfaces(path, GENERATOR)
            self.assertEqual(molchan.load_surfaces(path), GENERATOR)


class TestPlot(unittest.TestCase):
    def test_line_chart(self):
        svg = line_chart([('a', [1, 2, 3], [1.0, 4.0, 2.0]), ('b', [1, 2, 3], [2.0, 1.0, 3.0])], title='t')
        self.assertTrue(svg.tag.endswith('svg'))
        self.assertEqual(len(svg.findall('path')), 2)
        log_svg = line_chart([('a', [1, 2, 3], [1.0, 0.0, 100.0])], log_y=True)
        self.assertEqual(len(log_svg.findall('path')), 1)
        with self.assertRaises(molchan.InputError):
            line_chart([('a', [1], [1.0])] * 3)


if __name__ == '__main__':
    unittest.main()
