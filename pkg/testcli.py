#!/usr/bin/env python3

import io
import json
import logging
import os
import tempfile

import unittest
try:
    from unittest.mock import MagicMock, patch  # Python 3
except ImportError:
    from mock import MagicMock, patch

log = logging.getLogger('molchan')
logging.basicConfig()

import molchan
from molchan import estimation
from molchan.__main__ import main

GENERATOR = molchan.PAPER_SURFACES._replace(f_betas=(-0.4188, 0.0098, -1.7873, 6.0))
CONFIG_FLAGS = ['--distance', '2', '--spray', '150', '--voltage', '1.3']


def run(*argv):
    """Run the command line, return (exit code, stdout, stderr)"""
    with patch('sys.stdout', new_callable=io.StringIO) as out, \
            patch('sys.stderr', new_callable=io.StringIO) as err, \
            patch.dict(os.environ, {'MOLCHAN_LOG': 'off'}):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()

def key_values(text):
    pairs = {}
    for line in text.splitlines():
        key, sep, value = line.partition('=')
        if sep and ',' not in line:
            pairs[key.lstrip('# ')] = value
    return pairs

def csv_rows(text):
    return [line.split(',') for line in text.splitlines() if line and not line.startswith('#')][1:]


class TestCommandLine(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, *parts):
        return os.path.join(self.dir, *parts)

    def test_no_command_prints_help(self):
        code, out, _ = run()
        self.assertEqual(code, 0)
        self.assertIn('commands', out)

    def test_grid(self):
        code, out, _ = run('grid')
        self.assertEqual(code, 0)
        lines = out.splitlines()
        self.assertEqual(lines[0], 'distance_m,spray_ms,init_voltage_V')
        self.assertEqual(len(lines), 65)
        self.assertEqual(lines[1], '2.0,50.0,1.0')
        code, out, _ = run('grid', '--distances', '2,3', '--durations', '50', '--voltages', '1.0')
        self.assertEqual(len(out.splitlines()), 3)

    def test_predict_single_point(self):
        code, out, err = run('predict', *CONFIG_FLAGS, '--t-start', '10', '--t-end', '10')
        self.assertEqual(code, 0)
        rows = csv_rows(out)
        self.assertEqual(len(rows), 1)
        self.assertAlmostEqual(float(rows[0][1]), 24.976, delta=1e-2)
        self.assertEqual(err, '')

    def test_predict_held_out_shapes(self):
        for flags in (('2.5', '130', '1.5'), ('3.5', '170', '1.1')):
            svg = self.path('curve.svg')
            code, out, _ = run('predict', '--distance', flags[0], '--spray', flags[1], '--voltage', flags[2],
                               '--surfaces', 'paper', '--svg', svg)
            self.assertEqual(code, 0)
            values = [float(r[1]) for r in csv_rows(out)]
            self.assertEqual(len(values), 596)
            signs = [v2 > v1 for v1, v2 in zip(values, values[1:]) if v2 != v1]
            changes = sum(1 for s1, s2 in zip(signs, signs[1:]) if s1 != s2)
            self.assertEqual(changes, 1)
            self.assertTrue(os.path.exists(svg))

    def test_predict_errors(self):
        code, _, err = run('predict', *CONFIG_FLAGS, '--t-start', '0.05')
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(err)['Err'], str(molchan.ERR_INPUT))
        code, _, err = run('predict', '--distance', '6', '--spray', '100', '--voltage', '1.3', '-nocolor')
        self.assertEqual(code, 0)
        self.assertIn('outside the calibrated hull', err)

    def test_simulate_sigma_zero_matches_predict(self):
        code, simulated, _ = run('simulate', *CONFIG_FLAGS, '--sigma-zero')
        self.assertEqual(code, 0)
        code, predicted, _ = run('predict', *CONFIG_FLAGS)
        self.assertEqual(csv_rows(simulated), csv_rows(predicted))

    def test_simulate_determinism(self):
        first = run('simulate', *CONFIG_FLAGS, '--seed', '5', '--trial', '2')
        self.assertEqual(first, run('simulate', *CONFIG_FLAGS, '--seed', '5', '--trial', '2'))
        self.assertNotEqual(first, run('simulate', *CONFIG_FLAGS, '--seed', '6', '--trial', '2'))
        self.assertEqual(molchan.parse_trace(first[1]).trial_id, 2)

    def test_simulate_dataset(self):
        out = self.path('traces')
        code, _, _ = run('simulate', '--dataset', '--trials', '10', '--out', out, '--t-end', '5')
        self.assertEqual(code, 0)
        self.assertEqual(len(os.listdir(out)), 640)
        code, _, _ = run('simulate', '--out', out)
        self.assertEqual(code, 1)

    def test_fit(self):
        trace_path = self.path('trace.csv')
        code, _, _ = run('simulate', *CONFIG_FLAGS, '--sigma-zero', '--out', trace_path)
        self.assertEqual(code, 0)

        code, out, _ = run('fit', trace_path)
        self.assertEqual(code, 0)
        result = key_values(out)
        self.assertEqual(result['converged'], 'true')
        self.assertLess(abs(float(result['a']) - molchan.eval_f(molchan.SystemConfig(2, 150, 1.3), molchan.PAPER_SURFACES)) / 2.95581, 1e-3)
        self.assertLess(abs(float(result['c']) - 0.27616) / 0.27616, 1e-3)
        self.assertIn('time_s,observed,fitted,residual', out)

        code, out, _ = run('fit', trace_path, '--fixed-b', '0.1950')
        self.assertEqual(code, 0)
        self.assertEqual(float(key_values(out)['b']), 0.1950)

        code, out, _ = run('fit', trace_path, '--compare')
        self.assertEqual(code, 0)
        self.assertEqual(key_values(out)['better'], 'universal')

        svg = self.path('fit.svg')
        code, _, _ = run('fit', trace_path, '--legacy', '--svg', svg)
        self.assertIn(code, (0, 2))
        self.assertTrue(os.path.exists(svg))

    def test_fit_errors(self):
        code, _, err = run('fit', self.path('missing.csv'))
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(err)['Err'], str(molchan.ERR_IO))
        bad = self.path('bad.csv')
        with open(bad, 'w') as handle:
            handle.write('# distance_m=2\ntime_s,value\n')
        code, _, err = run('fit', bad)
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(err)['Err'], str(molchan.ERR_PARSE))

    def test_calibrate_inverts_simulation(self):
        surfaces_path = self.path('generator.txt')
        molchan.save_surfaces(surfaces_path, GENERATOR)
        traces = self.path('traces')
        results = self.path('results')
        code, _, _ = run('simulate', '--dataset', '--sigma-zero', '--surfaces', surfaces_path, '--out', traces,
                         '--distances', '2,3', '--durations', '50,100', '--voltages', '1.0,1.3')
        self.assertEqual(code, 0)
        code, out, _ = run('calibrate', traces, '--out', results, '--workers', '2')
        self.assertEqual(code, 0)
        self.assertIn('8 traces', out)

        fitted = molchan.load_surfaces(os.path.join(results, molchan.SURFACES_FILE))
        self.assertAlmostEqual(fitted.b_star, GENERATOR.b_star, delta=1e-6)
        for got, want in zip(fitted.f_betas + fitted.g_betas, GENERATOR.f_betas + GENERATOR.g_betas):
            self.assertAlmostEqual(got, want, delta=1e-6)
        with open(os.path.join(results, molchan.TABLE_FILE)) as handle:
            table = handle.read().splitlines()
        self.assertEqual(len(table), 9)
        self.assertTrue(table[1].startswith('2.0,50.0,1.0,'))
        with open(os.path.join(results, molchan.DIAGNOSTICS_FILE)) as handle:
            self.assertIn('rmse_f=', handle.read())

    def test_calibrate_errors(self):
        empty = self.path('empty')
        os.mkdir(empty)
        code, _, _ = run('calibrate', empty)
        self.assertEqual(code, 1)

        traces = self.path('flat')
        run('simulate', '--dataset', '--out', traces, '--distances', '2,3', '--durations', '50', '--voltages', '1.0,1.3')
        code, _, err = run('calibrate', traces, '--out', self.path('results'))
        self.assertEqual(code, 1)
        self.assertIn('surfaces', json.loads(err)['Payload'])

    def test_noise(self):
        code, out, _ = run('noise', *CONFIG_FLAGS, '--count', '2000', '--seed', '3')
        self.assertEqual(code, 0)
        summary = key_values(out)
        self.assertAlmostEqual(float(summary['sigma']), 0.61981, delta=1e-9)
        self.assertLess(abs(float(summary['std']) - 0.61981) / 0.61981, 0.1)
        self.assertEqual(len(out.splitlines()), 2004)
        self.assertEqual(out, run('noise', *CONFIG_FLAGS, '--count', '2000', '--seed', '3')[1])
        code, out, _ = run('noise', *CONFIG_FLAGS, '--count', '10', '--distribution', 'laplace')
        self.assertEqual(code, 0)

    def test_verify(self):
        traces = self.path('observed')
        run('simulate', '--dataset', '--sigma-zero', '--out', traces,
            '--distances', '2', '--durations', '150', '--voltages', '1.3')
        svg = self.path('verify.svg')
        code, out, _ = run('verify', traces, *CONFIG_FLAGS, '--svg', svg)
        self.assertEqual(code, 0)
        self.assertEqual(key_values(out)['rmse'], '0.0')
        self.assertTrue(os.path.exists(svg))

        code, _, _ = run('verify', traces, '--distance', '3', '--spray', '150', '--voltage', '1.3')
        self.assertEqual(code, 1)

    def test_verify_noisy_trials(self):
        traces = self.path('observed')
        run('simulate', '--dataset', '--trials', '10', '--seed', '2', '--out', traces,
            '--distances', '2', '--durations', '150', '--voltages', '1.3')
        code, out, _ = run('verify', traces, *CONFIG_FLAGS)
        self.assertEqual(code, 0)
        rows = csv_rows(out)
        predicted = [float(r[1]) for r in rows]
        # mean of ten draws, sigma over f near 0.21
        floor = 0.61981 / 2.95581 * sum(predicted) / len(predicted) / 10 ** 0.5
        self.assertLess(float(key_values(out)['rmse']), 5 * floor)

    def test_negative_amplitude_is_reported(self):
        flags = ['--distance', '5', '--spray', '50', '--voltage', '1.9', '-nocolor']
        code, predicted, err = run('predict', *flags)
        self.assertEqual(code, 0)
        self.assertIn('amplitude surface', err)
        self.assertTrue(all(float(r[1]) < 0 for r in csv_rows(predicted)))
        code, simulated, err = run('simulate', *flags, '--sigma-zero')
        self.assertEqual(code, 0)
        self.assertIn('amplitude surface', err)
        self.assertTrue(all(float(r[1]) > 0 for r in csv_rows(simulated)))

    def test_calibrate_numerical_failure_exits_2(self):
        traces = self.path('traces')
        run('simulate', '--dataset', '--out', traces, '--distances', '2', '--durations', '50', '--voltages', '1.0')
        with patch.object(estimation, 'fit_channel', MagicMock(side_effect=molchan.NumericalError('diverged'))):
            code, _, err = run('calibrate', traces, '--out', self.path('results'))
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(err)['Err'], str(molchan.ERR_NUMERIC))
        self.assertIn('free-fit', json.loads(err)['Payload'])

    def test_repeated_runs_are_byte_identical(self):
        surfaces_path = self.path('generator.txt')
        molchan.save_surfaces(surfaces_path, GENERATOR)
        traces = self.path('traces')
        run('simulate', '--dataset', '--trials', '2', '--seed', '4', '--surfaces', surfaces_path, '--out', traces,
            '--distances', '2,3', '--durations', '50,100', '--voltages', '1.0,1.3')
        outputs = []
        for workers in ('1', '2'):
            results = self.path('results' + workers)
            code, _, _ = run('calibrate', traces, '--out', results, '--workers', workers)
            self.assertEqual(code, 0)
            files = {}
            for name in (molchan.SURFACES_FILE, molchan.TABLE_FILE, molchan.DIAGNOSTICS_FILE):
                with open(os.path.join(results, name), 'rb') as handle:
                    files[name] = handle.read()
            outputs.append(files)
        self.assertEqual(outputs[0], outputs[1])

        trace_path = os.path.join(traces, sorted(os.listdir(traces))[0])
        for argv in (('predict', *CONFIG_FLAGS),
                     ('fit', trace_path),
                     ('verify', traces, '--distance', '2', '--spray', '50', '--voltage', '1.0'),
                     ('grid',)):
            first = run(*argv)
            self.assertIn(first[0], (0, 2), argv)
            self.assertEqual(first, run(*argv))

    def test_log_level_from_environment(self):

        with patch('sys.stderr', new_callable=io.StringIO) as err, \
                patch.dict(os.environ, {'MOLCHAN_LOG': 'loud'}):
            code = main(['grid'])
        self.assertEqual(code, 1)
        self.assertIn('loud', err.getvalue())


if __name__ == '__main__':
    unittest.main()
