#!/usr/bin/env python
# -*- coding: utf-8 -*-
# PYTHON_ARGCOMPLETE_OK
# MolChan Module
"""
 Command line front end for the molchan channel toolkit

 Fit a single trace:
    python -m molchan fit trace.csv [--fixed-b 0.195]
 Calibrate the coefficient surfaces from a directory of traces:
    python -m molchan calibrate traces/ --out results/
 Predict, simulate, sample noise, verify, list the grid:
    python -m molchan predict --distance 2.5 --spray 130 --voltage 1.5 --surfaces paper
    python -m molchan simulate --dataset --trials 10 --out traces/
    python -m molchan noise --distance 2 --spray 150 --voltage 1.3 --count 1000
    python -m molchan verify traces/ --distance 2 --spray 150 --voltage 1.3
    python -m molchan grid

 Exit codes: 0 success, 1 input or file error, 2 numerical failure or non-convergence.
 MOLCHAN_LOG=off|info|debug sets the log level.

"""

# Modules
import argparse
import json
import os
import sys
try:
    import argcomplete
    HAVE_ARGCOMPLETE = True
except ImportError:
    HAVE_ARGCOMPLETE = False

import numpy as np
import pandas as pd

from .core import (
    version, DEFAULT_T_START, DEFAULT_T_END, DEFAULT_T_STEP, DEFAULT_EVALUATION,
    SURFACES_FILE, TABLE_FILE, DIAGNOSTICS_FILE, ERR_CONVERGE, ERR_IO, ERR_NUMERIC,
    SystemConfig, InputError, MolChanError,
    error_json, set_debug, set_log_level, termcolor,
    eval_impulse_response, eval_legacy_response, eval_f, eval_L,
)
from .estimation import (
    FitOptions, calibrate, compare_models, fit_channel, fit_channel_fixed_b, fit_legacy_channel,
    predict_trace,
)
from .noise import NoiseDistribution, NoiseSpec, generate_noisy_trace, noise_stats, sample_noise
from .dataset import (
    ParameterGrid, enumerate_grid, fmt, frame_csv, generate_dataset, load_dataset, load_surfaces,
    mean_trace, read_trace, save_dataset, save_surfaces, select_traces, time_grid,
    trace_seed, write_diagnostics, write_table, write_trace,
)
from .plot import line_chart, save_chart

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERIC = 2

cmd_list = {
    'fit': 'Fit the channel coefficients of one trace file',
    'calibrate': 'Calibrate the coefficient surfaces from a directory of trace files',
    'predict': 'Predict the response of a system configuration',
    'simulate': 'Write synthetic noisy trace files',
    'noise': 'Sample the amplitude noise of a system configuration',
    'verify': 'Compare the averaged observed traces of a configuration with the prediction',
    'grid': 'Print the system parameter grid as CSV',
}


def _axis(text):
    try:
        return tuple(float(x) for x in text.split(',') if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma separated numbers, got %r' % text)

def build_parser():
    prog = 'python3 -m molchan' if sys.argv[0][-11:] == '__main__.py' else None
    description = 'MolChan [%s]' % (version,)
    parser = argparse.ArgumentParser(prog=prog, description=description)

    # Options for all functions
    parser.add_argument('-debug', '-d', help='Enable debug messages', action='store_true')
    parser.add_argument('-nocolor', help='Disable color text output', action='store_true')

    subparser = parser.add_subparsers(dest='command', title='commands (run <command> -h to see usage information)')
    subparsers = {}
    for sp in cmd_list:
        subparsers[sp] = subparser.add_parser(sp, help=cmd_list[sp])
        subparsers[sp].add_argument('-debug', '-d', help='Enable debug messages', action='store_true', dest='debug2')
        subparsers[sp].add_argument('-nocolor', help='Disable color text output', action='store_true', dest='nocolor2')

        if sp in ('predict', 'simulate', 'noise', 'verify'):
            required = sp != 'simulate'
            subparsers[sp].add_argument('--distance', type=float, required=required, metavar='M', help='Distance in meters')
            subparsers[sp].add_argument('--spray', type=float, required=required, metavar='MS', help='Spray duration in ms')
            subparsers[sp].add_argument('--voltage', type=float, required=required, metavar='V', help='Initial sensor voltage')
            subparsers[sp].add_argument('--surfaces', default='paper', metavar='FILE',
                                        help='Surfaces file, or "paper" for the published surfaces [Default: paper]')
        if sp in ('predict', 'simulate'):
            subparsers[sp].add_argument('--t-start', type=float, default=DEFAULT_T_START, help='[Default: %s]' % DEFAULT_T_START)
            subparsers[sp].add_argument('--t-end', type=float, default=DEFAULT_T_END, help='[Default: %s]' % DEFAULT_T_END)
            subparsers[sp].add_argument('--t-step', type=float, default=DEFAULT_T_STEP, help='[Default: %s]' % DEFAULT_T_STEP)
        if sp in ('simulate', 'noise'):
            subparsers[sp].add_argument('--seed', type=int, default=0, help='Root random seed [Default: 0]')
            subparsers[sp].add_argument('--distribution', default='gaussian',
                                        choices=[m.value for m in NoiseDistribution], help='[Default: gaussian]')
        if sp in ('simulate', 'grid'):
            subparsers[sp].add_argument('--distances', type=_axis, help='Comma separated distances')
            subparsers[sp].add_argument('--durations', type=_axis, help='Comma separated spray durations')
            subparsers[sp].add_argument('--voltages', type=_axis, help='Comma separated initial voltages')
        if sp in ('fit', 'calibrate'):
            subparsers[sp].add_argument('--max-iterations', type=int, default=200, help='[Default: 200]')
            subparsers[sp].add_argument('--tolerance', type=float, default=1e-8, help='Relative SSE tolerance [Default: 1e-8]')
        if sp in ('fit', 'predict', 'verify'):
            subparsers[sp].add_argument('--svg', metavar='FILE', help='Also write an SVG plot')
        subparsers[sp].add_argument('--out', metavar='PATH', help='Output file or directory [Default: stdout]')

    subparsers['fit'].add_argument('trace', help='Trace file')
    subparsers['fit'].add_argument('--fixed-b', type=float, metavar='B', help='Hold b at this value')
    subparsers['fit'].add_argument('--legacy', action='store_true', help='Fit the propagation-only model')
    subparsers['fit'].add_argument('--compare', action='store_true', help='Fit both models and compare RMSE')
    subparsers['calibrate'].add_argument('dataset', help='Directory of trace files')
    subparsers['calibrate'].add_argument('--workers', type=int, default=1, help='Fit threads [Default: 1]')
    subparsers['predict'].add_argument('--log-y', action='store_true', help='Logarithmic y axis in the SVG plot')
    subparsers['simulate'].add_argument('--trials', type=int, default=1, help='Trials per configuration [Default: 1]')
    subparsers['simulate'].add_argument('--trial', type=int, default=0, help='Trial index of a single trace [Default: 0]')
    subparsers['simulate'].add_argument('--dataset', action='store_true', help='Write the whole grid to the --out directory')
    subparsers['simulate'].add_argument('--sigma-zero', action='store_true', help='Disable the amplitude noise')
    subparsers['noise'].add_argument('--count', type=int, default=1000, help='Number of samples [Default: 1000]')
    subparsers['verify'].add_argument('observed', help='Directory of observed trace files')

    if HAVE_ARGCOMPLETE:
        argcomplete.autocomplete(parser)
    return parser


def _emit(text, path=None):
    if path:
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)

def _config(args):
    return SystemConfig(args.distance, args.spray, args.voltage)

def _times(args):
    return time_grid(args.t_start, args.t_end, args.t_step)

def _grid(args):
    default = ParameterGrid()
    return ParameterGrid(
        args.distances or default.distances,
        args.durations or default.spray_durations,
        args.voltages or default.init_voltages,
    )

def _hull_warning(config, term):
    if not config.in_calibrated_hull:
        sys.stderr.write('%sWarning:%s %s is outside the calibrated hull, extrapolating\n'
                         % (term.yellow, term.normal, config.label()))

def _amplitude_warning(config, surfaces, term):
    a = eval_f(config, surfaces)
    if a <= 0:
        sys.stderr.write('%sWarning:%s amplitude surface is %s at %s, not a physical response\n'
                         % (term.yellow, term.normal, fmt(a), config.label()))

def _fit_options(args):
    return FitOptions(max_iterations=args.max_iterations, relative_sse_tolerance=args.tolerance)

def _report(fit):
    a, b, c = fit.coefficients
    return ''.join('%s=%s\n' % kv for kv in (
        ('a', fmt(a)), ('b', fmt(b)), ('c', fmt(c)), ('rmse', fmt(fit.rmse)), ('sse', fmt(fit.sse)),
        ('iterations', fit.iterations), ('converged', 'true' if fit.converged else 'false'),
    ))

def _not_converged(what):
    sys.stderr.write(json.dumps(error_json(ERR_CONVERGE, what)) + '\n')
    return EXIT_NUMERIC


########################################################
#                      Commands
########################################################

def cmd_fit(args, term):
    trace = read_trace(args.trace)
    options = _fit_options(args)
    t, obs = trace.arrays()
    keep = t >= max(options.fit_window_start, options.evaluation.t_min)
    t, obs = t[keep], obs[keep]

    if args.compare:
        comparison = compare_models(trace, options)
        _emit(''.join('%s=%s\n' % kv for kv in (
            ('universal_rmse', fmt(comparison.universal.rmse)),
            ('legacy_rmse', fmt(comparison.legacy.rmse)),
            ('better', comparison.better),
        )), args.out)
        return EXIT_OK if comparison.universal.converged else _not_converged('model comparison %s' % args.trace)

    if args.legacy:
        fit = fit_legacy_channel(trace, options)
        p = fit.coefficients
        fitted = eval_legacy_response(t, p.a, p.b, p.c, trace.config.distance)
    else:
        if args.fixed_b is not None:
            fit = fit_channel_fixed_b(trace, args.fixed_b, options)
        else:
            fit = fit_channel(trace, options)
        fitted = eval_impulse_response(t, fit.coefficients, trace.config.distance, options.evaluation)

    rows = pd.DataFrame({'time_s': t, 'observed': obs, 'fitted': fitted, 'residual': obs - fitted})
    _emit(_report(fit) + frame_csv(rows), args.out)
    if args.svg:
        save_chart(args.svg, line_chart(
            [('observed', t, obs), ('fitted', t, fitted)], title=trace.label()))
    return EXIT_OK if fit.converged else _not_converged('fit of %s' % args.trace)

def cmd_calibrate(args, term):
    dataset = load_dataset(args.dataset)
    options = _fit_options(args)._replace(workers=max(1, args.workers))
    result = calibrate(dataset, options)
    out = args.out or '.'
    os.makedirs(out, exist_ok=True)
    save_surfaces(os.path.join(out, SURFACES_FILE), result.surfaces)
    _emit(write_table(result.table), os.path.join(out, TABLE_FILE))
    _emit(write_diagnostics(result), os.path.join(out, DIAGNOSTICS_FILE))
    sys.stdout.write('%scalibrated%s %d traces, %d configs, b_star=%s -> %s\n' % (
        term.bold, term.normal, len(dataset), len(result.table), fmt(result.surfaces.b_star), out))
    return EXIT_OK

def cmd_predict(args, term):
    config = _config(args)
    surfaces = load_surfaces(args.surfaces)
    times = _times(args)
    _hull_warning(config, term)
    _amplitude_warning(config, surfaces, term)
    values = predict_trace(config, surfaces, times)
    _emit(frame_csv(pd.DataFrame({'time_s': np.asarray(times, dtype=float), 'value': values})), args.out)
    if args.svg:
        save_chart(args.svg, line_chart([('predicted', times, values)], title=config.label(), log_y=args.log_y))
    return EXIT_OK

def cmd_simulate(args, term):
    surfaces = load_surfaces(args.surfaces)
    times = _times(args)
    if args.dataset:
        traces = generate_dataset(_grid(args), surfaces, args.trials, times, args.seed,
                                  distribution=args.distribution, silent=args.sigma_zero)
        paths = save_dataset(args.out or 'dataset', traces)
        sys.stdout.write('wrote %d trace files to %s\n' % (len(paths), args.out or 'dataset'))
        return EXIT_OK
    if args.distance is None or args.spray is None or args.voltage is None:
        raise InputError('simulate needs --distance, --spray and --voltage unless --dataset is given')
    config = _config(args)
    _hull_warning(config, term)
    _amplitude_warning(config, surfaces, term)
    spec = NoiseSpec(surfaces, args.distribution, silent=args.sigma_zero)
    trace = generate_noisy_trace(config, spec, times, trace_seed(args.seed, 0, args.trial), trial_id=args.trial)
    _emit(write_trace(trace), args.out)
    return EXIT_OK

def cmd_noise(args, term):
    config = _config(args)
    surfaces = load_surfaces(args.surfaces)
    spec = NoiseSpec(surfaces, args.distribution)
    samples = sample_noise(config, spec, args.seed, args.count)
    lines = ['# sigma=%s' % fmt(eval_L(config, surfaces).sigma)]
    if len(samples) > 1:
        mean, std = noise_stats(samples)
        lines += ['# mean=%s' % fmt(mean), '# std=%s' % fmt(std)]
    noise = pd.DataFrame({'noise': np.asarray(samples.samples, dtype=float)})
    _emit('\n'.join(lines) + '\n' + frame_csv(noise), args.out)
    return EXIT_OK

def cmd_verify(args, term):
    config = _config(args)
    surfaces = load_surfaces(args.surfaces)
    matching = select_traces(load_dataset(args.observed), config)
    if not matching:
        raise InputError('no observed traces for %s in %s' % (config.label(), args.observed))
    _hull_warning(config, term)
    observed = mean_trace(matching)
    keep = [k for k, t in enumerate(observed.times) if t >= DEFAULT_EVALUATION.t_min]
    times = np.asarray([observed.times[k] for k in keep])
    obs = np.asarray([observed.values[k] for k in keep])
    predicted = predict_trace(config, surfaces, times)
    residual = obs - predicted
    error = float(np.sqrt(np.mean(residual ** 2))) if residual.size else 0.0
    summary = '# trials=%d\n# rmse=%s\n' % (len(matching), fmt(error))
    rows = pd.DataFrame({'time_s': times, 'predicted': predicted, 'observed': obs, 'residual': residual})
    _emit(summary + frame_csv(rows), args.out)
    if args.svg:
        save_chart(args.svg, line_chart(
            [('predicted', times, predicted), ('mean observed', times, obs)], title=config.label()))
    return EXIT_OK

def cmd_grid(args, term):
    configs = pd.DataFrame.from_records(
        [tuple(config) for config in enumerate_grid(_grid(args))],
        columns=('distance_m', 'spray_ms', 'init_voltage_V'))
    _emit(frame_csv(configs), args.out)
    return EXIT_OK

commands = {
    'fit': cmd_fit,
    'calibrate': cmd_calibrate,
    'predict': cmd_predict,
    'simulate': cmd_simulate,
    'noise': cmd_noise,
    'verify': cmd_verify,
    'grid': cmd_grid,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    nocolor = args.nocolor or getattr(args, 'nocolor2', False)
    term = termcolor(not nocolor)

    try:
        if args.debug or getattr(args, 'debug2', False):
            print('Parsed args:', args)
            set_debug(True, not nocolor)
        else:
            set_log_level(os.environ.get('MOLCHAN_LOG', 'off'))
    except MolChanError as err:
        sys.stderr.write(json.dumps(error_json(err.code, str(err))) + '\n')
        return EXIT_INPUT

    if not args.command:
        # No command selected - show help
        parser.print_help()
        return EXIT_OK

    try:
        return commands[args.command](args, term)
    except MolChanError as err:
        sys.stderr.write(json.dumps(error_json(err.code, str(err))) + '\n')
        return EXIT_NUMERIC if err.code == ERR_NUMERIC else EXIT_INPUT
    except OSError as err:
        sys.stderr.write(json.dumps(error_json(ERR_IO, str(err))) + '\n')
        return EXIT_INPUT

if __name__ == '__main__':
    sys.exit(main())

# End
