# MolChan Dataset Module
# -*- coding: utf-8 -*-
"""
 Trace and surfaces files, the parameter grid and synthetic datasets

 Trace file (UTF-8, LF newlines):
    # distance_m=<decimal>
    # spray_ms=<decimal>
    # init_voltage_V=<decimal>
    # trial=<integer>
    time_s,value
    <decimal>,<decimal>
    ...

 Surfaces file: one key=value line per SURFACE_KEYS entry, '#' comments allowed.

 Classes
    ParameterGrid(distances, spray_durations, init_voltages)    # Defaults to the 4x4x4 lab grid

 Functions
    parse_trace(text) / write_trace(trace)      # Data block read and written with pandas
    frame_csv(frame)                            # DataFrame as CSV text
    read_trace(path) / save_trace(path, trace)
    trace_filename(trace)                       # d<d>_s<s>_v<v>_t<trial>.csv
    load_dataset(directory) / save_dataset(directory, traces)
    enumerate_grid(grid)                        # Lexicographic SystemConfig list
    mean_trace(traces)                          # Pointwise average, trial AGGREGATE_TRIAL
    select_traces(traces, config)
    trace_seed(root_seed, config_index, trial_index)
    generate_dataset(grid, surfaces, trials_per_config, times, rng_seed, ...)
    time_grid(start, end, step)                 # Inclusive uniform grid
    parse_surfaces(text) / write_surfaces(surfaces)
    load_surfaces(path_or_paper) / save_surfaces(path, surfaces)
    write_table(table)                          # Coefficient table as CSV text
    write_diagnostics(result)                   # Calibration summary text

"""

# Modules
from collections import namedtuple
import glob
import io
import itertools
import logging
import math
import os
import re

import numpy as np
import pandas as pd

from .core import (
    AGGREGATE_TRIAL, PAPER_SURFACES, SURFACE_KEYS,
    CoefficientSurfaces, SystemConfig, MolChanError, DomainError, InputError, ParseError,
)
from .estimation import Trace
from .noise import NoiseDistribution, NoiseSpec, amplitude_draw, generate_noisy_trace

log = logging.getLogger(__name__)

TRACE_KEYS = ('distance_m', 'spray_ms', 'init_voltage_V', 'trial')
TRACE_COLUMNS = ('time_s', 'value')
TRACE_HEADER = ','.join(TRACE_COLUMNS)
TRACE_GLOB = '*.csv'
TABLE_COLUMNS = ('distance_m', 'spray_ms', 'init_voltage_V', 'mean_a', 'std_a', 'mean_c', 'std_c', 'trials')


def fmt(value):
    """Shortest decimal that reads back to the same float"""
    return repr(float(value))


class ParameterGrid(namedtuple('ParameterGrid', 'distances spray_durations init_voltages')):
    __slots__ = ()

    def __new__(cls, distances=(2.0, 3.0, 4.0, 5.0), spray_durations=(50.0, 100.0, 150.0, 200.0),
                init_voltages=(1.0, 1.3, 1.6, 1.9)):
        axes = []
        for name, axis in (('distances', distances), ('spray_durations', spray_durations),
                           ('init_voltages', init_voltages)):
            axis = tuple(sorted(set(float(x) for x in axis)))
            if not axis:
                raise InputError('grid axis %s is empty' % name)
            axes.append(axis)
        return super(ParameterGrid, cls).__new__(cls, *axes)

    @property
    def size(self):
        return len(self.distances) * len(self.spray_durations) * len(self.init_voltages)


def enumerate_grid(grid=None):
    grid = grid or ParameterGrid()
    return [SystemConfig(d, s, v) for d, s, v in
            itertools.product(grid.distances, grid.spray_durations, grid.init_voltages)]


########################################################
#                     Trace Files
########################################################

def frame_csv(frame):
    """CSV text of a DataFrame, shortest round-trip floats, LF newlines"""
    return frame.to_csv(index=False, lineterminator='\n')

def trace_frame(trace):
    return pd.DataFrame({
        'time_s': np.asarray(trace.times, dtype=float),
        'value': np.asarray(trace.values, dtype=float),
    }, columns=TRACE_COLUMNS)

def write_trace(trace):
    d, s, v = trace.config
    lines = [
        '# distance_m=%s' % fmt(d),
        '# spray_ms=%s' % fmt(s),
        '# init_voltage_V=%s' % fmt(v),
        '# trial=%d' % trace.trial_id,
    ]
    return '\n'.join(lines) + '\n' + frame_csv(trace_frame(trace))

def _number(text, lineno, what):
    try:
        value = float(text)
    except ValueError:
        raise ParseError('%s %r is not a number' % (what, text), lineno)
    if not math.isfinite(value):
        raise ParseError('%s %r is not finite' % (what, text), lineno)
    return value

def _column(df, name, linenos):
    column = df[name]
    if not pd.api.types.is_numeric_dtype(column) or pd.api.types.is_bool_dtype(column):
        # a non-numeric field keeps the whole column as text
        numeric = pd.to_numeric(column, errors='coerce')
        k = int(np.argmax(numeric.isna().to_numpy()))
        raise ParseError('%s %r is not a number' % (name, column.iloc[k]), linenos[k])
    values = column.to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        k = int(np.argmax(bad))
        raise ParseError('%s is missing or not finite' % name, linenos[k])
    return values

def _read_rows(rows, linenos):
    """Load the data rows below the header with pandas"""
    if not rows:
        return (), ()
    try:
        df = pd.read_csv(io.StringIO('\n'.join(rows)), header=None, float_precision='round_trip',
                         skipinitialspace=True)
    except pd.errors.ParserError as err:
        found = re.search(r'line (\d+)', str(err))
        k = int(found.group(1)) - 1 if found else -1
        raise ParseError('expected %d fields per row' % len(TRACE_COLUMNS),
                         linenos[k] if 0 <= k < len(linenos) else None)
    if df.shape[1] != len(TRACE_COLUMNS):
        extra = df.iloc[:, len(TRACE_COLUMNS):].notna().any(axis=1).to_numpy()
        k = int(np.argmax(extra)) if extra.any() else 0
        raise ParseError('expected %d fields per row' % len(TRACE_COLUMNS), linenos[k])
    df.columns = TRACE_COLUMNS
    times = _column(df, 'time_s', linenos)
    values = _column(df, 'value', linenos)
    if times[0] < 0:
        raise ParseError('negative time %r' % times[0], linenos[0])
    steps = np.diff(times)
    if (steps <= 0).any():
        k = int(np.argmax(steps <= 0)) + 1
        raise ParseError('time %r does not increase past %r' % (times[k], times[k - 1]), linenos[k])
    return tuple(float(x) for x in times), tuple(float(x) for x in values)

def parse_trace(text):
    """
    Parse one trace file.

    The metadata lines are read here, the data block after the header
    goes through pandas.read_csv.

    Args:
        text (str or file object): trace file contents

    Response:
        Trace, ParseError naming the line on any grammar violation
    """
    if hasattr(text, 'read'):
        text = text.read()
    meta = {}
    meta_line = {}
    header = None
    rows, linenos = [], []
    for lineno, raw in enumerate(text.split('\n'), 1):
        line = raw.strip()
        if not line:
            continue
        if header is not None:
            rows.append(line)
            linenos.append(lineno)
            continue
        if line.startswith('#'):
            key, sep, value = line[1:].partition('=')
            key = key.strip()
            if not sep:
                raise ParseError('metadata line is not key=value', lineno)
            if key in TRACE_KEYS:
                meta[key] = value.strip()
                meta_line[key] = lineno
            continue
        if line != TRACE_HEADER:
            raise ParseError('expected %r header, got %r' % (TRACE_HEADER, line), lineno)
        missing = [k for k in TRACE_KEYS if k not in meta]
        if missing:
            raise ParseError('missing metadata: %s' % ', '.join(missing), lineno)
        header = line
    if header is None:
        raise ParseError('no %r header found' % TRACE_HEADER)
    times, values = _read_rows(rows, linenos)

    try:
        config = SystemConfig(
            _number(meta['distance_m'], meta_line['distance_m'], 'distance_m'),
            _number(meta['spray_ms'], meta_line['spray_ms'], 'spray_ms'),
            _number(meta['init_voltage_V'], meta_line['init_voltage_V'], 'init_voltage_V'),
        )
    except DomainError as err:
        raise ParseError(str(err))
    try:
        trial = int(meta['trial'])
    except ValueError:
        raise ParseError('trial %r is not an integer' % meta['trial'], meta_line['trial'])
    return Trace(times, values, config, trial)


def read_trace(path):
    with open(path, 'r', encoding='utf-8') as handle:
        try:
            return parse_trace(handle)
        except ParseError as err:
            raise ParseError('%s: %s' % (path, err))

def save_trace(path, trace):
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(write_trace(trace))

def trace_filename(trace):
    d, s, v = trace.config
    return 'd%s_s%s_v%s_t%d.csv' % (fmt(d), fmt(s), fmt(v), trace.trial_id)

def load_dataset(directory):
    """All trace files of a directory, in file name order"""
    if not os.path.isdir(directory):
        raise InputError('%s is not a directory' % directory)
    paths = sorted(glob.glob(os.path.join(directory, TRACE_GLOB)))
    if not paths:
        raise InputError('no trace files in %s' % directory)
    log.debug("loading %d trace files from %s", len(paths), directory)
    return [read_trace(p) for p in paths]

def save_dataset(directory, traces):
    os.makedirs(directory, exist_ok=True)
    paths = []
    for trace in traces:
        path = os.path.join(directory, trace_filename(trace))
        save_trace(path, trace)
        paths.append(path)
    return paths

def select_traces(traces, config):
    return [t for t in traces if t.config == config]

def mean_trace(traces):
    """Pointwise mean of traces sharing one config and time grid"""
    traces = list(traces)
    if not traces:
        raise InputError('mean_trace needs at least one trace')
    first = traces[0]
    for other in traces[1:]:
        if other.config != first.config:
            raise InputError('cannot average %s with %s' % (first.config.label(), other.config.label()))
        if other.times != first.times:
            raise InputError('traces of %s have different time grids' % first.config.label())
    n = len(traces)
    values = [sum(column) / n for column in zip(*(t.values for t in traces))]
    return Trace(first.times, values, first.config, AGGREGATE_TRIAL)


########################################################
#                  Synthetic Datasets
########################################################

def time_grid(start, end, step):
    """start, start + step, ... up to and including end (within rounding)"""
    start, end, step = float(start), float(end), float(step)
    if not (math.isfinite(start) and math.isfinite(end) and step > 0 and math.isfinite(step)):
        raise InputError('time grid needs finite start, end and a positive step')
    if end < start:
        raise InputError('time grid end %r is before start %r' % (end, start))
    count = int(math.floor((end - start) / step + 1e-9)) + 1
    return tuple(round(start + k * step, 10) for k in range(count))

def trace_seed(root_seed, config_index, trial_index):
    """Per-trace seed mixed from (root seed, config index, trial index)"""
    if min(root_seed, config_index, trial_index) < 0:
        raise InputError('seeds and indices must be non-negative')
    words = np.random.SeedSequence([int(root_seed), int(config_index), int(trial_index)]).generate_state(1)
    return int(words[0])

def generate_dataset(grid, surfaces, trials_per_config, times, rng_seed,
                     distribution=NoiseDistribution.GAUSSIAN, silent=False, opts=None):
    """
    trials_per_config noisy traces for every grid config, in grid order.

    Response:
        list of Trace, a pure function of the arguments
    """
    trials_per_config = int(trials_per_config)
    if trials_per_config < 1:
        raise InputError('trials_per_config must be at least 1')
    spec = NoiseSpec(surfaces, distribution, silent=silent)
    traces = []
    clamped = 0
    for ci, config in enumerate(enumerate_grid(grid)):
        for ti in range(trials_per_config):
            seed = trace_seed(rng_seed, ci, ti)
            draw = amplitude_draw(config, spec, seed)
            clamped += draw.clamped
            traces.append(generate_noisy_trace(config, spec, times, seed, opts, trial_id=ti, draw=draw))
    if clamped:
        log.info("generate_dataset: %d of %d amplitudes raised to the floor", clamped, len(traces))
    log.debug("generate_dataset: %d traces", len(traces))
    return traces


########################################################
#                 Surfaces and Reports
########################################################

def write_surfaces(surfaces):
    values = surfaces.to_dict()
    return ''.join('%s=%s\n' % (k, fmt(values[k])) for k in SURFACE_KEYS)

def parse_surfaces(text):
    if hasattr(text, 'read'):
        text = text.read()
    values = {}
    for lineno, raw in enumerate(text.split('\n'), 1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition('=')
        key = key.strip()
        if not sep:
            raise ParseError('expected key=value', lineno)
        if key not in SURFACE_KEYS:
            raise ParseError('unknown surfaces key %r' % key, lineno)
        if key in values:
            raise ParseError('duplicate surfaces key %r' % key, lineno)
        values[key] = _number(value.strip(), lineno, key)
    missing = [k for k in SURFACE_KEYS if k not in values]
    if missing:
        raise ParseError('surfaces missing keys: %s' % ', '.join(missing))
    try:
        return CoefficientSurfaces.from_dict(values)
    except MolChanError as err:
        raise ParseError(str(err))

def load_surfaces(source):
    """Surfaces from a file path, or the published constants for 'paper'"""
    if source == 'paper':
        return PAPER_SURFACES
    with open(source, 'r', encoding='utf-8') as handle:
        return parse_surfaces(handle)

def save_surfaces(path, surfaces):
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(write_surfaces(surfaces))

def write_table(table):
    records = [tuple(config) + tuple(row[:4]) + (row.trial_count,) for config, row in table]
    return frame_csv(pd.DataFrame.from_records(records, columns=TABLE_COLUMNS))

def write_diagnostics(result):
    lines = ['b_star=%s' % fmt(result.surfaces.b_star)]
    lines.extend('rmse_%s=%s' % (name, fmt(value)) for name, value in result.diagnostics.items())
    stalled = sum(1 for f in result.free_fits + result.per_trace_fits if not f.fit.converged)
    lines.append('unconverged_fits=%d' % stalled)
    lines.append('clamped_L=%d' % len(result.clamped_L))
    for config in result.clamped_L:
        lines.append('# L clamped at %s' % config.label())
    return '\n'.join(lines) + '\n'
