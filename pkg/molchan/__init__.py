# MolChan Module
# -*- coding: utf-8 -*-
"""
 Python module to model, calibrate and simulate a sprayed-chemical
 molecular communication link read out by a metal-oxide gas sensor

  Model (core)
    eval_impulse_response(t, coeffs, d, opts)   # h(t; a, b, c)
    eval_universal_response(t, config, surfaces, opts)
    eval_f / eval_g / eval_L(config, surfaces)  # Coefficient surfaces
    peak_time(b, c, d)

  Estimation
    fit_channel(trace, options)                 # Free (a, b, c) fit
    fit_channel_fixed_b(trace, b_star, options) # (a, c) fit, b fixed
    calibrate(dataset, options)                 # Traces -> CoefficientSurfaces
    predict_trace(config, surfaces, times)

  Noise
    sample_noise(config, spec, rng_seed, count)
    generate_noisy_trace(config, spec, times, rng_seed)

  Dataset
    parse_trace(text) / write_trace(trace)
    generate_dataset(grid, surfaces, trials_per_config, times, rng_seed)
    load_dataset(directory) / save_dataset(directory, traces)

  Command line
    python -m molchan <fit|calibrate|predict|simulate|noise|verify|grid> ...

"""

from .core import *
from .core import __version__

from .estimation import (
    Trace, FitOptions, FitResult, TraceFit, CoefficientRow, CoefficientTable, CalibrationResult,
    ModelComparison, MarginalEffect,
    fit_channel, fit_channel_fixed_b, fit_legacy_channel, compare_models, linearized_guess,
    extremum_guess, rmse, compute_b_star, aggregate_coefficients, marginal_effects,
    fit_linear_surfaces, surface_residuals, calibrate, predict_trace,
)
from .noise import (
    NoiseDistribution, NoiseSpec, NoiseSampleSet, AmplitudeDraw,
    noise_sample, noise_samples_by_config, sample_noise, amplitude_draw,
    generate_noisy_trace, additive_noise, noise_stats,
)
from .dataset import (
    ParameterGrid, enumerate_grid, parse_trace, write_trace, read_trace, save_trace,
    trace_filename, load_dataset, save_dataset, select_traces, mean_trace, time_grid,
    trace_seed, generate_dataset, parse_surfaces, write_surfaces, load_surfaces,
    save_surfaces, write_table, write_diagnostics, frame_csv, TRACE_COLUMNS, TABLE_COLUMNS,
)
