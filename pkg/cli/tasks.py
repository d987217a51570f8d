"""
tasks.py — one handler per scenario task.

A handler takes (scenario, writer, workers), writes its artifacts through the ArtifactWriter and returns the
per-task summary that goes into the manifest. Variants of a scenario are written next to the base run with the
variant label as file-name suffix.
"""

from dataclasses import asdict

import numpy as np

from cascade import corr, dynamics, fitkit, steady
from cli.scenarios import build_grid
from utils import logging as logmod


def _suffixed(stem, label, extension):
	return f"{stem}.{extension}" if label == 'base' else f"{stem}_{label}.{extension}"


def _grid_option(options, key):
	return build_grid(options[key]) if key in options else None


def _sweep_sidecar(result):
	return {
		'axes': [{'name': a.name, 'unit': a.unit, 'points': len(a)} for a in result.axes],
		'metadata': result.metadata,
		'failures': {str(k): v for k, v in result.failures.items()},
	}


def _lifetime_fits(traj, window):
	fits = {}
	for cavity in ('u', 'l'):
		result = fitkit.fit_exponential(traj.times, dynamics.photon_flux(traj, cavity), window)
		fits[cavity] = {'tau_ns': result['tau'], 'tau_error_ns': result.uncertainty('tau'), 'residual_rms': result.residual_rms}
	return fits


# ============================
# Handlers
# ============================
def run_pulse(scenario, writer, workers):
	options = scenario.options
	summary = {}
	for label, params in scenario.variant_params():
		calibration = dynamics.cached_calibration(params) if params.drive.needs_calibration else None
		traj, probabilities = dynamics.pulsed_emission(params, t_end=options.get('t_end_ns'), sample_dt=options.get('sample_dt_ns'))
		writer.trajectory(_suffixed('trajectory', label, 'csv'), traj)
		eta_u, eta_l, eta_pair = dynamics.pair_efficiency_product(probabilities, params.collection)
		entry = {
			'omega_D': traj.params.drive.omega_D,
			'calibration': asdict(calibration) if calibration is not None else None,
			'P_u': probabilities.P_u,
			'P_l': probabilities.P_l,
			'eta_u': eta_u,
			'eta_l': eta_l,
			'eta_u_times_eta_l': eta_pair,
			'truncated': probabilities.truncated,
			'residual_excitation': probabilities.residual_excitation,
			'trace_error': traj.trace_error,
			'final_P_g': float(traj['P_g'][-1]),
			'max_P_i': traj.peak('P_i'),
			'peak_n_u': traj.peak('n_u'),
			'peak_n_l': traj.peak('n_l'),
		}
		if 'fit_window_ns' in options:
			entry['lifetimes'] = _lifetime_fits(traj, options['fit_window_ns'])
		summary[label] = entry
	writer.json('emission.json', summary)
	return summary


def run_steady_sweep(scenario, writer, workers):
	grid = _grid_option(scenario.options, 'delta_D')
	summary = {}
	for label, params in scenario.variant_params():
		result = steady.sweep_drive_detuning(params, grid, workers)
		writer.sweep(_suffixed('sweep', label, 'csv'), result)
		writer.json(_suffixed('sweep', label, 'json'), _sweep_sidecar(result))
		delta = np.asarray(result.axes[0].values)
		n_l = result['n_l']
		summary[label] = {
			'failures': len(result.failures),
			'n_l_peak_delta_D': float(delta[int(np.nanargmax(n_l))]) if np.any(np.isfinite(n_l)) else None,
			'max_residual': float(np.nanmax(result.residuals)) if np.any(np.isfinite(result.residuals)) else None,
		}
	return summary


def run_kappa_map(scenario, writer, workers):
	options = scenario.options
	result = steady.kappa_detuning_map(scenario.params, _grid_option(options, 'kappa_u'), _grid_option(options, 'delta_D'), workers)
	writer.sweep('kappa_map.csv', result)
	writer.json('kappa_map.json', _sweep_sidecar(result))
	return {'shape': list(result.shape), 'failures': len(result.failures)}


def run_spectrum(scenario, writer, workers):
	options = scenario.options
	cavity = options.get('cavity', 'l')
	omega = _grid_option(options, 'omega_MHz')
	summary = {}
	for label, params in scenario.variant_params():
		spectrum = corr.steady_spectrum(params, cavity, omega)
		writer.spectrum(_suffixed('spectrum', label, 'csv'), spectrum)
		summary[label] = dict(spectrum.metadata, fwhm_MHz=spectrum.fwhm())
	if options.get('empty_cavity_reference', False):
		reference = corr.empty_cavity_spectrum(scenario.params, cavity, omega)
		writer.spectrum('spectrum_empty_cavity.csv', reference)
		summary['empty_cavity'] = dict(reference.metadata, fwhm_MHz=reference.fwhm())
	writer.json('spectrum.json', summary)
	return summary


def run_hom_point(scenario, writer, workers):
	options = scenario.options
	cavity = options.get('cavity', 'u')
	points = options.get('grid_points')
	summary = {}
	for label, params in scenario.variant_params():
		if options.get('check_convergence', False):
			outcome = corr.converged_hom_visibility(params, cavity, points, workers)
			grid = outcome.grid
			entry = {'V_HOM': outcome.visibility, 'V_HOM_doubled_span': outcome.doubled_visibility}
		else:
			grid = corr.pulsed_g1_grid(params, cavity, points, workers)
			entry = {'V_HOM': corr.hom_visibility(grid)}
		writer.two_time_grid(_suffixed(f"g1_{cavity}_grid", label, 'csv'), grid)
		entry.update(grid.metadata)
		summary[label] = entry
	writer.json('hom.json', summary)
	return summary


def run_hom_map(scenario, writer, workers):
	options = scenario.options
	result = corr.hom_map(scenario.params, build_grid(options['g_u']), build_grid(options['g_l']), options.get('grid_points'), workers)
	writer.sweep('hom_map.csv', result)
	writer.json('hom_map.json', _sweep_sidecar(result))
	return {'shape': list(result.shape), 'failures': len(result.failures), 'decreasing_along_g_l': corr.decreasing_along_g_l(result)}


def run_cross_correlation(scenario, writer, workers):
	options = scenario.options
	result = corr.cross_correlation(scenario.params, _grid_option(options, 'delay_ns'), options.get('grid_points'), workers)
	writer.cross_correlation('cross_correlation.csv', result)
	writer.two_time_grid('g2_cross_grid.csv', result.grid)
	delays, values = result.delays, result.normalized
	window = options.get('fit_window_ns')
	if window is not None:
		keep = (delays >= window[0]) & (delays <= window[1])
		delays, values = delays[keep], values[keep]
	fit = fitkit.fit_rise_fall(delays, values)
	writer.text('rise_fall_fit.json', fit.to_report(fitkit.input_digest(delays, values)))
	summary = dict(result.metadata, pair_probability_raw=result.pair_probability(), fit=fit.as_dict())
	writer.json('cross_correlation.json', summary)
	return summary


def run_pair_stats(scenario, writer, workers):
	stats = corr.pair_statistics(scenario.params, scenario.options.get('grid_points'), workers)
	summary = asdict(stats)
	summary['correlated_emission'] = stats.P_pair_raw >= stats.P_u_raw * stats.P_l_raw
	writer.json('pair_statistics.json', summary)
	return summary


def _pulsed_detuning_sweep(sweep):
	def handler(scenario, writer, workers):
		result = sweep(scenario.params, build_grid(scenario.options['delta']), workers)
		writer.sweep('sweep.csv', result)
		writer.json('sweep.json', _sweep_sidecar(result))
		return {'failures': len(result.failures), 'calibrated_omega_D': result.metadata['params']['drive']['omega_D']}
	return handler


# ============================
# Fits
# ============================
def _photoionization_settings(options):
	keys = {'wavelength_m': 'wavelength', 'pulse_window_s': 'pulse_window', 'rep_period_s': 'rep_period'}
	return {name: options[key] for key, name in keys.items() if key in options}


def _synthetic_data(scenario):
	options = scenario.options
	synthetic = options['synthetic']
	x = build_grid(synthetic['x'])
	truth = synthetic['truth']
	model = options['model']
	try:
		if model == 'exponential':
			clean = fitkit.exponential_decay(x, truth['amplitude'], truth['tau'])
		elif model == 'rise_fall':
			clean = fitkit.rise_fall_profile(x, truth['tau_rise'], truth['tau_fall'], truth['amplitude'], truth['center'])
		else:
			clean = fitkit.photoionization_lifetime(
				x, truth['eta'], truth['sigma_mb'], truth['tau0'], **_photoionization_settings(options),
			)
	except KeyError as e:
		raise ValueError(f"synthetic truth for model '{model}' is missing parameter {e}") from None
	rng = np.random.default_rng(scenario.seed if scenario.seed is not None else 0)
	return x, clean * (1.0 + synthetic['noise'] * rng.standard_normal(x.size))


def run_fit(scenario, writer, workers):
	options = scenario.options
	if 'data' in options:
		x = np.asarray(options['data']['x'], dtype=float)
		y = np.asarray(options['data']['y'], dtype=float)
	else:
		x, y = _synthetic_data(scenario)
	model = options['model']
	if model == 'exponential':
		fit = fitkit.fit_exponential(x, y, options.get('window'))
	elif model == 'rise_fall':
		fit = fitkit.fit_rise_fall(x, y)
	else:
		fit = fitkit.fit_photoionization(
			x, y, tau0=options.get('tau0_s'), fit_tau0=options.get('fit_tau0', True), **_photoionization_settings(options),
		)
	writer.table('fit_data.csv', ('x', 'y'), (x, y))
	writer.text('fit_report.json', fit.to_report(fitkit.input_digest(x, y)))
	summary = {'model': model, 'parameters': fit.as_dict(), 'uncertainties': dict(zip(fit.names, fit.uncertainties))}
	if 'synthetic' in options:
		summary['truth'] = options['synthetic']['truth']
	logmod.log_message('info', f"fit task {scenario.name}: {summary['parameters']}")
	return summary


TASKS = {
	'pulse': run_pulse,
	'steady_sweep': run_steady_sweep,
	'kappa_map': run_kappa_map,
	'spectrum': run_spectrum,
	'hom_point': run_hom_point,
	'hom_map': run_hom_map,
	'cross_correlation': run_cross_correlation,
	'pair_stats': run_pair_stats,
	'detuning_sweep_common': _pulsed_detuning_sweep(steady.sweep_common_drive_cavity_detuning),
	'detuning_sweep_opposite': _pulsed_detuning_sweep(steady.sweep_opposite_cavity_detunings),
	'fit': run_fit,
}
