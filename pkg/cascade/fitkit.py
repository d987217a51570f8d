"""
fitkit.py — Levenberg-Marquardt fits: exponential lifetimes, rise/fall of the cross-correlation peak and the
photoionization trap-loss model.

Every fitter goes through scipy.optimize.curve_fit(method='lm') with an analytic Jacobian and a documented seed.
Uncertainties are the square roots of the covariance diagonal (scaled by the residual variance).
"""

from dataclasses import asdict, dataclass
import hashlib
import json
import math

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT, h as PLANCK
from scipy.optimize import curve_fit

from cascade.errors import FitError
from utils import config
from utils import logging as logmod


_MAX_ITERATIONS = config.get('cascade.fitkit', 'max_iterations', int)
_REP_PERIOD = config.get('cascade.fitkit', 'rep_period_s', float)
_WAVELENGTH = config.get('cascade.fitkit', 'wavelength_m', float)
_PULSE_WINDOW = config.get('cascade.fitkit', 'pulse_window_s', float)
_MIN_EXPONENTIAL_POINTS = config.get('cascade.fitkit', 'min_exponential_points', int)
_MIN_PHOTOIONIZATION_POINTS = config.get('cascade.fitkit', 'min_photoionization_points', int)
_RISE_FALL_EDGE_FRACTION = config.get('cascade.fitkit', 'rise_fall_edge_fraction', float)
_MIN_EDGE_POINTS = config.get('cascade.fitkit', 'min_rise_fall_edge_points', int)

MEGABARN = 1e-22  # m²


@dataclass(frozen=True)
class FitResult:
	model: str
	names: tuple
	values: tuple
	uncertainties: tuple
	residual_rms: float
	converged: bool
	iterations: int

	def __getitem__(self, name):
		return self.values[self.names.index(name)]

	def uncertainty(self, name):
		return self.uncertainties[self.names.index(name)]

	def as_dict(self):
		return {name: value for name, value in zip(self.names, self.values)}

	def to_report(self, digest):
		"""Fit report JSON text: model, parameters, uncertainties, residual RMS, iterations, input digest."""
		report = asdict(self)
		report['parameters'] = self.as_dict()
		report['uncertainties'] = {name: u for name, u in zip(self.names, self.uncertainties)}
		report['input_digest'] = digest
		for key in ('names', 'values'):
			report.pop(key)
		return json.dumps(report, indent=2, sort_keys=True)


def input_digest(*arrays):
	"""sha256 over the float64 bytes of the inputs."""
	digest = hashlib.sha256()
	for array in arrays:
		data = np.ascontiguousarray(np.asarray(array, dtype=float))
		digest.update(str(data.shape).encode())
		digest.update(data.tobytes())
	return digest.hexdigest()


def _fit(model_name, names, func, jac, x, y, seed):
	logmod.log_message('debug', f"CALLCHAIN: ENTER _fit model={model_name} seed={dict(zip(names, seed))} n={x.size}")
	try:
		popt, pcov, info, message, _ = curve_fit(
			func, x, y, p0=seed, jac=jac, method='lm', maxfev=_MAX_ITERATIONS, full_output=True,
		)
	except RuntimeError as e:
		logmod.log_message('error', f"{model_name}: no convergence within {_MAX_ITERATIONS} evaluations: {e}")
		raise FitError(f"{model_name} fit did not converge within {_MAX_ITERATIONS} iterations: {e}") from e
	if not np.all(np.isfinite(popt)):
		raise FitError(f"{model_name} fit produced non-finite parameters {popt}")
	with np.errstate(invalid='ignore'):
		errors = np.sqrt(np.abs(np.diag(pcov)))
	residual = y - func(x, *popt)
	result = FitResult(
		model=model_name,
		names=tuple(names),
		values=tuple(float(v) for v in popt),
		uncertainties=tuple(float(e) for e in errors),
		residual_rms=float(np.sqrt(np.mean(residual ** 2))),
		converged=True,
		iterations=int(info['nfev']),
	)
	logmod.log_message('info', f"{model_name}: {result.as_dict()} ± {result.uncertainties} rms={result.residual_rms:.3e} ({message.strip()})")
	return result


# ============================
# Exponential decay
# ============================
def exponential_decay(t, amplitude, tau):
	return amplitude * np.exp(-t / tau)


def _exponential_jac(t, amplitude, tau):
	e = np.exp(-t / tau)
	return np.column_stack((e, amplitude * e * t / tau ** 2))


def fit_exponential(t, y, window=None):
	"""y = A·e^{−t/τ} on the points inside window (t_min, t_max); seeded from the log-linear regression."""
	t = np.asarray(t, dtype=float)
	y = np.asarray(y, dtype=float)
	if window is not None:
		keep = (t >= window[0]) & (t <= window[1])
		t, y = t[keep], y[keep]
	if t.size < _MIN_EXPONENTIAL_POINTS:
		raise ValueError(f"fit_exponential needs at least {_MIN_EXPONENTIAL_POINTS} points in the window, got {t.size}")
	if np.any(y <= 0):
		raise FitError("fit_exponential needs strictly positive data in the window")
	# shift the time origin to the window start for conditioning
	origin = t[0]
	slope, intercept = np.polyfit(t - origin, np.log(y), 1)
	if slope >= 0:
		raise FitError("data in the window is not decaying")
	result = _fit('exponential', ('amplitude', 'tau'), exponential_decay, _exponential_jac, t - origin, y, (math.exp(intercept), -1.0 / slope))
	if result['tau'] <= 0:
		raise FitError(f"fitted lifetime {result['tau']} is not positive")
	amplitude = result['amplitude'] * math.exp(origin / result['tau'])
	amplitude_error = result.uncertainty('amplitude') * math.exp(origin / result['tau'])
	return FitResult(
		result.model, result.names, (amplitude, result['tau']), (amplitude_error, result.uncertainty('tau')),
		result.residual_rms, result.converged, result.iterations,
	)


# ============================
# Rise / fall
# ============================
def rise_fall_profile(x, tau_rise, tau_fall, amplitude, center):
	shifted = x - center
	return np.where(shifted < 0, amplitude * np.exp(shifted / tau_rise), amplitude * np.exp(-shifted / tau_fall))


def _rise_fall_jac(x, tau_rise, tau_fall, amplitude, center):
	shifted = x - center
	f = rise_fall_profile(x, tau_rise, tau_fall, amplitude, center)
	rising = shifted < 0
	jac = np.zeros((x.size, 4))
	jac[:, 0] = np.where(rising, -f * shifted / tau_rise ** 2, 0.0)
	jac[:, 1] = np.where(rising, 0.0, f * shifted / tau_fall ** 2)
	jac[:, 2] = f / amplitude
	jac[:, 3] = np.where(rising, -f / tau_rise, f / tau_fall)
	return jac


def _tail_line(x, y, ceiling):
	"""Slope and intercept of log y against x over one tail, from the decade of points just below ceiling."""
	decade = (y > 0.1 * ceiling) & (y <= ceiling)
	if np.count_nonzero(decade) < 2:
		decade = y > 0
	if np.count_nonzero(decade) < 2:
		raise FitError("fit_rise_fall: a tail has fewer than two positive points")
	slope, intercept = np.polyfit(x[decade], np.log(y[decade]), 1)
	return float(slope), float(intercept)


def fit_rise_fall(tau, C, edge_fraction=_RISE_FALL_EDGE_FRACTION):
	"""
	Piecewise exponential A·e^{(τ−τ0)/τ_rise} (τ < τ0), A·e^{−(τ−τ0)/τ_fall} (τ >= τ0), continuous at τ0.

	Only the tails at or below edge_fraction of the maximum enter the fit, so a rounded apex does not bend the
	time constants; τ0 and A come out as the crossing of the two tail exponentials.
	"""
	x = np.asarray(tau, dtype=float)
	y = np.asarray(C, dtype=float)
	order = np.argsort(x)
	x, y = x[order], y[order]
	if x.size < 5:
		raise ValueError(f"fit_rise_fall needs at least 5 points, got {x.size}")
	if not 0.0 < edge_fraction < 1.0:
		raise ValueError(f"edge_fraction must lie in (0, 1), got {edge_fraction}")
	if np.ptp(y) == 0:
		raise FitError("fit_rise_fall: data is flat")
	peak = int(np.argmax(y))
	if peak == 0 or peak == y.size - 1:
		raise FitError("fit_rise_fall: the maximum is at the edge of the series, no interior peak")
	low = y <= edge_fraction * y[peak]
	rising = low & (x < x[peak])
	falling = low & (x > x[peak])
	for side, mask in (('rise', rising), ('fall', falling)):
		if np.count_nonzero(mask) < _MIN_EDGE_POINTS:
			raise FitError(
				f"fit_rise_fall: {side} tail has {np.count_nonzero(mask)} points below {edge_fraction:g} of the peak,"
				f" need {_MIN_EDGE_POINTS}; extend the delay range"
			)
	rise_slope, rise_intercept = _tail_line(x[rising], y[rising], edge_fraction * y[peak])
	fall_slope, fall_intercept = _tail_line(x[falling], y[falling], edge_fraction * y[peak])
	if rise_slope <= 0 or fall_slope >= 0:
		raise FitError("fit_rise_fall: the tails do not decay away from the peak")
	center = (fall_intercept - rise_intercept) / (rise_slope - fall_slope)
	seed = (1.0 / rise_slope, -1.0 / fall_slope, math.exp(rise_slope * center + rise_intercept), center)
	edges = rising | falling
	result = _fit('rise_fall', ('tau_rise', 'tau_fall', 'amplitude', 'center'), rise_fall_profile, _rise_fall_jac, x[edges], y[edges], seed)
	if result['tau_rise'] <= 0 or result['tau_fall'] <= 0:
		raise FitError(f"fit_rise_fall: non-positive time constants {result.as_dict()}")
	return result


# ============================
# Photoionization
# ============================
def _photons_per_joule(wavelength):
	return wavelength / (PLANCK * SPEED_OF_LIGHT)


def photoionization_probability(fluence, eta, sigma_mb, wavelength=_WAVELENGTH):
	"""P_PI = η(1 − e^{−σFλ/hc}) per excitation, σ in Mb, F in J/m²."""
	return eta * (1.0 - np.exp(-sigma_mb * MEGABARN * _photons_per_joule(wavelength) * np.asarray(fluence, dtype=float)))


def photoionization_lifetime(intensity, eta, sigma_mb, tau0, wavelength=_WAVELENGTH, pulse_window=_PULSE_WINDOW, rep_period=_REP_PERIOD):
	"""Trap lifetime (s) with loss rate 1/τ0 + P_PI/rep_period; F = intensity·pulse_window."""
	fluence = np.asarray(intensity, dtype=float) * pulse_window
	return 1.0 / (1.0 / tau0 + photoionization_probability(fluence, eta, sigma_mb, wavelength) / rep_period)


def fit_photoionization(intensity, lifetime, wavelength=_WAVELENGTH, pulse_window=_PULSE_WINDOW, rep_period=_REP_PERIOD, tau0=None, fit_tau0=True):
	"""
	Fit (η, σ[Mb]) and, unless fit_tau0 is False, the baseline lifetime τ0 of the trap-loss model
	1/τ = 1/τ0 + η(1 − e^{−σ·F·λ/hc})/rep_period to (intensity W/m², lifetime s) data.
	"""
	intensity = np.asarray(intensity, dtype=float)
	lifetime = np.asarray(lifetime, dtype=float)
	if intensity.size < _MIN_PHOTOIONIZATION_POINTS or intensity.size != lifetime.size:
		raise ValueError(f"fit_photoionization needs at least {_MIN_PHOTOIONIZATION_POINTS} matching (intensity, lifetime) points")
	if np.any(intensity < 0):
		raise ValueError("intensities must be >= 0")
	if np.any(lifetime <= 0):
		raise ValueError("trap lifetimes must be > 0")
	fluence = intensity * pulse_window
	if not np.any(fluence > 0):
		raise FitError("fit_photoionization: every fluence is zero, the cross section is unconstrained")
	if not fit_tau0 and tau0 is None:
		raise ValueError("a fixed tau0 must be given when fit_tau0 is False")
	k = MEGABARN * _photons_per_joule(wavelength)
	# seeds: tau0 from the weakest-light point, eta from the saturated loss, sigma from the half-saturation fluence
	order = np.argsort(fluence)
	tau0_seed = float(lifetime[order[0]]) if tau0 is None else float(tau0)
	excess = 1.0 / lifetime[order] - 1.0 / tau0_seed
	eta_seed = float(np.clip(rep_period * np.max(excess), 1e-3, 1.0))
	half = np.flatnonzero(excess >= 0.5 * np.max(excess))
	f_half = float(fluence[order][half[0]]) if half.size else float(np.median(fluence[fluence > 0]))
	sigma_seed = math.log(2.0) / (k * max(f_half, np.min(fluence[fluence > 0])))

	def rate_parts(eta, sigma_mb):
		e = np.exp(-sigma_mb * k * fluence)
		return eta * (1.0 - e) / rep_period, e

	if fit_tau0:
		def model(x, eta, sigma_mb, tau_base):
			loss, _ = rate_parts(eta, sigma_mb)
			return 1.0 / (1.0 / tau_base + loss)

		def jac(x, eta, sigma_mb, tau_base):
			loss, e = rate_parts(eta, sigma_mb)
			tau = 1.0 / (1.0 / tau_base + loss)
			return -(tau ** 2)[:, None] * np.column_stack((
				(1.0 - e) / rep_period, eta * k * fluence * e / rep_period, np.full_like(tau, -1.0 / tau_base ** 2),
			))

		names, seed = ('eta', 'sigma_mb', 'tau0'), (eta_seed, sigma_seed, tau0_seed)
	else:
		fixed = float(tau0)

		def model(x, eta, sigma_mb):
			loss, _ = rate_parts(eta, sigma_mb)
			return 1.0 / (1.0 / fixed + loss)

		def jac(x, eta, sigma_mb):
			loss, e = rate_parts(eta, sigma_mb)
			tau = 1.0 / (1.0 / fixed + loss)
			return -(tau ** 2)[:, None] * np.column_stack(((1.0 - e) / rep_period, eta * k * fluence * e / rep_period))

		names, seed = ('eta', 'sigma_mb'), (eta_seed, sigma_seed)
	return _fit('photoionization', names, model, jac, intensity, lifetime, seed)
