"""
corr.py — two-time correlation functions by quantum regression, spectra, HOM indistinguishability, the two-cavity
cross-correlation and pair statistics.

Regression: ⟨A(t1) B(t1+τ) C(t1)⟩ = Tr[B · e^{𝓛τ}(C ρ(t1) A)], evolved by the same generator as the density
matrix itself.

Pulsed correlation surfaces are kept in lag form G(t1, t1+τ): a uniform t1 grid and a τ grid lag_oversampling
times finer, so that every square-grid point t2 = t_j (j >= i) falls on a τ sample. Entries whose t1+τ lies past
the end of the window are NaN.
"""

from dataclasses import dataclass, field
from functools import partial
import math

import numpy as np
from scipy.integrate import trapezoid

from cascade.dynamics import (
	MasterEquation, default_t_end, ensure_calibrated, fiber_efficiency, photon_flux_rate, pulse_window_start,
	pulsed_emission,
)
from cascade.errors import ConvergenceError, IntegrationError
from cascade.model import DRIVE_PULSED, DriveSpec, system_operators
from cascade.qspace import DensityMatrix, Operator, expectation
from cascade.steady import SweepAxis, _assemble, steady_state
from cascade.workers import run_points
from utils import config
from utils import logging as logmod


_OVERSAMPLING = config.get('cascade.corr', 'lag_oversampling', int)
_GRID_POINTS = config.get('cascade.corr', 'default_grid_points', int)
_MAP_GRID_POINTS = config.get('cascade.corr', 'map_grid_points', int)
_G1_TAIL = config.get('cascade.corr', 'g1_tail_threshold', float)
_WINDOW_TAIL = config.get('cascade.corr', 'window_tail_threshold', float)
_HOM_TOLERANCE = config.get('cascade.corr', 'hom_convergence_tolerance', float)
_SPECTRUM_DOUBLINGS = config.get('cascade.corr', 'spectrum_max_doublings', int)
_SPECTRUM_TAU_POINTS = config.get('cascade.corr', 'spectrum_tau_points', int)
_SPECTRUM_TAU_LIFETIMES = config.get('cascade.corr', 'spectrum_tau_lifetimes', float)
_SPECTRUM_SPAN = config.get('cascade.corr', 'spectrum_omega_span_mhz', float)
_SPECTRUM_POINTS = config.get('cascade.corr', 'spectrum_omega_points', int)
_SPECTRUM_CHUNK = config.get('cascade.corr', 'spectrum_chunk_elements', int)
_EMPTY_CAVITY_LIFETIMES = config.get('cascade.corr', 'empty_cavity_tau_lifetimes', float)

GRID_KINDS = ('G1_u', 'G1_l', 'G2_auto_u', 'G2_auto_l', 'G2_cross')


def _mode(params, cavity):
	ops = system_operators(params.layout)
	if cavity == 'u':
		return ops.a_u
	if cavity == 'l':
		return ops.a_l
	raise ValueError(f"Unknown cavity '{cavity}'; expected 'u' or 'l'")


def _kappa(params, cavity):
	return params.kappa_u if cavity == 'u' else params.kappa_l


# ============================
# Types
# ============================
@dataclass(frozen=True, eq=False)
class TwoTimeGrid:
	kind: str
	t1: np.ndarray
	tau: np.ndarray
	lag_values: np.ndarray
	mirror_values: np.ndarray = None
	metadata: dict = field(default_factory=dict)

	def __post_init__(self):
		if self.kind not in GRID_KINDS and self.kind != 'custom':
			raise ValueError(f"Unknown correlation kind '{self.kind}'")
		if self.lag_values.shape != (len(self.t1), len(self.tau)):
			raise ValueError(f"lag_values shape {self.lag_values.shape} does not match grids ({len(self.t1)}, {len(self.tau)})")

	@property
	def dt1(self):
		return float(self.t1[1] - self.t1[0]) if len(self.t1) > 1 else 0.0

	@property
	def oversampling(self):
		if len(self.t1) < 2 or len(self.tau) < 2:
			return 1
		return int(round(self.dt1 / (self.tau[1] - self.tau[0])))

	@property
	def t2(self):
		return self.t1

	@property
	def values(self):
		return self.square_values()

	def square_values(self):
		"""G(t1_i, t1_j) on the t1 grid; t2 < t1 from Hermitian symmetry (G1), symmetry (G2 auto) or the mirror pass."""
		n = len(self.t1)
		step = self.oversampling
		if (n - 1) * step >= len(self.tau):
			raise ValueError("τ grid does not reach across the t1 window; no square form available")
		square = np.empty((n, n), dtype=complex)
		for i in range(n):
			upper = self.lag_values[i, : (n - i) * step : step]
			square[i, i:] = upper
			if self.kind == 'G2_cross':
				if self.mirror_values is None:
					raise ValueError("G2_cross grid needs the mirror pass for t2 < t1")
				square[i + 1:, i] = self.mirror_values[i, step : (n - i) * step : step]
			elif self.kind.startswith('G1'):
				square[i + 1:, i] = np.conj(upper[1:])
			else:
				square[i + 1:, i] = upper[1:]
		return square

	def hermiticity_error(self):
		square = self.square_values()
		return float(np.max(np.abs(square - square.conj().T)))

	def diagonal(self):
		return self.lag_values[:, 0]


@dataclass(frozen=True, eq=False)
class Spectrum:
	omega: np.ndarray
	density: np.ndarray
	metadata: dict = field(default_factory=dict)

	def area(self):
		return float(trapezoid(self.density, self.omega))

	def fwhm(self):
		return spectrum_fwhm(self)


@dataclass(frozen=True, eq=False)
class CorrelationSeries:
	tau: np.ndarray
	values: np.ndarray
	coherent: complex = 0j


# ============================
# Regression
# ============================
def _snapshot(x):
	return np.array(x, copy=True)


def _trace_against(b_matrix, x):
	return complex(np.sum(b_matrix * x.T))


def _regression_row(params, b_matrix, tau, t_stop, row):
	t1, x = row
	valid = tau if t_stop is None else tau[t1 + tau <= t_stop + 1e-9 * max(1.0, abs(t_stop))]
	out = np.full(tau.size, np.nan, dtype=complex)
	if valid.size == 0:
		return out
	values, _ = MasterEquation(params).propagate(x, t1, t1 + valid, partial(_trace_against, b_matrix))
	out[: valid.size] = values
	return out


def _states_at(params, equation, initial, t1_grid, t0):
	if isinstance(initial, str):
		if initial != 'steady':
			raise ValueError(f"initial must be a DensityMatrix or 'steady', got '{initial}'")
		if not equation.time_independent:
			raise ValueError("A steady initial state needs a time-independent generator")
		rho = steady_state(params).matrix
		return [rho] * len(t1_grid)
	if initial.layout != params.layout:
		raise ValueError(f"Initial state layout {initial.layout} does not match {params.layout}")
	start = float(t1_grid[0]) if t0 is None else float(t0)
	states, _ = equation.propagate(initial.matrix, start, t1_grid, _snapshot)
	return states


def regression_correlation(params, initial, A, B, C, t1_grid, tau_grid, t0=None, t_stop=None, kind='custom', workers=1):
	"""
	⟨A(t1) B(t1+τ) C(t1)⟩ on t1_grid × tau_grid (ns). initial is a DensityMatrix at t0 (default t1_grid[0]) or
	'steady'. With t_stop set, samples with t1+τ > t_stop are left NaN.
	"""
	for name, op in (('A', A), ('B', B), ('C', C)):
		if op.layout != params.layout:
			raise ValueError(f"Operator {name} layout {op.layout} does not match {params.layout}")
	t1_grid = np.atleast_1d(np.asarray(t1_grid, dtype=float))
	tau = np.atleast_1d(np.asarray(tau_grid, dtype=float))
	if np.any(tau < 0) or np.any(np.diff(tau) < 0):
		raise ValueError("tau grid must be ascending and nonnegative")
	if np.any(np.diff(t1_grid) < 0):
		raise ValueError("t1 grid must be ascending")
	params = ensure_calibrated(params)
	equation = MasterEquation(params)
	logmod.log_message('debug', f"CALLCHAIN: ENTER regression_correlation kind={kind} t1={t1_grid.size} tau={tau.size}")
	states = _states_at(params, equation, initial, t1_grid, t0)
	rows = [(float(t1), C.matrix @ rho @ A.matrix) for t1, rho in zip(t1_grid, states)]
	outcomes = run_points(partial(_regression_row, params, B.matrix, tau, t_stop), rows, workers)
	failed = [o for o in outcomes if not o.ok]
	if failed:
		raise IntegrationError(f"regression pass failed at t1 index {failed[0].index}: {failed[0].error}")
	values = np.array([o.value for o in outcomes])
	logmod.log_message('debug', f"CALLCHAIN: EXIT regression_correlation kind={kind}")
	return TwoTimeGrid(kind, t1_grid, tau, values, metadata={'t_stop_ns': t_stop})


# ============================
# Spectra
# ============================
def _nyquist_mhz(tau):
	return 0.5e3 / float(tau[1] - tau[0])


def _tau_points(tau_max_ns, omega):
	"""Sample count on [0, tau_max_ns] so that the grid resolves twice the largest |omega| of the spectrum."""
	needed = int(math.ceil(4.0 * float(np.max(np.abs(omega))) * tau_max_ns * 1e-3)) + 1
	return max(_SPECTRUM_TAU_POINTS, needed)


def spectrum_from_g1(tau, g1, omega_grid, tail_threshold=_G1_TAIL):
	"""
	S(ω) ∝ Re ∫ g1(τ) e^{i2πωτ} dτ by the trapezoid rule, unit area over omega_grid (MHz). tau in ns, uniform.
	g1 is tapered exponentially past the point where it stays below tail_threshold·|g1(0)|. The transform runs over
	blocks of omega so the phase table stays within spectrum_chunk_elements.
	"""
	tau = np.asarray(tau, dtype=float)
	g1 = np.asarray(g1, dtype=complex)
	omega = np.asarray(omega_grid, dtype=float)
	scale = abs(g1[0])
	if scale == 0.0:
		raise ValueError("g1(0) is zero; no field to analyse")
	nyquist = _nyquist_mhz(tau)
	if np.max(np.abs(omega)) > nyquist:
		raise ConvergenceError(
			f"tau spacing {tau[1] - tau[0]:.6g} ns aliases the spectrum: Nyquist {nyquist:.6g} MHz is below the"
			f" grid edge {np.max(np.abs(omega)):.6g} MHz"
		)
	above = np.flatnonzero(np.abs(g1) >= tail_threshold * scale)
	if above[-1] >= tau.size - 1:
		raise ConvergenceError(
			f"g1 has not decayed below {tail_threshold:g} of g1(0) by tau = {tau[-1]:.6g} ns; use a longer tau window"
		)
	tau_tail = tau[above[-1] + 1]
	decay = (tau[-1] - tau_tail) / math.log(1.0 / tail_threshold) if tau[-1] > tau_tail else 1.0
	window = np.where(tau <= tau_tail, 1.0, np.exp(-(tau - tau_tail) / decay))
	tau_us = tau * 1e-3
	weighted = (g1 * window)[None, :]
	rows = max(1, _SPECTRUM_CHUNK // tau.size)
	density = np.empty(omega.size)
	for lo in range(0, omega.size, rows):
		phases = np.exp(2j * math.pi * np.outer(omega[lo:lo + rows], tau_us))
		density[lo:lo + rows] = np.real(trapezoid(phases * weighted, tau_us, axis=1))
	negative = float(-np.sum(density[density < 0]))
	if negative > 1e-6 * float(np.sum(np.abs(density))):
		logmod.log_message('warning', f"spectrum_from_g1: clipped negative density mass {negative:.3e}")
	density = np.clip(density, 0.0, None)
	area = trapezoid(density, omega)
	if not area > 0 or not math.isfinite(area):
		raise ConvergenceError("spectrum has no positive area on the frequency grid")
	metadata = {
		'normalization': 'unit area over the frequency grid',
		'window': 'exponential taper past the tail point',
		'window_start_ns': float(tau_tail),
		'window_decay_ns': float(decay),
		'tail_threshold': tail_threshold,
		'clipped_negative_mass': negative,
	}
	return Spectrum(omega, density / area, metadata)


def spectrum_fwhm(spectrum):
	"""Full width at half maximum (MHz), half-maximum crossings by linear interpolation."""
	omega, density = spectrum.omega, spectrum.density
	peak = int(np.argmax(density))
	half = 0.5 * density[peak]
	left = peak
	while left > 0 and density[left] > half:
		left -= 1
	right = peak
	while right < density.size - 1 and density[right] > half:
		right += 1
	if density[left] > half or density[right] > half:
		raise ConvergenceError("spectrum does not fall to half maximum inside the frequency grid")

	def crossing(i, j):
		return omega[i] + (half - density[i]) * (omega[j] - omega[i]) / (density[j] - density[i])

	return float(crossing(right - 1, right) - crossing(left, left + 1))


def default_omega_grid():
	return np.linspace(-_SPECTRUM_SPAN, _SPECTRUM_SPAN, _SPECTRUM_POINTS)


def steady_g1(params, cavity, tau_max_ns, points=_SPECTRUM_TAU_POINTS):
	"""Steady-state ⟨a†(0)a(τ)⟩ − ⟨a†⟩⟨a⟩ on a uniform τ grid."""
	a = _mode(params, cavity)
	identity = Operator.identity(params.layout)
	tau = np.linspace(0.0, tau_max_ns, points)
	grid = regression_correlation(params, 'steady', a.dagger(), a, identity, [0.0], tau, kind=f"G1_{cavity}")
	rho = steady_state(params)
	coherent = expectation(rho, a.dagger()) * expectation(rho, a)
	return CorrelationSeries(tau, grid.lag_values[0] - coherent, coherent)


def _slowest_field_time_ns(params):
	rates = [r for r in (params.kappa_u, params.kappa_l, params.gamma_u, params.gamma_l) if r > 0]
	return 1e3 / (2.0 * math.pi * min(rates))


def steady_spectrum(params, cavity='l', omega_grid=None):
	"""
	Spectrum of one cavity output under continuous drive. The τ window doubles until g1 has decayed; the sample
	count doubles with it so the spacing, and with it the Nyquist limit, stays fixed.
	"""
	omega = default_omega_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
	tau_max = _SPECTRUM_TAU_LIFETIMES * _slowest_field_time_ns(params)
	points = _tau_points(tau_max, omega)
	for attempt in range(_SPECTRUM_DOUBLINGS + 1):
		series = steady_g1(params, cavity, tau_max, points)
		try:
			spectrum = spectrum_from_g1(series.tau, series.values, omega)
		except ConvergenceError:
			logmod.log_message('debug', f"steady_spectrum: tau window {tau_max:.6g} ns too short, doubling")
			tau_max *= 2.0
			points = 2 * points - 1
			continue
		spectrum.metadata.update({
			'tau_max_ns': tau_max, 'tau_points': points, 'coherent_part': abs(series.coherent), 'cavity': cavity,
		})
		logmod.log_message('info', f"steady_spectrum: cavity {cavity} tau window {tau_max:.6g} ns after {attempt} doublings")
		return spectrum
	raise ConvergenceError(f"g1 did not decay within {_SPECTRUM_DOUBLINGS} doublings of the tau window ({tau_max / 2:.6g} ns)")


def cavity_g1(params, cavity, rho0, tau):
	"""Transient ⟨a†(0)a(τ)⟩ starting from rho0 at t = 0."""
	a = _mode(params, cavity)
	grid = regression_correlation(params, rho0, a.dagger(), a, Operator.identity(params.layout), [0.0], tau, kind=f"G1_{cavity}")
	return CorrelationSeries(np.asarray(tau, dtype=float), grid.lag_values[0])


def empty_cavity_spectrum(params, cavity='l', omega_grid=None):
	"""Spectrum of one photon leaking out of the bare cavity (couplings and drive off): a Lorentzian of FWHM 2κ."""
	kappa = _kappa(params, cavity)
	if not kappa > 0:
		raise ValueError(f"empty_cavity_spectrum needs a nonzero decay rate for cavity '{cavity}'")
	omega = default_omega_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
	bare = params.replace(g_u=0.0, g_l=0.0, drive=DriveSpec())
	photons = (1, 0) if cavity == 'u' else (0, 1)
	rho0 = DensityMatrix.pure(bare.layout, 'g', *photons)
	tau_max = _EMPTY_CAVITY_LIFETIMES * 1e3 / (2.0 * math.pi * kappa)
	tau = np.linspace(0.0, tau_max, _tau_points(tau_max, omega))
	series = cavity_g1(bare, cavity, rho0, tau)
	spectrum = spectrum_from_g1(tau, series.values, omega)
	spectrum.metadata.update({'cavity': cavity, 'reference': 'bare cavity, one photon at t = 0', 'tau_max_ns': float(tau[-1])})
	return spectrum


def second_order_coherence(params, operator, tau):
	"""Steady-state g2(τ) = ⟨X†(0) X†X(τ) X(0)⟩ / ⟨X†X⟩² for the emitting operator X."""
	rho = steady_state(params)
	number = operator.dagger() @ operator
	mean = expectation(rho, number).real
	if mean <= 0:
		raise ValueError("second_order_coherence needs a nonzero steady-state emission rate")
	grid = regression_correlation(params, 'steady', operator.dagger(), number, operator, [0.0], tau, kind='custom')
	return CorrelationSeries(np.asarray(tau, dtype=float), grid.lag_values[0].real / mean ** 2)


# ============================
# Pulsed windows and HOM
# ============================
def correlation_window(params):
	"""(t_start, t_stop, trajectory): from the pulse window start to where the total flux falls below the tail level."""
	params = ensure_calibrated(params)
	traj, _ = pulsed_emission(params)
	flux = traj['flux_u'] + traj['flux_l']
	peak = float(np.max(flux))
	if not peak > 0:
		raise ValueError("no photon flux: the correlation window is undefined")
	last = int(np.flatnonzero(flux >= _WINDOW_TAIL * peak)[-1])
	if last == flux.size - 1:
		logmod.log_message('warning', f"correlation_window: flux still above {_WINDOW_TAIL:g} of peak at t_end = {traj.times[-1]:.6g} ns")
	return float(traj.times[0]), float(traj.times[last]), traj


def _lag_grids(t_start, t_stop, points):
	if points < 2:
		raise ValueError("a correlation grid needs at least 2 t1 points")
	t1 = np.linspace(t_start, t_stop, points)
	tau = np.arange((points - 1) * _OVERSAMPLING + 1) * ((t_stop - t_start) / ((points - 1) * _OVERSAMPLING))
	return t1, tau


def pulsed_g1_grid(params, cavity='u', points=None, workers=1, window=None):
	"""G1(t1, t1+τ) = ⟨a†(t1) a(t1+τ)⟩ of one cavity after a single excitation pulse."""
	if params.drive.mode != DRIVE_PULSED:
		raise ValueError("pulsed_g1_grid requires a pulsed drive")
	params = ensure_calibrated(params)
	t_start, t_stop = correlation_window(params)[:2] if window is None else window
	t1, tau = _lag_grids(t_start, t_stop, _GRID_POINTS if points is None else points)
	a = _mode(params, cavity)
	grid = regression_correlation(
		params, DensityMatrix.pure(params.layout, 'g0'), a.dagger(), a, Operator.identity(params.layout), t1, tau,
		t0=pulse_window_start(params), t_stop=t_stop, kind=f"G1_{cavity}", workers=workers,
	)
	grid.metadata.update({'window_ns': [t_start, t_stop], 'omega_D': params.drive.omega_D, 'cavity': cavity})
	return grid


def hom_visibility(g1):
	"""
	V = ∫∫|G1(t,t')|² dt dt' / (∫ G1(t,t) dt)², integrated on the lag form as 2∫dt1∫dτ|G1(t1,t1+τ)|²
	with the trapezoid rule in both directions.
	"""
	if not g1.kind.startswith('G1'):
		raise ValueError(f"hom_visibility needs a G1 grid, got '{g1.kind}'")
	dtau = float(g1.tau[1] - g1.tau[0])
	inner = np.empty(len(g1.t1))
	for i, row in enumerate(g1.lag_values):
		valid = np.abs(row[~np.isnan(row)]) ** 2
		inner[i] = trapezoid(valid, dx=dtau) if valid.size > 1 else 0.0
	numerator = 2.0 * trapezoid(inner, g1.t1)
	denominator = trapezoid(g1.diagonal().real, g1.t1) ** 2
	if not denominator > 0:
		raise ValueError("G1 diagonal integrates to zero; no photon")
	visibility = float(numerator / denominator)
	if not -1e-9 <= visibility <= 1.0 + 1e-6:
		raise ConvergenceError(f"HOM visibility {visibility:.6g} outside [0, 1]; the two-time grid is too coarse")
	return visibility


@dataclass(frozen=True, eq=False)
class HomConvergence:
	visibility: float
	doubled_visibility: float
	grid: TwoTimeGrid

	def __iter__(self):
		return iter((self.visibility, self.doubled_visibility))


def converged_hom_visibility(params, cavity='u', points=None, workers=1):
	"""HOM visibility, checked against a run with the window span doubled at the same spacing."""
	params = ensure_calibrated(params)
	points = _GRID_POINTS if points is None else points
	t_start, t_stop, _ = correlation_window(params)
	grid = pulsed_g1_grid(params, cavity, points, workers, (t_start, t_stop))
	first = hom_visibility(grid)
	doubled_stop = t_start + 2.0 * (t_stop - t_start)
	second = hom_visibility(pulsed_g1_grid(params, cavity, 2 * points - 1, workers, (t_start, doubled_stop)))
	if abs(second - first) > _HOM_TOLERANCE:
		raise ConvergenceError(f"HOM visibility not converged: {first:.6f} vs {second:.6f} with doubled span")
	logmod.log_message('info', f"converged_hom_visibility: V={first:.6f} (doubled span {second:.6f})")
	return HomConvergence(first, second, grid)


def _hom_point(params, points, couplings):
	g_u, g_l = couplings
	point = params.replace(g_u=float(g_u), g_l=float(g_l))
	visibility = hom_visibility(pulsed_g1_grid(point, 'u', points))
	return {'V_HOM': visibility}, 0.0


def hom_map(params, g_u_grid, g_l_grid, points=None, workers=1):
	"""V_HOM of the upper photon over a (g_u, g_l) grid; each point is calibrated on its own when omega_D is unset."""
	if params.drive.mode != DRIVE_PULSED:
		raise ValueError("hom_map requires a pulsed drive")
	g_u_axis = SweepAxis('g_u', 'MHz', g_u_grid)
	g_l_axis = SweepAxis('g_l', 'MHz', g_l_grid)
	couplings = [(gu, gl) for gu in g_u_axis.values for gl in g_l_axis.values]
	points = _MAP_GRID_POINTS if points is None else points
	logmod.log_message('info', f"hom_map: {len(g_u_axis)}x{len(g_l_axis)} points, {points}-point grids, workers={workers}")
	outcomes = run_points(partial(_hom_point, params, points), couplings, workers)
	return _assemble([g_u_axis, g_l_axis], outcomes, ('V_HOM',), {'params': params.to_dict(), 'kind': 'hom_map', 'grid_points': points})


def decreasing_along_g_l(result, tolerance=0.0):
	"""True when V_HOM does not increase along g_l in every g_u row (failed points ignored)."""
	values = result['V_HOM']
	for row in values:
		row = row[~np.isnan(row)]
		if np.any(np.diff(row) > tolerance):
			return False
	return True


# ============================
# Cross-correlation and pair statistics
# ============================
@dataclass(frozen=True, eq=False)
class CrossCorrelation:
	"""
	delays: t_l − t_u (ns). raw: pair detection density per trial (1/ns), whose integral is the raw pair
	probability. baseline: the same density for photons taken from independent trials. normalized: raw divided
	by the baseline peak.
	"""
	delays: np.ndarray
	raw: np.ndarray
	baseline: np.ndarray
	normalized: np.ndarray
	grid: TwoTimeGrid
	metadata: dict = field(default_factory=dict)

	def pair_probability(self):
		return float(trapezoid(self.raw, self.delays))


def _delay_marginal(values, t1, tau, step):
	n = len(t1)
	marginal = np.zeros(len(tau))
	for j in range(len(tau)):
		rows = n - int(math.ceil(j / step - 1e-9))
		column = values[:rows, j].real
		column = column[~np.isnan(column)]
		marginal[j] = trapezoid(column, dx=t1[1] - t1[0]) if column.size > 1 else 0.0
	return marginal


def _independent_baseline(traj, delays):
	times = traj.times
	f_u = traj['flux_u']
	f_l = traj['flux_l']
	return np.array([trapezoid(f_u * np.interp(times + d, times, f_l, left=0.0, right=0.0), times) for d in delays])


def cross_correlation(params, delay_grid=None, points=None, workers=1):
	"""
	Upper/lower coincidence density versus delay τ = t_l − t_u. τ >= 0 comes from the pass X = a_u ρ a_u†
	measured with n_l, τ < 0 from the mirror pass X = a_l ρ a_l† measured with n_u.
	"""
	if params.drive.mode != DRIVE_PULSED:
		raise ValueError("cross_correlation requires a pulsed drive")
	params = ensure_calibrated(params)
	t_start, t_stop, traj = correlation_window(params)
	t1, tau = _lag_grids(t_start, t_stop, _GRID_POINTS if points is None else points)
	ops = system_operators(params.layout)
	rho0 = DensityMatrix.pure(params.layout, 'g0')
	common = dict(t0=pulse_window_start(params), t_stop=t_stop, workers=workers)
	forward = regression_correlation(params, rho0, ops.a_u.dagger(), ops.n_l, ops.a_u, t1, tau, kind='G2_cross', **common)
	mirror = regression_correlation(params, rho0, ops.a_l.dagger(), ops.n_u, ops.a_l, t1, tau, kind='G2_cross', **common)
	metadata = {'window_ns': [t_start, t_stop], 'omega_D': params.drive.omega_D}
	grid = TwoTimeGrid('G2_cross', t1, tau, forward.lag_values, mirror.lag_values, metadata)
	rate = photon_flux_rate(params.kappa_u, 1.0) * photon_flux_rate(params.kappa_l, 1.0)
	step = grid.oversampling
	positive = rate * _delay_marginal(forward.lag_values, t1, tau, step)
	negative = rate * _delay_marginal(mirror.lag_values, t1, tau, step)
	delays = np.concatenate((-tau[:0:-1], tau))
	raw = np.concatenate((negative[:0:-1], positive))
	if delay_grid is not None:
		target = np.asarray(delay_grid, dtype=float)
		raw = np.interp(target, delays, raw, left=0.0, right=0.0)
		delays = target
	baseline = _independent_baseline(traj, delays)
	peak = float(np.max(baseline))
	normalized = raw / peak if peak > 0 else np.zeros_like(raw)
	metadata.update({
		'delay_convention': 't_l - t_u',
		'raw': 'pair detection density per trial, 1/ns',
		'baseline': 'independent-trials product of marginal fluxes, 1/ns',
		'normalized': 'raw divided by the baseline peak',
	})
	logmod.log_message('info', f"cross_correlation: {delays.size} delays over window [{t_start:.6g}, {t_stop:.6g}] ns")
	return CrossCorrelation(delays, raw, baseline, normalized, grid, metadata)


@dataclass(frozen=True)
class PairStatistics:
	P_pair: float
	eta_u_given_l: float
	eta_l_given_u: float
	P_pair_raw: float
	P_u_raw: float
	P_l_raw: float
	eta_u: float
	eta_l: float
	cavity_u_given_l: float
	cavity_l_given_u: float
	truncated: bool = False

	def __iter__(self):
		return iter((self.P_pair, self.eta_u_given_l, self.eta_l_given_u))


def _ratio(numerator, denominator):
	return numerator / denominator if denominator > 0 else 0.0


def pair_statistics(params, points=None, workers=1):
	"""
	Pair probability and conditional efficiencies. In fiber: P_pair = P_pair_raw·η_oc^u·η_mm^u·η_oc^l·η_mm^l and
	η_{u|l} = P_pair/η_l, η_{l|u} = P_pair/η_u. At the cavity outputs: P_pair_raw/P_l_raw and P_pair_raw/P_u_raw.
	"""
	if params.drive.mode != DRIVE_PULSED:
		raise ValueError("pair_statistics requires a pulsed drive")
	params = ensure_calibrated(params)
	collection = params.collection
	traj, probabilities = pulsed_emission(params)
	p_u, p_l = probabilities
	if p_u <= 0 and p_l <= 0:
		logmod.log_message('info', "pair_statistics: no emission, all pair quantities are zero")
		return PairStatistics(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, probabilities.truncated)
	pair_raw = cross_correlation(params, points=points, workers=workers).pair_probability()
	eta_u = fiber_efficiency(min(p_u, 1.0), 'u', collection)
	eta_l = fiber_efficiency(min(p_l, 1.0), 'l', collection)
	pair = pair_raw * math.prod(collection.channel('u')) * math.prod(collection.channel('l'))
	stats = PairStatistics(
		P_pair=pair,
		eta_u_given_l=_ratio(pair, eta_l),
		eta_l_given_u=_ratio(pair, eta_u),
		P_pair_raw=pair_raw,
		P_u_raw=p_u,
		P_l_raw=p_l,
		eta_u=eta_u,
		eta_l=eta_l,
		cavity_u_given_l=_ratio(pair_raw, p_l),
		cavity_l_given_u=_ratio(pair_raw, p_u),
		truncated=probabilities.truncated,
	)
	logmod.log_message('info', f"pair_statistics: {stats}")
	return stats
