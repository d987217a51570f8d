"""
dynamics.py — time-dependent Lindblad master-equation integration, π-pulse calibration, photon fluxes and
emission-efficiency accounting.

The generator works on the row-major flattened density matrix in µs with rates in rad/µs. Integration uses
scipy's RK45 (Dormand-Prince 5(4)) stepped by hand: each accepted step's dense interpolant fills every sample time
that falls inside it, the sample is reduced right away, and the matrix is dropped. Sample times never force steps.
The trace is never renormalized; its drift is measured and reported on the trajectory.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.integrate import RK45, simpson
from scipy.optimize import minimize_scalar

from cascade.errors import CalibrationError, IntegrationError
from cascade.model import (
	DRIVE_CW, DRIVE_NONE, DRIVE_PULSED, TWO_PI, angular, build_static_hamiltonian, cavity_photon_lifetime,
	collapse_channels, drive_coupling_operator, drive_detuning_operator, free_space_lifetime, system_operators,
)
from cascade.qspace import DensityMatrix
from utils import config
from utils import logging as logmod


_RTOL = config.get('cascade.dynamics', 'rtol', float)
_ATOL = config.get('cascade.dynamics', 'atol', float)
_TRACE_TOLERANCE = config.get('cascade.dynamics', 'trace_tolerance', float)
_T_END_LIFETIMES = config.get('cascade.dynamics', 't_end_lifetimes', float)
_RESIDUAL_EXCITATION = config.get('cascade.dynamics', 'residual_excitation', float)
_PULSE_END_FWHM = config.get('cascade.dynamics', 'pulse_end_fwhm', float)
_PULSE_START_FWHM = config.get('cascade.dynamics', 'pulse_start_fwhm', float)
_CAL_RTOL = config.get('cascade.dynamics', 'calibration_rtol', float)
_CAL_ATOL = config.get('cascade.dynamics', 'calibration_atol', float)
_CAL_MAX_ITER = config.get('cascade.dynamics', 'calibration_max_iter', int)
_CAL_XATOL = config.get('cascade.dynamics', 'calibration_xatol', float)
_CAL_MIN_WEIGHT = config.get('cascade.dynamics', 'calibration_min_weight', float)
_CAL_MAX_WIDENINGS = config.get('cascade.dynamics', 'calibration_max_bracket_moves', int)
_CAL_EDGE_XATOLS = config.get('cascade.dynamics', 'calibration_edge_xatols', float)
_MAX_STEP_FWHM = config.get('cascade.dynamics', 'max_step_fwhm', float)
_SAMPLES_PER_TIMESCALE = config.get('cascade.dynamics', 'samples_per_timescale', float)

TRAJECTORY_SERIES = ('P_g0', 'P_g', 'P_i', 'P_e', 'n_u', 'n_l', 'flux_u', 'flux_l')


# ============================
# Generator
# ============================
class MasterEquation:
	"""
	dρ/dt = -i(H_eff ρ - ρ H_eff†) + Σ_k c_k ρ c_k†,   H_eff = H - (i/2) Σ_k c_k† c_k
	with H = H_static + V_drive(t). Time in µs, rates in rad/µs.
	"""

	def __init__(self, params):
		if params.drive.needs_calibration:
			raise ValueError("Pulsed drive amplitude must be calibrated before building the generator")
		self.params = params
		self.layout = params.layout
		self.dim = self.layout.total_dim
		self.channels = collapse_channels(params)
		self._jumps = [ch.operator.matrix for ch in self.channels]
		hamiltonian = build_static_hamiltonian(params).matrix
		self._coupling = None
		mode = params.drive.mode
		if mode != DRIVE_NONE:
			hamiltonian = hamiltonian + drive_detuning_operator(params).matrix
			coupling = TWO_PI * drive_coupling_operator(params).matrix
			if mode == DRIVE_CW:
				hamiltonian = hamiltonian + params.drive.omega_D * coupling
			else:
				self._coupling = coupling
		self._hamiltonian = hamiltonian
		loss = sum((c.conj().T @ c for c in self._jumps), np.zeros((self.dim, self.dim), dtype=complex))
		self._h_eff = hamiltonian - 0.5j * loss

	@property
	def time_independent(self):
		return self._coupling is None

	def max_step_us(self, t0_ns=None):
		"""Largest RK45 step; bounded while the pulse can still be ahead of t0_ns so no step jumps over it."""
		if self.params.drive.mode != DRIVE_PULSED:
			return np.inf
		pulse = self.params.drive.pulse
		if t0_ns is not None and t0_ns >= pulse.end_ns(2.0 * _PULSE_START_FWHM):
			return np.inf
		return _MAX_STEP_FWHM * pulse.fwhm_ns * 1e-3

	def hamiltonian(self, t_us=None):
		"""Hermitian part of the generator at t_us, rad/µs."""
		if self.time_independent:
			return self._hamiltonian
		if t_us is None:
			raise ValueError("A time is required for a pulsed generator")
		return self._hamiltonian + float(self.params.drive.omega_at(t_us * 1e3)) * self._coupling

	def effective_hamiltonian(self, t_us=None):
		if self.time_independent:
			return self._h_eff
		if t_us is None:
			raise ValueError("A time is required for a pulsed generator")
		return self._h_eff + float(self.params.drive.omega_at(t_us * 1e3)) * self._coupling

	def apply(self, rho, t_us=None):
		"""Generator applied to a square matrix."""
		h_eff = self.effective_hamiltonian(t_us)
		drho = -1j * (h_eff @ rho - rho @ h_eff.conj().T)
		for c in self._jumps:
			drho += c @ rho @ c.conj().T
		return drho

	def rhs(self, t_us, y):
		return self.apply(y.reshape(self.dim, self.dim), t_us).ravel()

	def liouvillian(self, t_us=None):
		"""Dense superoperator acting on the row-major flattened density matrix."""
		h_eff = self.effective_hamiltonian(t_us)
		identity = np.eye(self.dim)
		superop = -1j * (np.kron(h_eff, identity) - np.kron(identity, h_eff.conj()))
		for c in self._jumps:
			superop += np.kron(c, c.conj())
		return superop

	def propagate(self, x0, t0_ns, sample_times_ns, reduce, rtol=_RTOL, atol=_ATOL):
		"""
		Evolve the matrix x0 from t0_ns and call reduce(x) at every sample time (ascending, >= t0_ns).
		Returns (list of reduced samples, matrix at the last sample time).
		"""
		samples = np.asarray(sample_times_ns, dtype=float)
		if samples.ndim != 1 or samples.size == 0:
			raise ValueError("sample_times_ns must be a nonempty 1D grid")
		if np.any(np.diff(samples) < 0) or samples[0] < t0_ns - 1e-12:
			raise ValueError("sample times must be ascending and not before the start time")
		dim = self.dim
		y = np.array(x0, dtype=complex).ravel()
		out = []
		k = 0
		while k < samples.size and samples[k] <= t0_ns:
			out.append(reduce(y.reshape(dim, dim)))
			k += 1
		if k == samples.size:
			return out, y.reshape(dim, dim)
		t_bound = samples[-1] * 1e-3
		solver = RK45(self.rhs, t0_ns * 1e-3, y, t_bound, rtol=rtol, atol=atol, max_step=self.max_step_us(t0_ns))
		steps = 0
		while k < samples.size:
			message = solver.step()
			steps += 1
			if solver.status == 'failed':
				logmod.log_message('error', f"propagate: RK45 failed at t={solver.t * 1e3:.6g} ns after {steps} steps: {message}")
				raise IntegrationError(f"RK45 step failed: {message}", solver.t * 1e3)
			if not np.all(np.isfinite(solver.y)):
				raise IntegrationError("state became non-finite", solver.t * 1e3)
			t_now = solver.t
			dense = None
			while k < samples.size and (samples[k] * 1e-3 <= t_now or solver.status == 'finished'):
				t_sample = samples[k] * 1e-3
				if t_sample >= t_now:
					value = solver.y
				else:
					if dense is None:
						dense = solver.dense_output()
					value = dense(t_sample)
				out.append(reduce(value.reshape(dim, dim)))
				k += 1
		logmod.log_message('debug', f"propagate: {steps} steps over [{t0_ns:.6g}, {samples[-1]:.6g}] ns, {samples.size} samples")
		return out, solver.y.reshape(dim, dim)


# ============================
# Trajectory
# ============================
@dataclass(frozen=True, eq=False)
class Trajectory:
	times: np.ndarray
	series: dict
	trace_error: float
	final_state: DensityMatrix
	params: object = None
	metadata: dict = field(default_factory=dict)

	def __getitem__(self, name):
		return self.series[name]

	def peak(self, name):
		return float(np.max(self.series[name]))


def _diagonal_weights(params):
	"""Rows of diagonal weights such that weights @ diag(rho) gives populations and photon numbers."""
	ops = system_operators(params.layout)
	rows = [ops.P_g0, ops.P_g, ops.P_i, ops.P_e, ops.n_u, ops.n_l]
	return np.array([np.real(np.diag(op.matrix)) for op in rows])


def photon_flux_rate(kappa, n):
	"""Output flux (photons/ns) for intracavity photon number n and field decay rate kappa (MHz)."""
	return 2.0 * angular(kappa) * np.asarray(n, dtype=float) * 1e-3


def integrate_master_equation(params, rho0, t_end, sample_dt, t_start=0.0):
	"""
	Integrate from rho0 at t_start (ns) to t_end (ns), sampling every sample_dt ns.
	A pulsed drive without an amplitude is calibrated first.
	"""
	if not sample_dt > 0:
		raise ValueError(f"sample_dt must be > 0 ns, got {sample_dt}")
	if not t_end > t_start:
		raise ValueError(f"t_end ({t_end}) must be after t_start ({t_start})")
	problems = rho0.check_physical()
	if problems:
		raise ValueError(f"Initial state is not physical: {'; '.join(problems)}")
	params = ensure_calibrated(params)
	logmod.log_message('debug', f"CALLCHAIN: ENTER integrate_master_equation t=[{t_start}, {t_end}] ns dt={sample_dt} ns")
	n_samples = int(math.floor((t_end - t_start) / sample_dt + 1e-9)) + 1
	times = t_start + sample_dt * np.arange(n_samples)
	if times[-1] < t_end - 1e-9:
		times = np.append(times, t_end)
	weights = _diagonal_weights(params)

	def reduce(rho):
		diag = np.diagonal(rho)
		return np.concatenate((weights @ diag.real, [abs(np.sum(diag) - 1.0)]))

	equation = MasterEquation(params)
	try:
		rows, final = equation.propagate(rho0.matrix, t_start, times, reduce)
	except IntegrationError:
		logmod.log_message('error', f"integrate_master_equation failed for params {params}")
		raise
	data = np.array(rows)
	series = dict(zip(('P_g0', 'P_g', 'P_i', 'P_e', 'n_u', 'n_l'), data[:, :6].T))
	series['flux_u'] = photon_flux_rate(params.kappa_u, series['n_u'])
	series['flux_l'] = photon_flux_rate(params.kappa_l, series['n_l'])
	trace_error = float(np.max(data[:, 6]))
	if trace_error > _TRACE_TOLERANCE:
		logmod.log_message('warning', f"integrate_master_equation: trace drift {trace_error:.3e} exceeds {_TRACE_TOLERANCE:g}")
	residual = float(max(series['n_u'][-1], series['n_l'][-1]))
	final_state = DensityMatrix(params.layout, 0.5 * (final + final.conj().T))
	metadata = {'residual_excitation': residual, 'truncated': residual > _RESIDUAL_EXCITATION, 'omega_D': params.drive.omega_D}
	logmod.log_message('info', f"integrate_master_equation: {times.size} samples, trace drift {trace_error:.2e}, residual photons {residual:.2e}")
	return Trajectory(times, series, trace_error, final_state, params, metadata)


def default_t_end(params):
	"""Pulse end (or 0) plus t_end_lifetimes times the slowest nonzero free-space or cavity decay time, in ns."""
	start = params.drive.pulse.end_ns(_PULSE_END_FWHM) if params.drive.mode == DRIVE_PULSED else 0.0
	times = [free_space_lifetime(g) for g in (params.gamma_u, params.gamma_l) if g > 0]
	times += [cavity_photon_lifetime(k) for k in (params.kappa_u, params.kappa_l) if k > 0]
	if not times:
		raise ValueError("default_t_end needs at least one nonzero decay rate")
	return start + _T_END_LIFETIMES * max(times)


def pulse_window_start(params):
	"""First sample time of pulsed windows (ns): pulse center minus pulse_start_fwhm FWHMs."""
	return params.drive.pulse.start_ns(_PULSE_START_FWHM)


# ============================
# π-pulse calibration
# ============================
@dataclass(frozen=True)
class PiPulseCalibration:
	omega_D: float
	excitation: float
	sigma_ee: float
	pulse_area: float
	iterations: int


def _pulse_end_populations(params, omega):
	trial = params.with_drive(omega_D=float(omega))
	pulse = trial.drive.pulse
	t0 = pulse.start_ns(_PULSE_START_FWHM)
	t1 = pulse.end_ns(_PULSE_END_FWHM)
	ops = system_operators(trial.layout)
	p_g0 = np.real(np.diag(ops.P_g0.matrix))
	p_e = np.real(np.diag(ops.P_e.matrix))

	def reduce(rho):
		diag = np.diagonal(rho).real
		return float(p_g0 @ diag), float(p_e @ diag)

	rows, _ = MasterEquation(trial).propagate(
		DensityMatrix.pure(trial.layout, 'g0').matrix, t0, [t1], reduce, rtol=_CAL_RTOL, atol=_CAL_ATOL,
	)
	return rows[-1]


def _resonant_weight(params):
	"""Weight of |e,0,0> in the dressed states reachable inside the pulse bandwidth."""
	layout = params.layout
	hamiltonian = build_static_hamiltonian(params).matrix + drive_detuning_operator(params).matrix
	energies, vectors = np.linalg.eigh(hamiltonian / TWO_PI)
	bandwidth = 1e3 / params.drive.pulse.fwhm_ns
	e00 = layout.encode('e', 0, 0)
	weights = np.abs(vectors[e00, :]) ** 2
	return float(np.sum(weights[np.abs(energies) <= bandwidth]))


def calibrate_pi_pulse(params):
	"""
	Peak Ω_D (MHz) maximizing the population driven out of g0 by the end of the pulse (center + pulse_end_fwhm·FWHM).
	Bounded scalar search around the π-area estimate. An optimum on a bracket edge moves the bracket past that edge;
	raises CalibrationError when the search does not converge or stays on an edge.
	"""
	if params.drive.mode != DRIVE_PULSED:
		raise ValueError("calibrate_pi_pulse requires a pulsed drive")
	logmod.log_message('debug', f"CALLCHAIN: ENTER calibrate_pi_pulse pulse={params.drive.pulse}")
	pulse = params.drive.pulse
	# Rabi area ∫2·2πΩ dt = π
	seed = 1.0 / (4.0 * pulse.unit_area_ns() * 1e-3)
	weight = max(_resonant_weight(params), _CAL_MIN_WEIGHT)
	seed /= math.sqrt(weight)
	evaluations = []

	def objective(omega):
		p_g0, p_e = _pulse_end_populations(params, omega)
		evaluations.append((omega, p_g0, p_e))
		return p_g0

	lower, upper = 0.5 * seed, 1.6 * seed
	edge = _CAL_EDGE_XATOLS * _CAL_XATOL * seed
	for move in range(_CAL_MAX_WIDENINGS + 1):
		result = minimize_scalar(
			objective, bounds=(lower, upper), method='bounded',
			options={'xatol': _CAL_XATOL * seed, 'maxiter': _CAL_MAX_ITER},
		)
		if not result.success:
			logmod.log_message('error', f"calibrate_pi_pulse: no convergence after {result.nfev} evaluations: {result.message}")
			raise CalibrationError(f"pi-pulse calibration did not converge within {_CAL_MAX_ITER} iterations: {result.message}")
		at_lower = result.x - lower <= edge
		at_upper = upper - result.x <= edge
		if not (at_lower or at_upper):
			break
		if move == _CAL_MAX_WIDENINGS:
			logmod.log_message('error', f"calibrate_pi_pulse: optimum {result.x:.6g} MHz pinned to the bracket edge")
			raise CalibrationError(
				f"pi-pulse optimum stays at the edge of [{lower:.6g}, {upper:.6g}] MHz after {move} bracket moves;"
				f" the seed {seed:.6g} MHz is too far off"
			)
		# the next Rabi minimum, at three times the area, stays outside the moved bracket
		lower, upper = (0.5 * lower, 1.2 * lower) if at_lower else (0.8 * upper, 2.0 * upper)
		logmod.log_message('warning', f"calibrate_pi_pulse: optimum {result.x:.6g} MHz at the bracket edge, searching [{lower:.6g}, {upper:.6g}]")
	omega = float(result.x)
	p_g0, p_e = _pulse_end_populations(params, omega)
	calibrated = params.with_drive(omega_D=omega)
	outcome = PiPulseCalibration(omega, 1.0 - p_g0, p_e, calibrated.drive.pulse_area(), len(evaluations))
	logmod.log_message(
		'info',
		f"calibrate_pi_pulse: omega_D={omega:.6g} MHz excitation={outcome.excitation:.6f} sigma_ee={p_e:.6f} "
		f"area={outcome.pulse_area / math.pi:.4f} pi ({outcome.iterations} evaluations)",
	)
	return outcome


@lru_cache(maxsize=64)
def cached_calibration(params):
	"""calibrate_pi_pulse, memoized per SystemParams within the process."""
	return calibrate_pi_pulse(params)


def ensure_calibrated(params):
	"""Return params with a concrete pulse amplitude; calibrates (cached) when omega_D is unset."""
	if not params.drive.needs_calibration:
		return params
	return params.with_drive(omega_D=cached_calibration(params).omega_D)


# ============================
# Fluxes and efficiencies
# ============================
def photon_flux(traj, cavity):
	"""f_c(t) = 2·(2πκ_c)·n_c(t) in photons/ns."""
	if cavity not in ('u', 'l'):
		raise ValueError(f"Unknown cavity '{cavity}'; expected 'u' or 'l'")
	key = f"n_{cavity}"
	if key not in traj.series:
		raise ValueError(f"Trajectory has no '{key}' series")
	kappa = traj.params.kappa_u if cavity == 'u' else traj.params.kappa_l
	return photon_flux_rate(kappa, traj.series[key])


@dataclass(frozen=True)
class EmissionProbabilities:
	P_u: float
	P_l: float
	truncated: bool
	residual_excitation: float

	def __iter__(self):
		return iter((self.P_u, self.P_l))


def emission_probabilities(traj):
	"""Photons emitted through each cavity channel, ∫f_c dt; flags trajectories that end with excitation left."""
	p_u = float(simpson(photon_flux(traj, 'u'), x=traj.times))
	p_l = float(simpson(photon_flux(traj, 'l'), x=traj.times))
	residual = float(max(traj['n_u'][-1], traj['n_l'][-1]))
	truncated = residual > _RESIDUAL_EXCITATION
	if truncated:
		logmod.log_message('warning', f"emission_probabilities: trajectory truncated, residual photon number {residual:.3e}")
	return EmissionProbabilities(p_u, p_l, truncated, residual)


def fiber_efficiency(P, channel, collection):
	"""In-fiber efficiency P·η_oc·η_mm."""
	if not -1e-9 <= P <= 1.0 + 1e-9:
		raise ValueError(f"Probability {P} outside [0, 1]")
	eta_oc, eta_mm = collection.channel(channel)
	return P * eta_oc * eta_mm


def pair_efficiency_product(probabilities, collection):
	"""(η_u, η_l, η_u·η_l) in fiber for the single-channel emission probabilities."""
	eta_u = fiber_efficiency(min(probabilities.P_u, 1.0), 'u', collection)
	eta_l = fiber_efficiency(min(probabilities.P_l, 1.0), 'l', collection)
	return eta_u, eta_l, eta_u * eta_l


def default_sample_dt(params):
	"""Shortest of the pulse FWHM and the nonzero photon lifetimes, divided by samples_per_timescale (ns)."""
	scales = [params.drive.pulse.fwhm_ns] if params.drive.mode == DRIVE_PULSED else []
	scales += [cavity_photon_lifetime(k) for k in (params.kappa_u, params.kappa_l) if k > 0]
	if not scales:
		raise ValueError("default_sample_dt needs a pulse or a nonzero cavity decay rate")
	return min(scales) / _SAMPLES_PER_TIMESCALE


def pulsed_emission(params, t_end=None, sample_dt=None):
	"""Run one excitation pulse from g0 and return (trajectory, emission probabilities)."""
	if params.drive.mode != DRIVE_PULSED:
		raise ValueError("pulsed_emission requires a pulsed drive")
	params = ensure_calibrated(params)
	t_start = pulse_window_start(params)
	t_end = default_t_end(params) if t_end is None else t_end
	sample_dt = default_sample_dt(params) if sample_dt is None else sample_dt
	traj = integrate_master_equation(params, DensityMatrix.pure(params.layout, 'g0'), t_end, sample_dt, t_start=t_start)
	return traj, emission_probabilities(traj)
