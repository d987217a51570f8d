"""
steady.py — Liouvillian steady state and the parameter sweeps built on it, plus the two pulsed detuning sweeps.

The steady solve is a dense trace-row replacement on the part of the state space that is dynamically connected to
|g,0,0>. Under the continuous g-e drive the level g0 has no coupling at all, so keeping it would leave a second,
trivial steady state and a singular system.
"""

from dataclasses import dataclass, field
from functools import partial
import warnings

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from cascade.dynamics import MasterEquation, ensure_calibrated, fiber_efficiency, pulsed_emission
from cascade.errors import ConvergenceError, SingularSteadyStateError
from cascade.model import DRIVE_CW, DRIVE_NONE, DRIVE_PULSED, system_operators
from cascade.qspace import DensityMatrix, expectation
from cascade.workers import run_points
from utils import config
from utils import logging as logmod


_RESIDUAL_TOLERANCE = config.get('cascade.steady', 'residual_tolerance', float)
_DETUNING_MIN = config.get('cascade.steady', 'detuning_min_mhz', float)
_DETUNING_MAX = config.get('cascade.steady', 'detuning_max_mhz', float)
_DETUNING_POINTS = config.get('cascade.steady', 'detuning_points', int)
_KAPPA_MIN = config.get('cascade.steady', 'kappa_min_mhz', float)
_KAPPA_MAX = config.get('cascade.steady', 'kappa_max_mhz', float)
_KAPPA_ROWS = config.get('cascade.steady', 'kappa_rows', int)

STEADY_OBSERVABLES = ('n_u', 'n_l', 'P_i', 'P_e')
PULSED_OBSERVABLES = ('eta_u', 'eta_l', 'P_u', 'P_l')


def default_detuning_grid():
	return np.linspace(_DETUNING_MIN, _DETUNING_MAX, _DETUNING_POINTS)


def default_kappa_grid():
	return np.logspace(np.log10(_KAPPA_MIN), np.log10(_KAPPA_MAX), _KAPPA_ROWS)


# ============================
# Results
# ============================
@dataclass(frozen=True)
class SweepAxis:
	name: str
	unit: str
	values: tuple

	def __post_init__(self):
		values = tuple(float(v) for v in self.values)
		if not values:
			raise ValueError(f"Sweep axis '{self.name}' is empty")
		steps = np.diff(values)
		if len(values) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
			raise ValueError(f"Sweep axis '{self.name}' must be strictly monotone")
		object.__setattr__(self, 'values', values)

	def __len__(self):
		return len(self.values)


@dataclass(frozen=True, eq=False)
class SweepResult:
	"""
	Scan output. Every observable array has shape tuple(len(axis) for axis in axes); failed points hold NaN and
	their error message in failures, keyed by the flat grid index.
	"""
	axes: tuple
	observables: dict
	residuals: np.ndarray
	failures: dict = field(default_factory=dict)
	metadata: dict = field(default_factory=dict)

	@property
	def shape(self):
		return tuple(len(axis) for axis in self.axes)

	def __getitem__(self, name):
		return self.observables[name]

	def rows(self):
		"""Long-format records in grid order: (axis values, {observable: value}, residual)."""
		for flat, index in enumerate(np.ndindex(*self.shape)):
			coords = tuple(axis.values[i] for axis, i in zip(self.axes, index))
			values = {name: float(array[index]) for name, array in self.observables.items()}
			yield coords, values, float(self.residuals[index]), self.failures.get(flat)


def _assemble(axes, outcomes, names, metadata):
	shape = tuple(len(axis) for axis in axes)
	observables = {name: np.full(shape, np.nan) for name in names}
	residuals = np.full(shape, np.nan)
	failures = {}
	for outcome in outcomes:
		index = np.unravel_index(outcome.index, shape)
		if not outcome.ok:
			failures[outcome.index] = outcome.error
			continue
		values, residual = outcome.value
		for name in names:
			observables[name][index] = values[name]
		residuals[index] = residual
	return SweepResult(tuple(axes), observables, residuals, failures, metadata)


# ============================
# Steady state
# ============================
def _coupling_graph(equation):
	hamiltonian = equation.hamiltonian()
	adjacency = np.abs(hamiltonian) > 0
	for c in equation._jumps:
		adjacency |= np.abs(c) > 0
	# edge x -> a whenever an operator maps basis state x onto a
	return csr_matrix(adjacency.T.astype(np.int8))


def _reachable(equation, start):
	order = breadth_first_order(_coupling_graph(equation), start, directed=True, return_predecessors=False)
	return np.sort(order)


def _closed_classes(equation, subset):
	"""Closed communicating classes of the coupling graph restricted to subset, as lists of basis indices."""
	graph = _coupling_graph(equation)[subset][:, subset]
	count, labels = connected_components(graph, directed=True, connection='strong')
	classes = []
	for label in range(count):
		members = np.flatnonzero(labels == label)
		outgoing = graph[members].nonzero()[1]
		if np.all(labels[outgoing] == label):
			classes.append([int(subset[m]) for m in members])
	return classes


def solve_steady_state(params):
	"""Steady state plus its residual max|Lρ|; see steady_state."""
	mode = params.drive.mode
	if mode not in (DRIVE_CW, DRIVE_NONE):
		raise ValueError(f"steady_state needs a time-independent generator, got drive mode '{mode}'")
	if not any(r > 0 for r in (params.kappa_u, params.kappa_l, params.gamma_u, params.gamma_l)):
		raise ValueError("steady_state needs at least one nonzero decay channel")
	equation = MasterEquation(params)
	layout = params.layout
	subset = _reachable(equation, layout.encode('g', 0, 0))
	n = subset.size
	h_eff = equation.effective_hamiltonian()[np.ix_(subset, subset)]
	identity = np.eye(n)
	superop = -1j * (np.kron(h_eff, identity) - np.kron(identity, h_eff.conj()))
	for c in equation._jumps:
		block = c[np.ix_(subset, subset)]
		superop += np.kron(block, block.conj())
	# trace constraint replaces the first row
	superop[0, :] = 0.0
	superop[0, np.arange(n) * (n + 1)] = 1.0
	rhs = np.zeros(n * n, dtype=complex)
	rhs[0] = 1.0
	try:
		with warnings.catch_warnings():
			warnings.simplefilter('error', linalg.LinAlgWarning)
			solution = linalg.solve(superop, rhs)
	except (linalg.LinAlgError, linalg.LinAlgWarning) as e:
		classes = _closed_classes(equation, subset)
		labels = [[layout.label(i) for i in cls] for cls in classes]
		logmod.log_message('error', f"solve_steady_state: singular system ({e}); closed subspaces {labels}")
		flat = [label for cls in labels for label in cls]
		raise SingularSteadyStateError(
			f"steady state is not unique: {len(labels)} closed subspace(s) {labels}", flat,
		) from e
	block = solution.reshape(n, n)
	full = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
	full[np.ix_(subset, subset)] = 0.5 * (block + block.conj().T)
	residual = float(np.max(np.abs(equation.apply(full))))
	rho = DensityMatrix(layout, full)
	logmod.log_message('debug', f"solve_steady_state: subspace {n}/{layout.total_dim} states, residual {residual:.3e}")
	return rho, residual


def steady_state(params):
	"""
	Solve Lρ = 0, tr ρ = 1 for a continuous drive (or none). Raises SingularSteadyStateError when the connected
	part of the state space still has more than one steady state, and ConvergenceError when the residual exceeds
	the configured tolerance.
	"""
	rho, residual = solve_steady_state(params)
	if residual > _RESIDUAL_TOLERANCE:
		raise ConvergenceError(f"steady-state residual {residual:.3e} exceeds {_RESIDUAL_TOLERANCE:g}")
	return rho


def steady_observables(params):
	"""({n_u, n_l, P_i, P_e}, residual) at the steady state."""
	rho, residual = solve_steady_state(params)
	if residual > _RESIDUAL_TOLERANCE:
		raise ConvergenceError(f"steady-state residual {residual:.3e} exceeds {_RESIDUAL_TOLERANCE:g}")
	ops = system_operators(params.layout)
	values = {
		'n_u': expectation(rho, ops.n_u).real,
		'n_l': expectation(rho, ops.n_l).real,
		'P_i': expectation(rho, ops.P_i).real,
		'P_e': expectation(rho, ops.P_e).real,
	}
	return values, residual


# ============================
# Continuous-drive sweeps
# ============================
def _detuning_point(params, delta_D):
	return steady_observables(params.with_drive(delta_D=float(delta_D)))


def _kappa_detuning_point(params, point):
	kappa_u, delta_D = point
	return steady_observables(params.replace(kappa_u=float(kappa_u)).with_drive(delta_D=float(delta_D)))


def _require_cw(params, name):
	if params.drive.mode != DRIVE_CW:
		raise ValueError(f"{name} requires a continuous g-e drive, got '{params.drive.mode}'")


def sweep_drive_detuning(params, delta_D_grid=None, workers=1):
	"""Steady-state n_u, n_l, P_i, P_e versus drive detuning Δ_D (MHz)."""
	_require_cw(params, 'sweep_drive_detuning')
	axis = SweepAxis('delta_D', 'MHz', default_detuning_grid() if delta_D_grid is None else delta_D_grid)
	logmod.log_message('info', f"sweep_drive_detuning: {len(axis)} points, workers={workers}")
	outcomes = run_points(partial(_detuning_point, params), axis.values, workers)
	return _assemble([axis], outcomes, STEADY_OBSERVABLES, {'params': params.to_dict(), 'kind': 'steady_sweep'})


def kappa_detuning_map(params, kappa_u_grid=None, delta_D_grid=None, workers=1):
	"""
	2D map over (κ_u, Δ_D). n_l and P_i are each normalized to a maximum of 1 per κ_u row; the raw values are kept
	as n_l_raw and P_i_raw.
	"""
	_require_cw(params, 'kappa_detuning_map')
	kappa_axis = SweepAxis('kappa_u', 'MHz', default_kappa_grid() if kappa_u_grid is None else kappa_u_grid)
	delta_axis = SweepAxis('delta_D', 'MHz', default_detuning_grid() if delta_D_grid is None else delta_D_grid)
	points = [(k, d) for k in kappa_axis.values for d in delta_axis.values]
	logmod.log_message('info', f"kappa_detuning_map: {len(kappa_axis)}x{len(delta_axis)} points, workers={workers}")
	outcomes = run_points(partial(_kappa_detuning_point, params), points, workers)
	raw = _assemble([kappa_axis, delta_axis], outcomes, ('n_l', 'P_i'), {})
	observables = {}
	for name in ('n_l', 'P_i'):
		values = raw[name]
		row_max = np.nanmax(values, axis=1, keepdims=True)
		with np.errstate(invalid='ignore', divide='ignore'):
			normalized = np.where(row_max > 0, values / row_max, np.nan)
		if np.any(~(row_max > 0)):
			logmod.log_message('warning', f"kappa_detuning_map: rows with no {name} signal cannot be normalized")
		observables[name] = normalized
		observables[f"{name}_raw"] = values
	metadata = {
		'params': params.to_dict(), 'kind': 'kappa_map',
		'normalization': 'each observable divided by its own maximum within each kappa_u row',
	}
	return SweepResult(raw.axes, observables, raw.residuals, raw.failures, metadata)


# ============================
# Pulsed detuning sweeps
# ============================
def _pulsed_point(params):
	traj, probabilities = pulsed_emission(params)
	values = {
		'P_u': probabilities.P_u,
		'P_l': probabilities.P_l,
		'eta_u': fiber_efficiency(min(probabilities.P_u, 1.0), 'u', params.collection),
		'eta_l': fiber_efficiency(min(probabilities.P_l, 1.0), 'l', params.collection),
	}
	return values, traj.trace_error


def _opposite_point(params, delta):
	return _pulsed_point(params.replace(delta_u=float(delta), delta_l=-float(delta)))


def _common_point(params, delta):
	return _pulsed_point(params.replace(delta_u=float(delta)).with_drive(delta_D=float(delta)))


def _pulsed_sweep(params, delta_grid, workers, point, kind):
	if params.drive.mode != DRIVE_PULSED:
		raise ValueError(f"{kind} requires a pulsed drive, got '{params.drive.mode}'")
	# one calibration at the undetuned parameters, shared by every point
	params = ensure_calibrated(params)
	axis = SweepAxis('delta', 'MHz', delta_grid)
	logmod.log_message('info', f"{kind}: {len(axis)} points, omega_D={params.drive.omega_D:.6g} MHz, workers={workers}")
	outcomes = run_points(partial(point, params), axis.values, workers)
	return _assemble([axis], outcomes, PULSED_OBSERVABLES, {'params': params.to_dict(), 'kind': kind, 'residual': 'trace drift'})


def sweep_opposite_cavity_detunings(params, delta_grid, workers=1):
	"""In-fiber efficiencies with Δ_u = +δ, Δ_l = −δ."""
	return _pulsed_sweep(params, delta_grid, workers, _opposite_point, 'detuning_sweep_opposite')


def sweep_common_drive_cavity_detuning(params, delta_grid, workers=1):
	"""In-fiber efficiencies with Δ_D = Δ_u = δ, keeping the two-photon resonance."""
	return _pulsed_sweep(params, delta_grid, workers, _common_point, 'detuning_sweep_common')
