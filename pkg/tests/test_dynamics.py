import math

import numpy as np
import pytest
from scipy.linalg import expm

from cascade import dynamics
from cascade.errors import CalibrationError
from cascade.fitkit import fit_exponential
from cascade.model import (
	CollectionParams, DriveSpec, PulseShape, SystemParams, build_static_hamiltonian, collapse_channels, drive_coupling_operator,
	drive_detuning_operator, system_operators,
)
from cascade.qspace import DensityMatrix


def _small_cw_params():
	return SystemParams(
		g_u=1.0, g_l=1.5, kappa_u=1.0, kappa_l=2.0, gamma_u=0.5, gamma_l=0.3,
		drive=DriveSpec(mode='cw_g_e', omega_D=0.7, delta_D=0.4), n_max_u=1, n_max_l=1,
	)


_UNDRIVEN = DriveSpec(mode='none')


# time-independent generators with the expm reference: (params, initial level, n_u, n_l)
_CONSTANT_GENERATOR_CASES = {
	'cw_from_ground': (_small_cw_params(), 'g', 0, 0),
	'cw_detuned_cavities': (_small_cw_params().replace(delta_u=1.2, delta_l=-0.8), 'g', 0, 0),
	'cw_without_upper_dipole_decay': (_small_cw_params().replace(gamma_u=0.0, kappa_l=0.4), 'g', 0, 0),
	'free_decay_from_upper_level': (_small_cw_params().replace(drive=_UNDRIVEN), 'e', 0, 0),
	'free_decay_from_intermediate': (_small_cw_params().replace(drive=_UNDRIVEN, g_l=3.0), 'i', 1, 0),
}


@pytest.mark.parametrize('case', sorted(_CONSTANT_GENERATOR_CASES))
def test_integration_matches_matrix_exponential(case) -> None:
	params, level, n_u, n_l = _CONSTANT_GENERATOR_CASES[case]
	rho0 = DensityMatrix.pure(params.layout, level, n_u, n_l)
	traj = dynamics.integrate_master_equation(params, rho0, t_end=500.0, sample_dt=50.0)
	generator = dynamics.MasterEquation(params).liouvillian()
	ops = system_operators(params.layout)
	for k in (1, 3, 10):
		t_us = traj.times[k] * 1e-3
		rho = (expm(generator * t_us) @ rho0.matrix.ravel()).reshape(rho0.matrix.shape)
		for name in ('P_e', 'P_i', 'n_u', 'n_l'):
			expected = np.real(np.trace(rho @ getattr(ops, name).matrix))
			assert traj[name][k] == pytest.approx(expected, abs=1e-6)


def _channel_form_superoperator(params):
	"""-i(H⊗1 - 1⊗Hᵀ) + Σ c⊗c* - ½(c†c⊗1) - ½(1⊗(c†c)ᵀ) on the row-major flattened ρ."""
	hamiltonian = build_static_hamiltonian(params).matrix + drive_detuning_operator(params).matrix
	hamiltonian = hamiltonian + 2.0 * math.pi * params.drive.omega_D * drive_coupling_operator(params).matrix
	identity = np.eye(params.layout.total_dim)
	superop = -1j * (np.kron(hamiltonian, identity) - np.kron(identity, hamiltonian.T))
	for channel in collapse_channels(params):
		c = channel.operator.matrix
		loss = c.conj().T @ c
		superop += np.kron(c, c.conj()) - 0.5 * np.kron(loss, identity) - 0.5 * np.kron(identity, loss.T)
	return superop


def test_generator_equals_lindblad_channel_form() -> None:
	params = _small_cw_params()
	equation = dynamics.MasterEquation(params)
	expected = _channel_form_superoperator(params)
	assert equation.liouvillian() == pytest.approx(expected, abs=1e-10)
	rng = np.random.default_rng(11)
	dim = params.layout.total_dim
	a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
	rho = a @ a.conj().T
	rho /= np.trace(rho)
	assert equation.apply(rho).ravel() == pytest.approx(expected @ rho.ravel(), abs=1e-10)


def test_trajectory_keeps_trace_and_physicality() -> None:
	params = _small_cw_params()
	traj = dynamics.integrate_master_equation(params, DensityMatrix.pure(params.layout, 'g'), 300.0, 10.0)
	assert traj.trace_error < 1e-6
	assert traj.final_state.check_physical(trace_tol=1e-6, eig_tol=1e-7) == []
	assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(300.0)
	assert len(traj.times) == 31


def test_free_space_decay_of_upper_level() -> None:
	params = SystemParams(g_u=0.0, g_l=0.0, kappa_u=0.0, kappa_l=0.0, gamma_u=1.0, gamma_l=0.0, n_max_u=1, n_max_l=1)
	traj = dynamics.integrate_master_equation(params, DensityMatrix.pure(params.layout, 'e'), 100.0, 10.0)
	expected = math.exp(-2.0 * 2.0 * math.pi * 1.0 * 0.1)
	assert traj['P_e'][-1] == pytest.approx(expected, rel=1e-6)
	assert traj['P_i'][-1] == pytest.approx(1.0 - expected, rel=1e-6)


def test_bare_cavity_photon_leaks_out_completely() -> None:
	params = SystemParams(g_u=0.0, g_l=0.0, kappa_u=0.0, kappa_l=1.0, gamma_u=0.0, gamma_l=0.0, n_max_u=1, n_max_l=1)
	traj = dynamics.integrate_master_equation(params, DensityMatrix.pure(params.layout, 'g', 0, 1), 2000.0, 1.0)
	probabilities = dynamics.emission_probabilities(traj)
	assert probabilities.P_l == pytest.approx(1.0, abs=1e-3)
	assert probabilities.P_u == 0.0
	assert not probabilities.truncated


def test_undriven_ground_state_is_stationary() -> None:
	params = _small_cw_params().replace(drive=DriveSpec())
	traj = dynamics.integrate_master_equation(params, DensityMatrix.pure(params.layout, 'g0'), 200.0, 20.0)
	assert traj['P_g0'] == pytest.approx(np.ones(len(traj.times)), abs=1e-12)
	assert np.max(np.abs(traj['n_u'])) < 1e-12


def test_damped_upper_cavity_matches_analytic_decay() -> None:
	params = SystemParams(g_u=0.0, g_l=0.0, kappa_u=2.0, kappa_l=0.0, gamma_u=0.0, gamma_l=0.0, n_max_u=1, n_max_l=1)
	traj = dynamics.integrate_master_equation(params, DensityMatrix.pure(params.layout, 'g', 1, 0), 200.0, 10.0)
	expected = np.exp(-2.0 * 2.0 * math.pi * 2.0 * traj.times * 1e-3)
	assert traj['n_u'] == pytest.approx(expected, rel=1e-6)


def test_photon_flux_rate_units() -> None:
	assert dynamics.photon_flux_rate(1.0, 1.0) == pytest.approx(4.0 * math.pi * 1e-3)


def test_fiber_efficiency_and_pair_product() -> None:
	collection = CollectionParams(eta_oc_u=0.79, eta_mm_u=0.94, eta_oc_l=0.85, eta_mm_l=0.81)
	assert dynamics.fiber_efficiency(0.5, 'u', collection) == pytest.approx(0.5 * 0.79 * 0.94)
	with pytest.raises(ValueError):
		dynamics.fiber_efficiency(1.2, 'u', collection)
	probabilities = dynamics.EmissionProbabilities(0.8, 0.6, False, 0.0)
	eta_u, eta_l, product = dynamics.pair_efficiency_product(probabilities, collection)
	assert product == pytest.approx(eta_u * eta_l)
	assert eta_l == pytest.approx(0.6 * 0.85 * 0.81)


def test_invalid_inputs_are_rejected() -> None:
	params = _small_cw_params()
	rho0 = DensityMatrix.pure(params.layout, 'g')
	with pytest.raises(ValueError):
		dynamics.integrate_master_equation(params, rho0, 100.0, 0.0)
	with pytest.raises(ValueError):
		dynamics.integrate_master_equation(params, rho0, 0.0, 1.0)
	with pytest.raises(ValueError):
		dynamics.integrate_master_equation(params, DensityMatrix(params.layout, 2.0 * rho0.matrix), 100.0, 1.0)
	pending = params.replace(drive=DriveSpec(mode='pulsed_g0_e', omega_D=None, pulse=PulseShape(20.0, 7.0)))
	with pytest.raises(ValueError):
		dynamics.MasterEquation(pending)


def test_pi_pulse_calibration_of_isolated_transition() -> None:
	params = SystemParams(
		g_u=0.0, g_l=0.0, kappa_u=0.0, kappa_l=0.0, gamma_u=0.0, gamma_l=0.0,
		drive=DriveSpec(mode='pulsed_g0_e', omega_D=None, pulse=PulseShape(30.0, 10.0)), n_max_u=1, n_max_l=1,
	)
	calibration = dynamics.calibrate_pi_pulse(params)
	assert calibration.pulse_area / math.pi == pytest.approx(1.0, abs=0.01)
	assert calibration.sigma_ee > 0.999
	assert dynamics.ensure_calibrated(params).drive.omega_D == calibration.omega_D
	assert dynamics.cached_calibration(params) is dynamics.cached_calibration(params)
	pulse_end = params.drive.pulse.end_ns(1.5)
	doubled = params.with_drive(omega_D=2.0 * calibration.omega_D)
	traj = dynamics.integrate_master_equation(doubled, DensityMatrix.pure(params.layout, 'g0'), pulse_end, 1.0, t_start=10.0)
	assert traj['P_e'][-1] < calibration.sigma_ee - 0.5


def _isolated_transition():
	return SystemParams(
		g_u=0.0, g_l=0.0, kappa_u=0.0, kappa_l=0.0, gamma_u=0.0, gamma_l=0.0,
		drive=DriveSpec(mode='pulsed_g0_e', omega_D=None, pulse=PulseShape(30.0, 10.0)), n_max_u=1, n_max_l=1,
	)


def test_calibration_recovers_from_a_seed_far_below_the_pi_pulse(monkeypatch) -> None:
	params = _isolated_transition()
	reference = dynamics.calibrate_pi_pulse(params)
	# seed 2.5 times too small puts the pi-pulse past the first bracket
	monkeypatch.setattr(dynamics, '_resonant_weight', lambda p: 6.25)
	calibration = dynamics.calibrate_pi_pulse(params)
	assert calibration.omega_D == pytest.approx(reference.omega_D, rel=1e-3)
	assert calibration.sigma_ee > 0.999


def test_calibration_pinned_to_the_bracket_edge_fails(monkeypatch) -> None:
	monkeypatch.setattr(dynamics, '_resonant_weight', lambda p: 6.25)
	monkeypatch.setattr(dynamics, '_CAL_MAX_WIDENINGS', 0)
	with pytest.raises(CalibrationError, match='edge'):
		dynamics.calibrate_pi_pulse(_isolated_transition())


def test_default_timing_from_slowest_decay() -> None:
	params = SystemParams(
		g_u=4.0, g_l=21.9, kappa_u=30.0, kappa_l=60.0, gamma_u=0.33, gamma_l=3.0,
		drive=DriveSpec(mode='pulsed_g0_e', omega_D=1.0, pulse=PulseShape(20.0, 7.0)),
	)
	assert dynamics.default_t_end(params) == pytest.approx(20.0 + 1.5 * 7.0 + 5.0 * 1e3 / (4.0 * math.pi * 0.33))
	assert dynamics.pulse_window_start(params) == pytest.approx(6.0)
	assert dynamics.default_sample_dt(params) == pytest.approx(1e3 / (4.0 * math.pi * 60.0) / 20.0)


@pytest.mark.slow
def test_experimental_pulse_emits_with_adiabatic_lifetime(experimental_params) -> None:
	traj, probabilities = dynamics.pulsed_emission(experimental_params)
	calibration = dynamics.cached_calibration(experimental_params)
	assert traj.trace_error < 1e-6
	assert not probabilities.truncated
	assert calibration.sigma_ee > 0.9
	assert probabilities.P_u == pytest.approx(0.556, abs=0.004)
	assert probabilities.P_l == pytest.approx(0.705, abs=0.004)
	# per excitation, with the fast i10/g11 pair eliminated
	assert probabilities.P_u / calibration.excitation == pytest.approx(0.5585, rel=0.015)
	assert probabilities.P_l / calibration.excitation == pytest.approx(0.7054, rel=0.015)
	for cavity in ('u', 'l'):
		fit = fit_exponential(traj.times, dynamics.photon_flux(traj, cavity), (80.0, 600.0))
		assert fit['tau'] == pytest.approx(106.5, abs=2.0)


@pytest.mark.slow
def test_adiabatic_transfer_leaves_one_photon_per_cavity() -> None:
	params = SystemParams(
		g_u=10.0, g_l=1.0, kappa_u=1e-10, kappa_l=1e-10, gamma_u=1e-3, gamma_l=1e-2,
		drive=DriveSpec(mode='pulsed_g0_e', omega_D=None, pulse=PulseShape(4000.0, 2000.0)),
	)
	traj, _ = dynamics.pulsed_emission(params, t_end=8000.0, sample_dt=20.0)
	assert traj['P_g'][-1] > 0.95
	assert traj.peak('P_i') < 0.02
	assert traj.peak('n_u') > 0.9
	assert traj.peak('n_l') > 0.9
