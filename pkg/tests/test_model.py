import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from cascade.model import (
	DRIVE_CW, DriveSpec, PulseShape, SystemParams, angular, build_drive_term, build_static_hamiltonian, chain_block,
	chain_eigenenergies, collapse_channels, cavity_emission_efficiency, cavity_photon_lifetime, cooperativity,
	dark_state, free_space_lifetime, purcell_lifetime, single_excitation_lifetime,
)


def _params(**changes):
	base = SystemParams(g_u=4.0, g_l=21.9, kappa_u=30.0, kappa_l=60.0, gamma_u=0.33, gamma_l=3.0)
	return base.replace(**changes)


def test_negative_or_non_finite_rates_are_rejected() -> None:
	with pytest.raises(ValueError, match='kappa_u'):
		_params(kappa_u=-1.0)
	with pytest.raises(ValueError, match='g_l'):
		_params(g_l=math.inf)
	with pytest.raises(ValueError, match='delta_u'):
		_params(delta_u=math.nan)


def test_drive_spec_rules() -> None:
	with pytest.raises(ValueError):
		DriveSpec(mode='pulsed_g0_e')
	with pytest.raises(ValueError):
		DriveSpec(mode=DRIVE_CW, omega_D=None)
	with pytest.raises(ValueError):
		DriveSpec(mode='sideways')
	pending = DriveSpec(mode='pulsed_g0_e', omega_D=None, pulse=PulseShape(20.0, 7.0))
	assert pending.needs_calibration
	with pytest.raises(ValueError):
		pending.omega_at(20.0)


def test_from_dict_builds_nested_types() -> None:
	params = SystemParams.from_dict({
		'g_u': 4, 'g_l': 21.9, 'kappa_u': 30, 'kappa_l': 60, 'gamma_u': 0.33, 'gamma_l': 3,
		'drive': {'mode': 'pulsed_g0_e', 'omega_D': None, 'pulse': {'center_ns': 20, 'fwhm_ns': 7}},
		'collection': {'eta_oc_u': 0.79},
	})
	assert params.drive.pulse.fwhm_ns == 7
	assert params.collection.channel('u') == (0.79, 1.0)
	assert SystemParams.from_dict(params.to_dict()) == params


def test_pulse_unit_area_matches_numerical_integral() -> None:
	pulse = PulseShape(center_ns=100.0, fwhm_ns=7.0)
	t = np.linspace(0.0, 200.0, 20001)
	assert trapezoid(pulse.envelope(t), t) == pytest.approx(pulse.unit_area_ns(), rel=1e-9)
	assert pulse.envelope(100.0 + 3.5) == pytest.approx(0.5)


def test_pulse_area_of_calibrated_drive() -> None:
	pulse = PulseShape(center_ns=20.0, fwhm_ns=10.0)
	omega = 1.0 / (4.0 * pulse.unit_area_ns() * 1e-3)
	drive = DriveSpec(mode='pulsed_g0_e', omega_D=omega, pulse=pulse)
	assert drive.pulse_area() == pytest.approx(math.pi)


def test_hamiltonian_and_drive_term_are_hermitian() -> None:
	params = _params(delta_u=3.0, delta_l=-1.5)
	assert build_static_hamiltonian(params).is_hermitian()
	driven = params.replace(drive=DriveSpec(mode='pulsed_g0_e', omega_D=5.0, delta_D=2.0, pulse=PulseShape(20.0, 7.0)))
	assert build_drive_term(driven, 20.0).is_hermitian()


def test_dark_state_has_zero_energy_and_no_intermediate_amplitude() -> None:
	params = _params()
	dark = dark_state(params)
	assert dark.norm() == pytest.approx(1.0)
	assert abs(dark.amplitude('i', 1, 0)) == 0.0
	image = build_static_hamiltonian(params).matrix @ dark.amplitudes
	assert np.max(np.abs(image)) < 1e-10
	assert dark.amplitude('g', 1, 1).real == pytest.approx(4.0 / math.hypot(4.0, 21.9))


def _random_couplings(seed, draws):
	"""(g_u, g_l, delta) rows: couplings log-uniform over 0.1..100 MHz, detuning uniform over +-50 MHz."""
	rng = np.random.default_rng(seed)
	couplings = 10.0 ** rng.uniform(-1.0, 2.0, size=(draws, 2))
	return np.column_stack([couplings, rng.uniform(-50.0, 50.0, size=draws)])


@pytest.mark.parametrize('seed', [101, 202, 303, 404])
def test_dark_state_and_chain_energies_over_random_couplings(seed) -> None:
	for g_u, g_l, delta in _random_couplings(seed, 250):
		params = SystemParams(
			g_u=g_u, g_l=g_l, kappa_u=30.0, kappa_l=60.0, gamma_u=0.33, gamma_l=3.0,
			delta_u=delta, delta_l=-delta, n_max_u=1, n_max_l=1,
		)
		scale = max(g_u, g_l, abs(delta))
		dark = dark_state(params)
		assert dark.norm() == pytest.approx(1.0)
		assert abs(dark.amplitude('i', 1, 0)) == 0.0
		image = build_static_hamiltonian(params).matrix @ dark.amplitudes
		assert np.max(np.abs(image)) < 1e-12 * scale
		numerical = np.linalg.eigvalsh(chain_block(params))
		assert np.sort(chain_eigenenergies(params, delta)) == pytest.approx(numerical, abs=1e-10 * scale)


@pytest.mark.parametrize('delta', [0.0, 5.0, -12.0])
def test_chain_eigenenergies_match_numerical_diagonalization(delta) -> None:
	params = _params(delta_u=delta, delta_l=-delta)
	numerical = np.linalg.eigvalsh(chain_block(params))
	assert np.sort(chain_eigenenergies(params, delta)) == pytest.approx(numerical, abs=1e-9)


def test_collapse_channels_carry_rates_and_skip_zeros() -> None:
	params = _params(gamma_u=0.0)
	channels = collapse_channels(params)
	assert [c.label for c in channels] == ['cavity_u', 'cavity_l', 'dipole_l']
	cavity_u = channels[0]
	expected = math.sqrt(2.0 * angular(30.0))
	assert cavity_u.operator.matrix[cavity_u.operator.layout.encode('g', 0, 0), cavity_u.operator.layout.encode('g', 1, 0)] == pytest.approx(expected)


def test_closed_form_analytics() -> None:
	assert cooperativity(4.0, 30.0, 0.33) == pytest.approx(16.0 / 19.8)
	assert free_space_lifetime(0.33) == pytest.approx(1e3 / (4.0 * math.pi * 0.33))
	assert cavity_photon_lifetime(30.0) == pytest.approx(1e3 / (4.0 * math.pi * 30.0))
	assert purcell_lifetime(100.0, 1.5) == pytest.approx(25.0)
	assert cavity_emission_efficiency(1.5) == pytest.approx(0.75)
	with pytest.raises(ValueError):
		cooperativity(4.0, 0.0, 0.33)


def test_single_excitation_lifetime_limits() -> None:
	assert single_excitation_lifetime(21.9, 60.0, 3.0) == pytest.approx(6.000, abs=0.005)
	bad_cavity = purcell_lifetime(free_space_lifetime(1.0), cooperativity(1.0, 1000.0, 1.0))
	assert single_excitation_lifetime(1.0, 1000.0, 1.0) == pytest.approx(bad_cavity, rel=1e-5)
	assert single_excitation_lifetime(0.0, 60.0, 3.0) == pytest.approx(free_space_lifetime(3.0))
	assert single_excitation_lifetime(50.0, 60.0, 3.0) == pytest.approx(1e3 / (4.0 * math.pi * 31.5))
	with pytest.raises(ValueError):
		single_excitation_lifetime(1.0, 0.0, 0.0)
