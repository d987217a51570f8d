import numpy as np
import pytest
from scipy.signal import find_peaks

from cascade import steady
from cascade.errors import ConvergenceError, SingularSteadyStateError
from cascade.model import DriveSpec, SystemParams, chain_eigenenergies, system_operators
from cascade.qspace import expectation
from cascade.workers import run_points


def _fails_on_odd(value):
	if value % 2:
		raise ConvergenceError(f"odd point {value}")
	return value * 10


def test_run_points_keeps_index_order_and_records_numerical_failures() -> None:
	outcomes = run_points(_fails_on_odd, [0, 1, 2, 3, 4])
	assert [o.index for o in outcomes] == [0, 1, 2, 3, 4]
	assert [o.value for o in outcomes if o.ok] == [0, 20, 40]
	assert 'ConvergenceError' in outcomes[1].error


def test_steady_state_is_a_physical_null_vector(weak_drive_params) -> None:
	rho, residual = steady.solve_steady_state(weak_drive_params)
	assert residual < 1e-9
	assert rho.check_physical() == []
	ops = system_operators(weak_drive_params.layout)
	assert expectation(rho, ops.P_g0).real == 0.0


def test_undriven_system_rests_in_the_ground_state(weak_drive_params) -> None:
	params = weak_drive_params.replace(drive=DriveSpec())
	values, _ = steady.steady_observables(params)
	assert values == pytest.approx({'n_u': 0.0, 'n_l': 0.0, 'P_i': 0.0, 'P_e': 0.0})


def test_zero_amplitude_continuous_drive_rests_in_the_ground_state(weak_drive_params) -> None:
	params = weak_drive_params.with_drive(omega_D=0.0)
	values, _ = steady.steady_observables(params)
	assert values == pytest.approx({'n_u': 0.0, 'n_l': 0.0, 'P_i': 0.0, 'P_e': 0.0})

def test_closed_driven_pair_without_decay_is_singular() -> None:
	params = SystemParams(
		g_u=0.0, g_l=0.0, kappa_u=1.0, kappa_l=0.0, gamma_u=0.0, gamma_l=0.0,
		drive=DriveSpec(mode='cw_g_e', omega_D=1.0),
	)
	with pytest.raises(SingularSteadyStateError):
		steady.steady_state(params)


def test_steady_state_rejects_pulsed_drive(experimental_params) -> None:
	with pytest.raises(ValueError):
		steady.steady_state(experimental_params)


def test_detuning_sweep_shape_and_bounds(weak_drive_params) -> None:
	grid = np.linspace(-3.0, 3.0, 7)
	result = steady.sweep_drive_detuning(weak_drive_params, grid)
	assert result.shape == (7,)
	assert result.failures == {}
	for name in steady.STEADY_OBSERVABLES:
		assert np.all(np.isfinite(result[name]))
		assert np.all(result[name] >= -1e-12)
		assert np.all(result[name] <= 1.0)
	assert np.nanmax(result.residuals) < 1e-9
	rows = list(result.rows())
	assert rows[0][0] == (-3.0,)
	assert rows[-1][0] == (3.0,)


def test_sweep_requires_continuous_drive(experimental_params) -> None:
	with pytest.raises(ValueError):
		steady.sweep_drive_detuning(experimental_params, [0.0])


def test_sweep_axis_must_be_monotone() -> None:
	with pytest.raises(ValueError):
		steady.SweepAxis('delta_D', 'MHz', [0.0, 1.0, 0.5])
	with pytest.raises(ValueError):
		steady.SweepAxis('delta_D', 'MHz', [])


def test_kappa_map_rows_are_normalized(weak_drive_params) -> None:
	result = steady.kappa_detuning_map(weak_drive_params, [0.01, 1.0, 30.0], np.linspace(-5.0, 5.0, 11))
	assert result.shape == (3, 11)
	for name in ('n_l', 'P_i'):
		assert np.nanmax(result[name], axis=1) == pytest.approx(np.ones(3))
		assert np.all(result[f"{name}_raw"] >= -1e-12)
	assert 'normalization' in result.metadata


def test_weak_drive_lower_cavity_peaks_at_two_photon_resonance(weak_drive_params) -> None:
	grid = np.linspace(-2.0, 2.0, 41)
	result = steady.sweep_drive_detuning(weak_drive_params, grid)
	assert grid[int(np.argmax(result['n_l']))] == pytest.approx(0.0, abs=0.1)


@pytest.mark.slow
def test_opposite_cavity_detuning_follows_detuned_purcell_estimate(experimental_params) -> None:
	result = steady.sweep_opposite_cavity_detunings(experimental_params, [-50.0, 0.0, 50.0])
	assert result.failures == {}
	for name in ('eta_u', 'eta_l'):
		values = result[name]
		assert values[1] > max(values[0], values[2])
		assert values[0] == pytest.approx(values[2], abs=1e-4)
	# per excitation at 50 MHz, fast i10/g11 pair eliminated: P_u 0.3189 of 0.5585, P_l 0.6037 of 0.7054
	assert result['eta_u'][2] / result['eta_u'][1] == pytest.approx(0.571, abs=0.04)
	assert result['eta_l'][2] / result['eta_l'][1] == pytest.approx(0.856, abs=0.04)


@pytest.mark.slow
def test_common_detuning_peaks_at_two_photon_resonance(experimental_params) -> None:
	result = steady.sweep_common_drive_cavity_detuning(experimental_params, [-40.0, -20.0, 0.0, 20.0, 40.0])
	assert result.failures == {}
	for name in ('eta_u', 'eta_l'):
		values = result[name]
		assert values[::-1] == pytest.approx(values, abs=1e-4)
		assert values[2] >= values[1] >= values[0]
		assert values[2] >= values[3] >= values[4]
		assert values[0] < values[2]


@pytest.mark.slow
def test_detuning_sweeps_without_drive_emit_nothing(experimental_params) -> None:
	silent = experimental_params.with_drive(omega_D=0.0)
	for sweep in (steady.sweep_common_drive_cavity_detuning, steady.sweep_opposite_cavity_detunings):
		result = sweep(silent, [-20.0, 0.0, 20.0])
		assert np.all(result['eta_u'] == 0.0)
		assert np.all(result['eta_l'] == 0.0)


def _grid_of_quarter_steps():
	return np.linspace(-15.0, 15.0, 121)


def test_uncoupled_lower_cavity_shows_two_symmetric_normal_modes(weak_drive_params) -> None:
	grid = _grid_of_quarter_steps()
	result = steady.sweep_drive_detuning(weak_drive_params.replace(g_l=0.0), grid)
	n_u = result['n_u']
	peaks, _ = find_peaks(n_u, prominence=0.01 * n_u.max())
	assert len(peaks) == 2
	assert grid[peaks] == pytest.approx([-10.0, 10.0], abs=0.25)
	assert n_u == pytest.approx(n_u[::-1], abs=1e-9)


def test_intermediate_level_stays_dark_at_two_photon_resonance(weak_drive_params) -> None:
	grid = _grid_of_quarter_steps()
	result = steady.sweep_drive_detuning(weak_drive_params, grid)
	P_i = result['P_i']
	assert P_i[60] < 0.1 * P_i.max()
	assert grid[int(np.argmax(result['n_l']))] == pytest.approx(0.0, abs=0.25)


def test_kappa_map_splits_lower_photon_line_only_for_narrow_upper_cavity(weak_drive_params) -> None:
	grid = _grid_of_quarter_steps()
	result = steady.kappa_detuning_map(weak_drive_params, [0.01, 30.0], grid)
	assert not result.failures
	narrow = result['n_l'][0]
	peaks, _ = find_peaks(narrow, prominence=0.01)
	bright = chain_eigenenergies(weak_drive_params, 0.0)
	assert len(peaks) == 3
	assert grid[peaks] == pytest.approx(sorted(bright), abs=0.3)
	# upper photon leaves at once, so n_l only follows the intermediate population
	wide_n_l, wide_p_i = result['n_l'][1], result['P_i'][1]
	assert np.sqrt(np.mean((wide_n_l - wide_p_i) ** 2)) < 0.02


def test_weak_drive_observables_converge_in_the_photon_cutoff() -> None:
	params = SystemParams(
		g_u=4.0, g_l=21.9, kappa_u=30.0, kappa_l=60.0, gamma_u=0.33, gamma_l=3.0,
		drive=DriveSpec(mode='cw_g_e', omega_D=0.3),
	)
	low, _ = steady.steady_observables(params.replace(n_max_u=2, n_max_l=2))
	high, _ = steady.steady_observables(params.replace(n_max_u=3, n_max_l=3))
	assert set(low) == set(high)
	for name, value in low.items():
		assert high[name] == pytest.approx(value, rel=1e-4)
