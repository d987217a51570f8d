import json
import os

import pytest

from cli import runner
from cli.scenarios import build_grid, catalog, load_scenario
from cascade.errors import ScenarioValidationError
from utils import config, dbops


_SCENARIOS_DIR = config.path('cli', 'scenarios_dir')


def _fit_scenario(name='exp_fit', **options):
	return {
		'schema_version': 1,
		'name': name,
		'task': 'fit',
		'params': {
			'g_u': 4, 'g_l': 21.9, 'kappa_u': 30, 'kappa_l': 60, 'gamma_u': 0.33, 'gamma_l': 3, 'drive': {'mode': 'none'},
		},
		'options': dict({'model': 'exponential'}, **options),
	}


def _write(tmp_path, document, filename='scenario.json'):
	path = tmp_path / filename
	path.write_text(json.dumps(document), encoding='utf-8')
	return str(path)


def test_negative_linewidth_is_rejected_with_pointer(tmp_path, capsys) -> None:
	document = _fit_scenario(data={'x': [0, 1, 2, 3, 4], 'y': [5, 4, 3, 2, 1]})
	document['params']['kappa_u'] = -1
	path = _write(tmp_path, document)
	assert runner.main(['validate', path]) == runner.EXIT_INVALID
	assert '/params/kappa_u' in capsys.readouterr().err
	assert runner.main(['run', path, '--out', str(tmp_path / 'out')]) == runner.EXIT_INVALID
	assert dbops.run_history()[-1]['status'] == 'invalid'


def test_unreadable_and_malformed_files_are_invalid(tmp_path) -> None:
	bad = tmp_path / 'bad.json'
	bad.write_text('{"name": ', encoding='utf-8')
	assert runner.main(['validate', str(bad)]) == runner.EXIT_INVALID
	assert runner.main(['validate', str(tmp_path / 'missing.json')]) == runner.EXIT_INVALID


def test_semantic_problems_are_reported(tmp_path) -> None:
	document = _fit_scenario(data={'x': [0, 1, 2, 3, 4, 5], 'y': [5, 4, 3, 2, 1]}, window=[5, 1])
	with pytest.raises(ScenarioValidationError) as excinfo:
		load_scenario(_write(tmp_path, document))
	pointers = [pointer for pointer, _ in excinfo.value.problems]
	assert '/options/data' in pointers
	assert '/options/window' in pointers


def test_pulsed_task_needs_pulsed_drive(tmp_path) -> None:
	document = {
		'schema_version': 1, 'name': 'bad_pulse', 'task': 'pulse',
		'params': {'g_u': 4, 'g_l': 21.9, 'kappa_u': 30, 'kappa_l': 60, 'gamma_u': 0.33, 'gamma_l': 3,
			'drive': {'mode': 'cw_g_e', 'omega_D': 0.1}},
	}
	with pytest.raises(ScenarioValidationError) as excinfo:
		load_scenario(_write(tmp_path, document))
	assert excinfo.value.problems[0][0] == '/params/drive/mode'


def test_every_shipped_scenario_validates() -> None:
	entries = catalog()
	assert len(entries) >= 13
	for entry in entries:
		scenario = load_scenario(entry.path)
		assert scenario.name == entry.name
		assert os.path.basename(entry.path) == f"{entry.name}.json"
		assert scenario.budget_s is not None
		assert scenario.figure and scenario.figure == entry.figure


def test_list_is_sorted_and_stable(capsys) -> None:
	assert runner.main(['list']) == runner.EXIT_OK
	first = capsys.readouterr().out
	assert runner.main(['list']) == runner.EXIT_OK
	assert capsys.readouterr().out == first
	names = [line.split()[0] for line in first.splitlines()]
	assert names == sorted(names)
	assert 'adiabatic_transfer' in names


def test_list_prints_the_figure_of_each_scenario(capsys) -> None:
	assert runner.main(['list']) == runner.EXIT_OK
	lines = {line.split()[0]: line for line in capsys.readouterr().out.splitlines()}
	for entry in catalog():
		assert lines[entry.name].rstrip().endswith(entry.figure)
	assert lines['pulsed_lifetimes'].rstrip().endswith('photon temporal profiles')


def test_empty_figure_is_rejected(tmp_path) -> None:
	document = _fit_scenario(data={'x': [0, 1, 2, 3, 4], 'y': [5, 4, 3, 2, 1]})
	document['figure'] = ''
	with pytest.raises(ScenarioValidationError) as excinfo:
		load_scenario(_write(tmp_path, document))
	assert excinfo.value.problems[0][0] == '/figure'


def test_figure_is_recorded_in_the_manifest(tmp_path) -> None:
	document = dict(_fit_scenario(data={'x': [0, 1, 2, 3, 4], 'y': [5, 4, 3, 2, 1]}), figure='exponential decay fit')
	out = tmp_path / 'out'
	runner.main(['run', _write(tmp_path, document), '--out', str(out)])
	manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
	assert manifest['figure'] == 'exponential decay fit'


def test_grids_from_ranges_and_values() -> None:
	assert list(build_grid({'values': [1, 2, 3]})) == [1.0, 2.0, 3.0]
	assert build_grid({'start': -15, 'stop': 15, 'points': 301})[150] == pytest.approx(0.0)
	log_grid = build_grid({'start': 0.01, 'stop': 30, 'points': 40, 'spacing': 'log'})
	assert log_grid[0] == pytest.approx(0.01) and log_grid[-1] == pytest.approx(30.0)


def _shipped_copy(tmp_path, name, **grids):
	"""Shipped scenario rewritten into tmp_path with some option grids replaced by shorter ones."""
	with open(os.path.join(_SCENARIOS_DIR, f"{name}.json"), encoding='utf-8') as f:
		document = json.load(f)
	document['options'].update(grids)
	return _write(tmp_path, document, f"{name}.json")


@pytest.mark.parametrize('name,grids', [
	('photoionization_12mb', {}),
	('photoionization_17mb', {}),
	('weak_drive_sweep', {'delta_D': {'start': -15, 'stop': 15, 'points': 21}}),
	('weak_drive_kappa_map', {
		'kappa_u': {'start': 0.01, 'stop': 30, 'points': 4, 'spacing': 'log'},
		'delta_D': {'start': -15, 'stop': 15, 'points': 11},
	}),
])
def test_reruns_are_byte_identical(tmp_path, name, grids) -> None:
	path = _shipped_copy(tmp_path, name, **grids)
	first, second = tmp_path / 'first', tmp_path / 'second'
	assert runner.main(['run', path, '--out', str(first), '--threads', '1']) == runner.EXIT_OK
	assert runner.main(['run', path, '--out', str(second), '--threads', '1']) == runner.EXIT_OK
	manifest_a = json.loads((first / 'manifest.json').read_text(encoding='utf-8'))
	manifest_b = json.loads((second / 'manifest.json').read_text(encoding='utf-8'))
	assert manifest_a['outputs']
	assert manifest_a['outputs'] == manifest_b['outputs']
	assert manifest_a['input_digest'] == manifest_b['input_digest']
	for filename in manifest_a['outputs']:
		data = (first / filename).read_bytes()
		assert data == (second / filename).read_bytes()
		assert b'\r\n' not in data


@pytest.mark.parametrize('name,sigma_mb', [('photoionization_12mb', 12.0), ('photoionization_17mb', 17.0)])
def test_synthetic_photoionization_scenarios_recover_cross_section(tmp_path, name, sigma_mb) -> None:
	path = os.path.join(_SCENARIOS_DIR, f"{name}.json")
	assert runner.main(['run', path, '--out', str(tmp_path)]) == runner.EXIT_OK
	manifest = json.loads((tmp_path / 'manifest.json').read_text(encoding='utf-8'))
	assert manifest['status'] == 'ok'
	assert manifest['summary']['parameters']['sigma_mb'] == pytest.approx(sigma_mb, rel=0.25)
	record = dbops.run_history(name)[-1]
	assert record['exit_code'] == 0
	assert record['input_digest'] == manifest['input_digest']


def test_numerical_failure_exits_with_two(tmp_path) -> None:
	document = _fit_scenario(data={'x': list(range(10)), 'y': [1.0 + k for k in range(10)]})
	out = tmp_path / 'out'
	assert runner.main(['run', _write(tmp_path, document), '--out', str(out)]) == runner.EXIT_NUMERICAL
	manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
	assert manifest['status'] == 'numerical_failure'
	assert manifest['exit_code'] == 2
	assert dbops.run_history('exp_fit')[-1]['status'] == 'numerical_failure'


def test_too_few_points_in_window_is_invalid_input(tmp_path) -> None:
	document = _fit_scenario(data={'x': [0, 1, 2, 3, 4], 'y': [5, 4, 3, 2, 1]})
	assert runner.main(['run', _write(tmp_path, document), '--out', str(tmp_path / 'out')]) == runner.EXIT_INVALID


def test_thread_count_precedence(monkeypatch) -> None:
	env = config.get('cli', 'threads_env_var')
	monkeypatch.delenv(env, raising=False)
	assert runner.resolve_threads() == config.get('cli', 'default_threads', int)
	monkeypatch.setenv(env, '3')
	assert runner.resolve_threads() == 3
	assert runner.resolve_threads(2) == 2
	monkeypatch.setenv(env, 'zero')
	with pytest.raises(config.ConfigError):
		runner.resolve_threads()


def test_history_lists_recorded_runs(tmp_path, capsys) -> None:
	document = _fit_scenario(data={'x': [0, 1, 2, 3, 4], 'y': [5, 4, 3, 2, 1]})
	runner.main(['run', _write(tmp_path, document), '--out', str(tmp_path / 'out')])
	capsys.readouterr()
	assert runner.main(['history', '--scenario', 'exp_fit']) == runner.EXIT_OK
	lines = capsys.readouterr().out.splitlines()
	assert len(lines) == 1
	assert 'exp_fit' in lines[0] and 'invalid' in lines[0]
