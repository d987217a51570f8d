"""
scenarios.py — scenario files: loading, schema and semantic validation, parameter/grid construction, catalog.

A scenario is a JSON document validated against db/schema/scenario_schema.json (Draft 7). Problems are collected
as (json_pointer, message) pairs and raised together as ScenarioValidationError.
"""

from dataclasses import dataclass, field
import hashlib
import json
import os

from jsonschema import Draft7Validator
import numpy as np

from cascade.errors import ScenarioValidationError
from cascade.model import DRIVE_PULSED, SystemParams
from utils import config
from utils import logging as logmod


_SCHEMA_PATH = config.path('db', 'scenario_schema_path')
_SCENARIOS_DIR = config.path('cli', 'scenarios_dir')
_OUTPUT_ROOT = config.path('cli', 'output_root')

_schema = None
_validator = None

# option keys holding grids, per task
_GRID_OPTIONS = {
	'steady_sweep': ('delta_D',),
	'kappa_map': ('kappa_u', 'delta_D'),
	'spectrum': ('omega_MHz',),
	'hom_map': ('g_u', 'g_l'),
	'cross_correlation': ('delay_ns',),
	'detuning_sweep_common': ('delta',),
	'detuning_sweep_opposite': ('delta',),
}
_WINDOW_OPTIONS = ('fit_window_ns', 'window')
_DRIVE_OVERRIDES = ('omega_D', 'delta_D')


@dataclass(frozen=True, eq=False)
class Scenario:
	name: str
	task: str
	params: SystemParams
	options: dict
	variants: tuple
	path: str
	digest: str
	group: str = ''
	figure: str = ''
	description: str = ''
	budget_s: float = None
	seed: int = None
	output_dir: str = None
	document: dict = field(default_factory=dict)

	def variant_params(self):
		"""[(label, SystemParams)] with the base parameters first under the label 'base'."""
		out = [('base', self.params)]
		for label, overrides in self.variants:
			out.append((label, apply_overrides(self.params, overrides)))
		return out

	def resolved_output_dir(self, override=None):
		if override:
			return os.path.abspath(override)
		if self.output_dir:
			return self.output_dir if os.path.isabs(self.output_dir) else os.path.join(_OUTPUT_ROOT, self.output_dir)
		return os.path.join(_OUTPUT_ROOT, self.name)


@dataclass(frozen=True)
class CatalogEntry:
	name: str
	group: str
	figure: str
	task: str
	budget_s: float
	path: str


def _get_validator():
	global _schema, _validator
	if _validator is None:
		try:
			with open(_SCHEMA_PATH, 'r', encoding='utf-8') as f:
				_schema = json.load(f)
		except (OSError, ValueError) as e:
			logmod.log_message('error', f"Failed to load scenario schema {_SCHEMA_PATH}: {e}")
			raise
		Draft7Validator.check_schema(_schema)
		_validator = Draft7Validator(_schema)
	return _validator


def _pointer(parts):
	return '/' + '/'.join(str(p) for p in parts) if parts else '/'


def schema_problems(document):
	"""(pointer, message) for every schema violation, in document order."""
	errors = sorted(_get_validator().iter_errors(document), key=lambda e: [str(p) for p in e.absolute_path])
	return [(_pointer(list(e.absolute_path)), e.message) for e in errors]


# ============================
# Grids
# ============================
def build_grid(spec):
	"""Grid values from {'values': [...]} or {'start', 'stop', 'points', 'spacing'}."""
	if 'values' in spec:
		return np.asarray(spec['values'], dtype=float)
	start, stop, points = float(spec['start']), float(spec['stop']), int(spec['points'])
	if spec.get('spacing', 'linear') == 'log':
		if start <= 0 or stop <= 0:
			raise ValueError("log-spaced grid needs positive start and stop")
		return np.logspace(np.log10(start), np.log10(stop), points)
	return np.linspace(start, stop, points)


def _grid_problem(spec):
	try:
		values = build_grid(spec)
	except ValueError as e:
		return str(e)
	if values.size == 0:
		return "grid is empty"
	if not np.all(np.isfinite(values)):
		return "grid values must be finite"
	steps = np.diff(values)
	if values.size > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
		return "grid must be strictly monotone"
	return None


# ============================
# Parameters
# ============================
def apply_overrides(params, overrides):
	"""SystemParams with rate/detuning overrides; omega_D and delta_D go to the drive."""
	drive = {k: v for k, v in overrides.items() if k in _DRIVE_OVERRIDES}
	rest = {k: float(v) for k, v in overrides.items() if k not in _DRIVE_OVERRIDES}
	params = params.replace(**rest) if rest else params
	return params.with_drive(**drive) if drive else params


def _semantic_problems(document):
	problems = []
	params = None
	try:
		params = SystemParams.from_dict(document['params'])
	except (TypeError, ValueError) as e:
		problems.append(('/params', str(e)))
	task = document['task']
	options = document.get('options', {})
	for key in _GRID_OPTIONS.get(task, ()):
		if key in options:
			message = _grid_problem(options[key])
			if message:
				problems.append((f"/options/{key}", message))
	if task == 'fit' and 'synthetic' in options:
		message = _grid_problem(options['synthetic']['x'])
		if message:
			problems.append(('/options/synthetic/x', message))
	if task == 'fit' and 'data' in options and len(options['data']['x']) != len(options['data']['y']):
		problems.append(('/options/data', "x and y must have the same length"))
	for key in _WINDOW_OPTIONS:
		window = options.get(key)
		if window is not None and not window[0] < window[1]:
			problems.append((f"/options/{key}", "window start must be before its end"))
	if task != 'fit' and params is not None:
		pulsed = params.drive.mode == DRIVE_PULSED
		wants_pulse = task in ('pulse', 'hom_point', 'hom_map', 'cross_correlation', 'pair_stats', 'detuning_sweep_common', 'detuning_sweep_opposite')
		if wants_pulse and not pulsed:
			problems.append(('/params/drive/mode', f"task '{task}' requires the pulsed_g0_e drive"))
		if task in ('steady_sweep', 'kappa_map') and params.drive.mode != 'cw_g_e':
			problems.append(('/params/drive/mode', f"task '{task}' requires the cw_g_e drive"))
		if task == 'spectrum' and pulsed:
			problems.append(('/params/drive/mode', "spectrum needs a time-independent drive"))
	labels = [v['label'] for v in document.get('variants', [])]
	if len(set(labels)) != len(labels) or 'base' in labels:
		problems.append(('/variants', "variant labels must be unique and must not be 'base'"))
	return problems


def validate_document(document):
	"""Raise ScenarioValidationError listing every problem; schema problems are reported before semantic ones."""
	problems = schema_problems(document)
	if problems:
		raise ScenarioValidationError(problems)
	problems = _semantic_problems(document)
	if problems:
		raise ScenarioValidationError(problems)


def _read_document(path):
	try:
		with open(path, 'rb') as f:
			raw = f.read()
	except OSError as e:
		raise ScenarioValidationError([('/', f"cannot read scenario file {path}: {e.strerror}")]) from e
	try:
		document = json.loads(raw.decode('utf-8'))
	except (UnicodeDecodeError, ValueError) as e:
		raise ScenarioValidationError([('/', f"not valid JSON: {e}")]) from e
	return raw, document


def load_scenario(path):
	"""Read, validate and build a Scenario. The digest is sha256 of the file bytes."""
	logmod.log_message('debug', f"CALLCHAIN: ENTER load_scenario path={path}")
	raw, document = _read_document(path)
	try:
		validate_document(document)
	except ScenarioValidationError as e:
		logmod.log_message('error', f"Scenario {path} failed validation: {e}")
		raise
	scenario = Scenario(
		name=document['name'],
		task=document['task'],
		params=SystemParams.from_dict(document['params']),
		options=document.get('options', {}),
		variants=tuple((v['label'], v['overrides']) for v in document.get('variants', [])),
		path=os.path.abspath(path),
		digest=hashlib.sha256(raw).hexdigest(),
		group=document.get('group', ''),
		figure=document.get('figure', ''),
		description=document.get('description', ''),
		budget_s=document.get('budget_s'),
		seed=document.get('seed'),
		output_dir=document.get('output_dir'),
		document=document,
	)
	logmod.log_message('debug', f"CALLCHAIN: EXIT load_scenario name={scenario.name} task={scenario.task}")
	return scenario


def catalog(scenarios_dir=None):
	"""Shipped scenarios sorted by file name. Entries are listed even if invalid; validate them separately."""
	directory = _SCENARIOS_DIR if scenarios_dir is None else scenarios_dir
	entries = []
	for filename in sorted(os.listdir(directory)):
		if not filename.endswith('.json'):
			continue
		path = os.path.join(directory, filename)
		try:
			_, document = _read_document(path)
		except ScenarioValidationError as e:
			logmod.log_message('warning', f"catalog: skipping {filename}: {e}")
			continue
		entries.append(CatalogEntry(
			name=document.get('name', filename[:-5]),
			group=document.get('group', ''),
			figure=document.get('figure', ''),
			task=document.get('task', ''),
			budget_s=document.get('budget_s'),
			path=path,
		))
	return entries
