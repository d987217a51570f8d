"""
runner.py — cascade-qed command line.

Subcommands:
	run <file> [--out DIR] [--threads N]   run one scenario, write artifacts + manifest.json
	list                                   shipped scenario catalog
	validate <file>                        schema and semantic checks only
	history [--scenario NAME]              run ledger

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

import argparse
from datetime import datetime, timezone
import os
import sys
import time

from cascade import __version__
from cascade.errors import NumericalError, ScenarioValidationError
from cli.artifacts import ArtifactWriter
from cli.scenarios import catalog, load_scenario
from cli.tasks import TASKS
from utils import config, dbops
from utils import logging as logmod


_DEFAULT_THREADS = config.get('cli', 'default_threads', int)
_THREADS_ENV_VAR = config.get('cli', 'threads_env_var')

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2


def _positive_int(text):
	try:
		value = int(text)
	except ValueError:
		raise argparse.ArgumentTypeError(f"not an integer: {text}") from None
	if value < 1:
		raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
	return value


def resolve_threads(requested=None):
	"""--threads, else the environment variable, else [cli] default_threads."""
	if requested is not None:
		return requested
	raw = os.environ.get(_THREADS_ENV_VAR)
	if raw is None or raw.strip() == '':
		return _DEFAULT_THREADS
	try:
		return _positive_int(raw)
	except argparse.ArgumentTypeError as e:
		raise config.ConfigError(f"Invalid {_THREADS_ENV_VAR}={raw!r}: {e}") from None


def _parse_args(argv=None):
	parser = argparse.ArgumentParser(prog='cascade-qed', description='Cascaded two-photon emission scenarios.')
	parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
	sub = parser.add_subparsers(dest='command', required=True)
	run = sub.add_parser('run', help='run a scenario file')
	run.add_argument('scenario', help='scenario JSON file')
	run.add_argument('--out', dest='out', help='output directory (default: output_root/<scenario name>)')
	run.add_argument('--threads', dest='threads', type=_positive_int, help=f"sweep worker processes (default: ${_THREADS_ENV_VAR} or config)")
	sub.add_parser('list', help='list shipped scenarios')
	validate = sub.add_parser('validate', help='validate a scenario file')
	validate.add_argument('scenario', help='scenario JSON file')
	history = sub.add_parser('history', help='show the run ledger')
	history.add_argument('--scenario', dest='scenario', help='only runs of this scenario name')
	return parser.parse_args(argv)


def _report_problems(error):
	for pointer, message in error.problems:
		print(f"invalid: {pointer or '/'}: {message}", file=sys.stderr)


def _record(scenario_name, task, digest, status, exit_code, wall, output_dir, message, started_at):
	try:
		dbops.record_run(scenario_name, task, digest, __version__, status, exit_code, wall, output_dir, message, started_at)
	except Exception as e:
		# the artifacts are already on disk; a ledger failure must not change the exit code
		logmod.log_message('error', f"run ledger update failed: {e}")


# ============================
# Commands
# ============================
def run_scenario(path, out=None, threads=None):
	"""Run one scenario file; returns the exit code."""
	started_at = datetime.now(timezone.utc).isoformat(timespec='seconds')
	start = time.perf_counter()
	try:
		scenario = load_scenario(path)
	except ScenarioValidationError as e:
		_report_problems(e)
		_record(os.path.basename(path), '', '', 'invalid', EXIT_INVALID, time.perf_counter() - start, '', str(e), started_at)
		return EXIT_INVALID
	workers = resolve_threads(threads)
	output_dir = scenario.resolved_output_dir(out)
	logmod.log_message('info', f"run {scenario.name} ({scenario.task}) -> {output_dir} with {workers} worker(s)")
	writer = ArtifactWriter(output_dir)
	status, exit_code, message, summary = 'ok', EXIT_OK, '', None
	try:
		summary = TASKS[scenario.task](scenario, writer, workers)
	except NumericalError as e:
		status, exit_code, message = 'numerical_failure', EXIT_NUMERICAL, f"{type(e).__name__}: {e}"
		logmod.log_message('error', f"run {scenario.name} failed: {message}")
		print(f"numerical failure: {message}", file=sys.stderr)
	except ValueError as e:
		status, exit_code, message = 'invalid', EXIT_INVALID, str(e)
		logmod.log_message('error', f"run {scenario.name} rejected: {message}")
		print(f"invalid: {message}", file=sys.stderr)
	wall = time.perf_counter() - start
	over_budget = scenario.budget_s is not None and wall > scenario.budget_s
	if over_budget:
		logmod.log_message('warning', f"run {scenario.name} took {wall:.1f} s, budget {scenario.budget_s} s")
	writer.manifest({
		'scenario': scenario.name,
		'group': scenario.group,
		'figure': scenario.figure,
		'task': scenario.task,
		'input_digest': scenario.digest,
		'toolkit_version': __version__,
		'started_at': started_at,
		'wall_time_s': wall,
		'budget_s': scenario.budget_s,
		'over_budget': over_budget,
		'threads': workers,
		'status': status,
		'exit_code': exit_code,
		'message': message,
		'params': scenario.params.to_dict(),
		'summary': summary,
	})
	_record(scenario.name, scenario.task, scenario.digest, status, exit_code, wall, output_dir, message, started_at)
	if exit_code == EXIT_OK:
		print(f"{scenario.name}: ok in {wall:.1f} s -> {output_dir}")
	return exit_code


def list_scenarios():
	entries = catalog()
	for entry in entries:
		budget = f"{entry.budget_s:g} s" if entry.budget_s is not None else '-'
		print(f"{entry.name:<34} {entry.group:<22} {entry.task:<24} {budget:<8} {entry.figure or '-'}")
	return EXIT_OK


def validate_scenario(path):
	try:
		scenario = load_scenario(path)
	except ScenarioValidationError as e:
		_report_problems(e)
		return EXIT_INVALID
	print(f"{scenario.name}: valid ({scenario.task})")
	return EXIT_OK


def show_history(scenario=None):
	for record in dbops.run_history(scenario):
		print(
			f"{record['started_at']} {record['scenario']:<34} {record['task']:<24} {record['status']:<18} "
			f"exit={record['exit_code']} {record['wall_time_s']:.1f}s {record['input_digest'][:12]}"
		)
	return EXIT_OK


def main(argv=None):
	args = _parse_args(argv)
	try:
		if args.command == 'run':
			return run_scenario(args.scenario, args.out, args.threads)
		if args.command == 'list':
			return list_scenarios()
		if args.command == 'validate':
			return validate_scenario(args.scenario)
		return show_history(args.scenario)
	except config.ConfigError as e:
		logmod.log_message('error', f"configuration error: {e}")
		print(f"configuration error: {e}", file=sys.stderr)
		return EXIT_INVALID


if __name__ == '__main__':
	raise SystemExit(main())
