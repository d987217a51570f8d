"""
dbops.py — run ledger for cascade-qed

Every CLI run appends one record to a TinyDB document store; records are checked against db/schema/run_schema.json.
Design: self-initializing, config-driven, schema-validated, canonical logging, minimal side effects.
"""
# ============================
# Module Initialization Structure
# ============================
#
# - All imports are at the top of the file.
# - All global state is defined at the top.
# - The init_module() function performs all one-time initialization (DB, schema).
# - Initialization is lazy: the first ledger access calls init_module(), so importing never touches the disk.
# - init_module() is idempotent and guarded by a module-level flag; passing a different db_path reopens the ledger.
# - All other functions assume initialization has already occurred.

import json
import os

from tinydb import Query, TinyDB
from tinydb.storages import JSONStorage

from utils import config, logging


# ============================
# Module-level Config & State
# ============================
_RUNS_DB_PATH = None
_SCHEMA_PATH = None

# --- Singleton TinyDB instance and schema ---
_db = None
_schema = None
_INIT_OK = False

RUN_CATEGORY = 'run'
RUN_STATUSES = ('ok', 'invalid', 'numerical_failure')

_FIELD_TYPES = {
	'string': str,
	'integer': int,
	'number': (int, float),
	'timestamp': str,
}


# ============================
# Private Helpers and Initialization
# ============================
def init_module(db_path=None):
	"""Open the ledger at db_path (default: [db] runs_db_path) and load the run schema."""
	global _RUNS_DB_PATH, _SCHEMA_PATH, _db, _schema, _INIT_OK
	if _INIT_OK and (db_path is None or os.path.abspath(db_path) == _RUNS_DB_PATH):
		return
	if _db is not None:
		_db.close()
		_db = None
	_INIT_OK = False
	_RUNS_DB_PATH = os.path.abspath(db_path) if db_path is not None else config.path('db', 'runs_db_path')
	_SCHEMA_PATH = config.path('db', 'run_schema_path')
	try:
		with open(_SCHEMA_PATH, 'r', encoding='utf-8') as f:
			_schema = json.load(f)
	except (OSError, ValueError) as e:
		logging.log_message('error', f"dbops: failed to load run schema {_SCHEMA_PATH}: {e}")
		raise
	os.makedirs(os.path.dirname(_RUNS_DB_PATH), exist_ok=True)
	_db = TinyDB(_RUNS_DB_PATH, storage=JSONStorage)
	_INIT_OK = True
	logging.log_message('debug', f"dbops: ledger open at {_RUNS_DB_PATH}")


def _get_db():
	if _db is None or not _INIT_OK:
		init_module()
	return _db


def _schema_category(category):
	if _schema is None:
		raise RuntimeError("Schema not loaded.")
	for obj in _schema.get('object_categories', []):
		if obj.get('name') == category:
			return obj
	raise ValueError(f"No schema definition for category/type: {category}")


def validate_against_schema(category, data):
	"""Validate a record before insert: every schema field present, no extra fields, values of the declared type."""
	logging.log_message('debug', f"CALLCHAIN: ENTER validate_against_schema category={category}")
	_get_db()
	fields = {f['name']: f['type'] for f in _schema_category(category)['fields']}
	data_fields = set(data.keys())
	missing = set(fields) - data_fields
	extra = data_fields - set(fields)
	if missing:
		raise ValueError(f"Missing required fields for {category}: {sorted(missing)}")
	if extra:
		raise ValueError(f"Extra fields not allowed for {category}: {sorted(extra)}")
	for name, kind in fields.items():
		value = data[name]
		if isinstance(value, bool) or not isinstance(value, _FIELD_TYPES[kind]):
			raise ValueError(f"Field '{name}' of {category} must be of type {kind}, got {type(value).__name__}")
	logging.log_message('debug', f"CALLCHAIN: EXIT validate_against_schema category={category}")
	return True


# ============================
# Generic operations
# ============================
def add_object(category, data):
	"""Insert a validated record; returns the TinyDB document id."""
	try:
		validate_against_schema(category, data)
		obj_id = _get_db().table(category).insert(data)
		logging.log_message('info', f"Added object to {category}: {obj_id}")
		return obj_id
	except Exception as e:
		logging.log_message('error', f"add_object failed for {category} with data={data}: {e}")
		raise


def find_objects(category, filters=None):
	"""Records of a category matching every filter (all records when filters is empty), in insertion order."""
	try:
		table = _get_db().table(category)
		if not filters:
			return table.all()
		q = Query()
		cond = None
		for k, v in filters.items():
			cond = (q[k] == v) if cond is None else (cond & (q[k] == v))
		results = table.search(cond)
		logging.log_message('debug', f"Found objects in {category} with {filters}: {len(results)} found")
		return results
	except Exception as e:
		logging.log_message('error', f"find_objects failed for {category} with filters={filters}: {e}")
		raise


# ============================
# Run ledger
# ============================
def record_run(scenario, task, input_digest, version, status, exit_code, wall_time_s, output_dir, message, started_at):
	if status not in RUN_STATUSES:
		raise ValueError(f"Unknown run status '{status}'; expected one of {RUN_STATUSES}")
	record = {
		'scenario': scenario,
		'task': task,
		'input_digest': input_digest,
		'version': version,
		'status': status,
		'exit_code': int(exit_code),
		'wall_time_s': float(wall_time_s),
		'output_dir': output_dir,
		'message': message,
		'started_at': started_at,
	}
	return add_object(RUN_CATEGORY, record)


def run_history(scenario=None):
	"""Ledger records, oldest first; restricted to one scenario name when given."""
	return find_objects(RUN_CATEGORY, {'scenario': scenario} if scenario else None)
