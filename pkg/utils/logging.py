"""
Canonical logging setup for the project.

Principles:
- Self-initializes on first use so that calling modules keep concerns separated and simple.
- Clear distinction between public and private functions and variables.
- Modules do not import or configure logging directly; they call log_message().

Design Parameters:
1. Minimize imports in other modules: provide a single canonical log function.
2. Separate log files for the command-line front end and the simulation core, as configured in config.ini.
3. Handlers are managed centrally (one RotatingFileHandler per file) so sweep workers never duplicate them.
4. All logging format, file, and level configuration is deterministic and comes from config.ini.
5. Automatically detects and reports the calling module in the resulting log entries.
"""


import inspect
import logging
import os
from logging.handlers import RotatingFileHandler

from utils import config


# Preload all config values needed for logging into private variables
_CLI_LOG_FILE = config.path('app', 'logging_cli_log_file')
_SIM_LOG_FILE = config.path('app', 'logging_sim_log_file')
_CLI_LOG_LEVEL = config.get('app', 'logging_cli_level', str).upper()
_SIM_LOG_LEVEL = config.get('app', 'logging_sim_level', str).upper()
_LOG_FORMAT = config.get('utils.logging', 'format')
_MAX_BYTES = config.get('utils.logging', 'max_bytes', int)
_BACKUP_COUNT = config.get('utils.logging', 'backup_count', int)


# Private: logger cache to avoid duplicate handlers
_loggers = {}


def _caller_frame():
	"""First stack frame outside this logging module."""
	for frame in inspect.stack(0)[1:]:
		mod = frame.filename.replace('\\', '/').lower()
		if mod.endswith('utils/logging.py'):
			continue
		return frame
	return None


def _log_file_for(frame):
	if frame is None:
		return _SIM_LOG_FILE
	mod = frame.filename.replace('\\', '/').lower()
	if '/cli/' in mod or mod.endswith('/app.py'):
		return _CLI_LOG_FILE
	return _SIM_LOG_FILE


def _get_logger(log_file):
	if log_file not in _loggers:
		logger = logging.getLogger(f"cascade_qed.{os.path.basename(log_file)}")
		level_name = _CLI_LOG_LEVEL if log_file == _CLI_LOG_FILE else _SIM_LOG_LEVEL
		logger.setLevel(getattr(logging, level_name, logging.WARNING))
		logger.propagate = False
		if not logger.handlers:
			os.makedirs(os.path.dirname(log_file), exist_ok=True)
			handler = RotatingFileHandler(log_file, maxBytes=_MAX_BYTES, backupCount=_BACKUP_COUNT, encoding='utf-8')
			handler.setFormatter(logging.Formatter(_LOG_FORMAT))
			logger.addHandler(handler)
		_loggers[log_file] = logger
	return _loggers[log_file]


def is_enabled(level):
	"""True if a message at level would be emitted for the caller's destination."""
	logger = _get_logger(_log_file_for(_caller_frame()))
	return logger.isEnabledFor(getattr(logging, level.upper(), logging.INFO))


def log_message(level, msg, *args, **kwargs):
	"""
	Canonical logging function. Usage: log_message('info', 'message')
	Level: 'debug', 'info', 'warning', 'error', 'critical'
	"""
	frame = _caller_frame()
	logger = _get_logger(_log_file_for(frame))
	extra = kwargs.pop('extra', {})
	module_name = frame.frame.f_globals.get('__name__', None) if frame is not None else None
	extra['caller_module'] = module_name.split('.')[-1] if module_name else '?'
	log_func = getattr(logger, level.lower(), logger.info)
	log_func(msg, *args, extra=extra, **kwargs)
