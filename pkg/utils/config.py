"""
Config module for cascade-qed.

Usage:
	from utils import config
	_RTOL = config.get('cascade.dynamics', 'rtol', float)
	_THREADS = config.get('cli', 'default_threads', int)

Principles:
- No in-code defaults for tunables: solver tolerances, grid defaults, log paths and the like live in config.ini.
- If a config value is missing or cannot be cast, ConfigError is raised naming [section] key.
- No global ALL_CAPS variables shared across modules; each module loads its own _PRIVATE_VARIABLES as needed.
- Section/key names match config.ini structure (section names follow the dotted module path).
"""


import configparser
import os


_CONFIG_PATH = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'config.ini'))
_config = configparser.ConfigParser(interpolation=None)
_read_files = _config.read(_CONFIG_PATH, encoding='utf-8')


class ConfigError(RuntimeError):
	"""Missing or invalid configuration value."""


def _as_bool(value):
	lowered = value.strip().lower()
	if lowered in ('true', 'yes', '1', 'on'):
		return True
	if lowered in ('false', 'no', '0', 'off'):
		return False
	raise ValueError(f"not a boolean: {value}")


def get(section, key, cast=None):
	"""
	Return the value of [section] key from config.ini, optionally cast.
	cast may be any callable taking the raw string; bool is mapped to a strict true/false parser.
	"""
	if not _read_files:
		raise ConfigError(f"config.ini not found at {_CONFIG_PATH}. Please ensure the file exists and is readable.")
	try:
		value = _config[section][key]
	except KeyError:
		raise ConfigError(f"Missing required config value: [{section}] {key}. Please add this setting to config.ini under the correct section.") from None
	if cast is None:
		return value
	if cast is bool:
		cast = _as_bool
	try:
		return cast(value)
	except (TypeError, ValueError):
		raise ConfigError(f"Invalid value for [{section}] {key}: {value}. Check config.ini for correct types.") from None


def path(section, key):
	"""Config value interpreted as a path relative to the repository root."""
	raw = get(section, key)
	if os.path.isabs(raw):
		return raw
	return os.path.abspath(os.path.join(os.path.dirname(_CONFIG_PATH), raw))
