"""
artifacts.py — deterministic CSV/JSON output for one scenario run.

Every number goes through the same '%.8e' format (9 significant digits) with '\n' line endings, so reruns are
byte-identical. One ArtifactWriter owns an output directory and performs every write in the calling process.
"""

import csv
import hashlib
import json
import math
import os

import numpy as np

from cascade.dynamics import TRAJECTORY_SERIES
from utils import logging as logmod


NUMBER_FORMAT = '%.8e'

TRAJECTORY_COLUMNS = ('time_ns', 'P_g0', 'P_g', 'P_i', 'P_e', 'n_u', 'n_l', 'flux_u_per_ns', 'flux_l_per_ns')


def format_number(value):
	return NUMBER_FORMAT % float(value)


def jsonable(value):
	"""Plain JSON types for numpy scalars/arrays, tuples and dataclass dicts; non-finite floats become strings."""
	if isinstance(value, dict):
		return {str(k): jsonable(v) for k, v in value.items()}
	if isinstance(value, (list, tuple)):
		return [jsonable(v) for v in value]
	if isinstance(value, np.ndarray):
		return [jsonable(v) for v in value.tolist()]
	if isinstance(value, (np.bool_, bool)):
		return bool(value)
	if isinstance(value, (np.integer, int)):
		return int(value)
	if isinstance(value, (np.floating, float)):
		value = float(value)
		return value if math.isfinite(value) else repr(value)
	if isinstance(value, (np.complexfloating, complex)):
		return {'re': jsonable(value.real), 'im': jsonable(value.imag)}
	return value


def file_digest(path):
	digest = hashlib.sha256()
	with open(path, 'rb') as f:
		for chunk in iter(lambda: f.read(1 << 16), b''):
			digest.update(chunk)
	return digest.hexdigest()


class ArtifactWriter:
	"""Writes the files of one run into output_dir and remembers them for the manifest."""

	def __init__(self, output_dir):
		self.output_dir = output_dir
		self.outputs = []
		os.makedirs(output_dir, exist_ok=True)

	def _path(self, filename):
		path = os.path.join(self.output_dir, filename)
		self.outputs.append(filename)
		return path

	def table(self, filename, header, columns):
		"""Numeric CSV: one column per array, all of equal length."""
		data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
		path = self._path(filename)
		with open(path, 'w', encoding='utf-8', newline='') as f:
			np.savetxt(f, data, fmt=NUMBER_FORMAT, delimiter=',', header=','.join(header), comments='', newline='\n')
		logmod.log_message('debug', f"wrote {filename}: {data.shape[0]} rows")
		return path

	def rows(self, filename, header, rows):
		"""CSV with mixed text/number cells; floats are formatted, everything else written as is."""
		path = self._path(filename)
		with open(path, 'w', encoding='utf-8', newline='') as f:
			writer = csv.writer(f, lineterminator='\n')
			writer.writerow(header)
			count = 0
			for row in rows:
				writer.writerow([format_number(v) if isinstance(v, (float, np.floating)) else v for v in row])
				count += 1
		logmod.log_message('debug', f"wrote {filename}: {count} rows")
		return path

	def json(self, filename, obj):
		path = self._path(filename)
		with open(path, 'w', encoding='utf-8', newline='') as f:
			f.write(json.dumps(jsonable(obj), indent=2, sort_keys=True) + '\n')
		return path

	def text(self, filename, text):
		path = self._path(filename)
		with open(path, 'w', encoding='utf-8', newline='') as f:
			f.write(text if text.endswith('\n') else text + '\n')
		return path

	# ============================
	# Domain writers
	# ============================
	def trajectory(self, filename, traj):
		columns = [traj.times] + [traj[name] for name in TRAJECTORY_SERIES]
		return self.table(filename, TRAJECTORY_COLUMNS, columns)

	def sweep(self, filename, result):
		"""Long format: axis1_name, axis1_value, axis2_name, axis2_value (blank for 1D), observables, residual."""
		names = list(result.observables)
		header = ['axis1_name', 'axis1_value', 'axis2_name', 'axis2_value'] + names + ['residual']
		axis_names = [axis.name for axis in result.axes]

		def records():
			for coords, values, residual, _ in result.rows():
				first = [axis_names[0], float(coords[0])]
				second = [axis_names[1], float(coords[1])] if len(coords) > 1 else ['', '']
				yield first + second + [float(values[n]) for n in names] + [float(residual)]

		return self.rows(filename, header, records())

	def two_time_grid(self, filename, grid):
		"""Square form in long format: t1_ns, t2_ns, re, im."""
		square = grid.square_values()
		t1, t2 = np.meshgrid(grid.t1, grid.t2, indexing='ij')
		return self.table(filename, ('t1_ns', 't2_ns', 're', 'im'), (t1.ravel(), t2.ravel(), square.real.ravel(), square.imag.ravel()))

	def spectrum(self, filename, spectrum):
		return self.table(filename, ('omega_MHz', 'density'), (spectrum.omega, spectrum.density))

	def cross_correlation(self, filename, result):
		return self.table(
			filename, ('delay_ns', 'raw_per_ns', 'baseline_per_ns', 'normalized'),
			(result.delays, result.raw, result.baseline, result.normalized),
		)

	def manifest(self, document):
		"""manifest.json with the sha256 of every file written so far; not listed in itself."""
		outputs = {name: file_digest(os.path.join(self.output_dir, name)) for name in self.outputs}
		path = os.path.join(self.output_dir, 'manifest.json')
		with open(path, 'w', encoding='utf-8', newline='') as f:
			f.write(json.dumps(jsonable(dict(document, outputs=outputs)), indent=2, sort_keys=True) + '\n')
		return path
