"""
workers.py — bounded worker pool for independent sweep points.

Points are evaluated by a module-level callable (use functools.partial to bind shared arguments) so that they can
be shipped to worker processes. Results come back keyed by grid index; the assembled list is always in index order
regardless of completion order. A NumericalError raised by one point is recorded on that point's outcome and does
not abort the sweep; any other exception propagates.
"""

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass

from cascade.errors import NumericalError
from utils import logging as logmod


@dataclass(frozen=True)
class PointOutcome:
	index: int
	value: object = None
	error: str = None

	@property
	def ok(self):
		return self.error is None


def _evaluate(func, index, point):
	try:
		return PointOutcome(index, func(point))
	except NumericalError as e:
		return PointOutcome(index, error=f"{type(e).__name__}: {e}")


def run_points(func, points, workers=1):
	"""Evaluate func on every point; returns PointOutcome objects in index order."""
	points = list(points)
	workers = max(1, int(workers or 1))
	logmod.log_message('debug', f"CALLCHAIN: ENTER run_points n={len(points)} workers={workers}")
	if workers == 1 or len(points) <= 1:
		outcomes = [_evaluate(func, i, p) for i, p in enumerate(points)]
	else:
		by_index = {}
		with ProcessPoolExecutor(max_workers=min(workers, len(points))) as pool:
			futures = [pool.submit(_evaluate, func, i, p) for i, p in enumerate(points)]
			for future in as_completed(futures):
				outcome = future.result()
				by_index[outcome.index] = outcome
		outcomes = [by_index[i] for i in range(len(points))]
	failed = [o.index for o in outcomes if not o.ok]
	if failed:
		logmod.log_message('warning', f"run_points: {len(failed)} of {len(points)} points failed: indices {failed}")
	logmod.log_message('debug', f"CALLCHAIN: EXIT run_points n={len(points)}")
	return outcomes
