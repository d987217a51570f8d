"""Exception hierarchy shared by the simulation core and the command-line front end."""


class CascadeError(Exception):
	"""Root of all toolkit errors."""


class NumericalError(CascadeError):
	"""A numerical routine failed; the CLI maps this to exit code 2."""


class IntegrationError(NumericalError):
	def __init__(self, message, t_fail_ns=None):
		super().__init__(message if t_fail_ns is None else f"{message} (at t = {t_fail_ns:.6g} ns)")
		self.t_fail_ns = t_fail_ns


class SingularSteadyStateError(NumericalError):
	def __init__(self, message, decoupled=()):
		super().__init__(message)
		self.decoupled = tuple(decoupled)


class CalibrationError(NumericalError):
	pass


class FitError(NumericalError):
	pass


class ConvergenceError(NumericalError):
	pass


class ScenarioValidationError(CascadeError):
	"""Scenario file failed schema or semantic validation; the CLI maps this to exit code 1."""

	def __init__(self, problems):
		self.problems = list(problems)
		lines = [f"{pointer or '/'}: {message}" for pointer, message in self.problems]
		super().__init__('; '.join(lines))
