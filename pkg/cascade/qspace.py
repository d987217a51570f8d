"""
qspace.py — operator algebra over the composite atom ⊗ cavity_u ⊗ cavity_l Hilbert space.

Basis ordering is atom-major, then upper-cavity photon number, then lower-cavity photon number:
	index = level * (n_max_u+1) * (n_max_l+1) + n_u * (n_max_l+1) + n_l
Everything is a dense complex matrix. For n_max <= 2 the space has 36 states (4 · 3 · 3) and the
vectorized Liouvillian is 1296 × 1296; past n_max ≈ 5 (576 states) dense storage of the Liouvillian
stops being reasonable and the steady solver would need a sparse rewrite.

Operators, states and layouts are immutable after construction (their arrays are flagged read-only),
so they can be shared freely between sweep workers.
"""

from dataclasses import dataclass
import io

import numpy as np

from utils import logging as logmod


ATOMIC_LEVELS = ('g0', 'g', 'i', 'e')
UPPER_CAVITY = 'upper_cavity'
LOWER_CAVITY = 'lower_cavity'
_SLOTS = (UPPER_CAVITY, LOWER_CAVITY)


def _frozen(array):
	array = np.array(array, dtype=complex)
	array.setflags(write=False)
	return array


# ============================
# Layout
# ============================
@dataclass(frozen=True)
class SpaceLayout:
	n_max_u: int
	n_max_l: int
	atomic_levels: tuple = ATOMIC_LEVELS

	def __post_init__(self):
		if int(self.n_max_u) < 1 or int(self.n_max_l) < 1:
			raise ValueError(f"Fock cutoffs must be >= 1, got n_max_u={self.n_max_u} n_max_l={self.n_max_l}")
		if len(set(self.atomic_levels)) != len(self.atomic_levels):
			raise ValueError(f"Atomic level labels must be unique: {self.atomic_levels}")

	@property
	def dim_u(self):
		return self.n_max_u + 1

	@property
	def dim_l(self):
		return self.n_max_l + 1

	@property
	def dim_atom(self):
		return len(self.atomic_levels)

	@property
	def total_dim(self):
		return self.dim_atom * self.dim_u * self.dim_l

	def level_index(self, label):
		try:
			return self.atomic_levels.index(label)
		except ValueError:
			raise ValueError(f"Unknown atomic level '{label}'; expected one of {self.atomic_levels}") from None

	def slot_dim(self, slot):
		if slot == UPPER_CAVITY:
			return self.dim_u
		if slot == LOWER_CAVITY:
			return self.dim_l
		raise ValueError(f"Unknown cavity slot '{slot}'; expected one of {_SLOTS}")

	def encode(self, level, n_u, n_l):
		if not (0 <= n_u <= self.n_max_u and 0 <= n_l <= self.n_max_l):
			raise ValueError(f"Photon numbers ({n_u}, {n_l}) outside cutoffs ({self.n_max_u}, {self.n_max_l})")
		return (self.level_index(level) * self.dim_u + n_u) * self.dim_l + n_l

	def decode(self, index):
		if not 0 <= index < self.total_dim:
			raise ValueError(f"Basis index {index} outside [0, {self.total_dim})")
		rest, n_l = divmod(index, self.dim_l)
		level, n_u = divmod(rest, self.dim_u)
		return self.atomic_levels[level], n_u, n_l

	def label(self, index):
		level, n_u, n_l = self.decode(index)
		return f"|{level},{n_u}_u,{n_l}_l>"

	def basis_state(self, level, n_u=0, n_l=0):
		amplitudes = np.zeros(self.total_dim, dtype=complex)
		amplitudes[self.encode(level, n_u, n_l)] = 1.0
		return StateVector(self, amplitudes)


# ============================
# Operators and states
# ============================
@dataclass(frozen=True, eq=False)
class SingleModeOperator:
	"""Operator on one truncated Fock space, before embedding."""
	n_max: int
	matrix: np.ndarray

	def __post_init__(self):
		object.__setattr__(self, 'matrix', _frozen(self.matrix))
		if self.matrix.shape != (self.n_max + 1, self.n_max + 1):
			raise ValueError(f"Single-mode matrix shape {self.matrix.shape} does not match cutoff {self.n_max}")

	@classmethod
	def identity(cls, n_max):
		return cls(n_max, np.eye(n_max + 1))

	def dagger(self):
		return SingleModeOperator(self.n_max, self.matrix.conj().T)

	def __matmul__(self, other):
		return SingleModeOperator(self.n_max, self.matrix @ other.matrix)


@dataclass(frozen=True, eq=False)
class Operator:
	layout: SpaceLayout
	matrix: np.ndarray

	def __post_init__(self):
		object.__setattr__(self, 'matrix', _frozen(self.matrix))
		dim = self.layout.total_dim
		if self.matrix.shape != (dim, dim):
			raise ValueError(f"Operator matrix shape {self.matrix.shape} does not match layout dimension {dim}")

	@classmethod
	def identity(cls, layout):
		return cls(layout, np.eye(layout.total_dim))

	@classmethod
	def zero(cls, layout):
		return cls(layout, np.zeros((layout.total_dim, layout.total_dim)))

	def _check(self, other):
		if other.layout != self.layout:
			raise ValueError(f"Layout mismatch: {self.layout} vs {other.layout}")

	def dagger(self):
		return Operator(self.layout, self.matrix.conj().T)

	def is_hermitian(self, atol=1e-12):
		return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= atol)

	def norm(self):
		return float(np.linalg.norm(self.matrix, 2))

	def __add__(self, other):
		self._check(other)
		return Operator(self.layout, self.matrix + other.matrix)

	def __sub__(self, other):
		self._check(other)
		return Operator(self.layout, self.matrix - other.matrix)

	def __neg__(self):
		return Operator(self.layout, -self.matrix)

	def __mul__(self, scalar):
		return Operator(self.layout, self.matrix * scalar)

	__rmul__ = __mul__

	def __matmul__(self, other):
		if isinstance(other, StateVector):
			self._check(other)
			return StateVector(self.layout, self.matrix @ other.amplitudes)
		self._check(other)
		return Operator(self.layout, self.matrix @ other.matrix)

	def dump(self, stream=None):
		"""Plain-text dump, one row per line, 're,im' pairs separated by spaces. No stability guarantee."""
		out = stream if stream is not None else io.StringIO()
		out.write(f"# layout n_max_u={self.layout.n_max_u} n_max_l={self.layout.n_max_l} levels={','.join(self.layout.atomic_levels)}\n")
		for row in self.matrix:
			out.write(' '.join(f"{z.real:.9e},{z.imag:.9e}" for z in row) + '\n')
		if stream is None:
			return out.getvalue()
		return None


@dataclass(frozen=True, eq=False)
class StateVector:
	layout: SpaceLayout
	amplitudes: np.ndarray

	def __post_init__(self):
		object.__setattr__(self, 'amplitudes', _frozen(self.amplitudes))
		if self.amplitudes.shape != (self.layout.total_dim,):
			raise ValueError(f"State length {self.amplitudes.shape} does not match layout dimension {self.layout.total_dim}")

	def norm(self):
		return float(np.linalg.norm(self.amplitudes))

	def normalized(self):
		norm = self.norm()
		if norm == 0.0:
			raise ValueError("Cannot normalize the zero vector")
		return StateVector(self.layout, self.amplitudes / norm)

	def amplitude(self, level, n_u=0, n_l=0):
		return complex(self.amplitudes[self.layout.encode(level, n_u, n_l)])

	def overlap(self, other):
		return complex(np.vdot(self.amplitudes, other.amplitudes))

	def projector(self):
		return DensityMatrix(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
	layout: SpaceLayout
	matrix: np.ndarray

	def __post_init__(self):
		object.__setattr__(self, 'matrix', _frozen(self.matrix))
		dim = self.layout.total_dim
		if self.matrix.shape != (dim, dim):
			raise ValueError(f"Density matrix shape {self.matrix.shape} does not match layout dimension {dim}")

	@classmethod
	def pure(cls, layout, level, n_u=0, n_l=0):
		return layout.basis_state(level, n_u, n_l).projector()

	def trace(self):
		return complex(np.trace(self.matrix))

	def hermiticity_error(self):
		return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

	def min_eigenvalue(self):
		hermitian = 0.5 * (self.matrix + self.matrix.conj().T)
		return float(np.linalg.eigvalsh(hermitian)[0])

	def check_physical(self, hermitian_tol=1e-10, trace_tol=1e-6, eig_tol=1e-8):
		"""Return a list of violated invariants (empty when the state is physical)."""
		problems = []
		if self.hermiticity_error() > hermitian_tol:
			problems.append(f"not Hermitian (max |rho - rho^dagger| = {self.hermiticity_error():.3e})")
		if abs(self.trace() - 1.0) > trace_tol:
			problems.append(f"trace {self.trace():.12g} differs from 1")
		if self.min_eigenvalue() < -eig_tol:
			problems.append(f"negative eigenvalue {self.min_eigenvalue():.3e}")
		return problems


# ============================
# Constructors
# ============================
def annihilation(n_max):
	"""Single-mode ladder operator with <n-1|a|n> = sqrt(n)."""
	if int(n_max) < 1:
		raise ValueError(f"Fock cutoff must be >= 1 for photon dynamics, got {n_max}")
	return SingleModeOperator(n_max, np.diag(np.sqrt(np.arange(1, n_max + 1)), k=1))


def transition(layout, to_level, from_level):
	"""Atomic transition |to><from| on the atom factor, identity on both cavity modes (σ_gi = transition(layout, 'g', 'i'))."""
	to_index = layout.level_index(to_level)
	from_index = layout.level_index(from_level)
	if to_index == from_index:
		raise ValueError(f"Transition levels must differ, got '{to_level}' twice; use level_projector for populations")
	atom = np.zeros((layout.dim_atom, layout.dim_atom))
	atom[to_index, from_index] = 1.0
	return Operator(layout, np.kron(atom, np.eye(layout.dim_u * layout.dim_l)))


def level_projector(layout, level):
	index = layout.level_index(level)
	atom = np.zeros((layout.dim_atom, layout.dim_atom))
	atom[index, index] = 1.0
	return Operator(layout, np.kron(atom, np.eye(layout.dim_u * layout.dim_l)))


def embed(single_mode_op, slot, layout):
	"""Lift a single-mode operator onto one cavity slot, identity on the atom and the other mode."""
	expected = layout.slot_dim(slot)
	if single_mode_op.matrix.shape[0] != expected:
		raise ValueError(f"Single-mode dimension {single_mode_op.matrix.shape[0]} does not match {slot} dimension {expected}")
	atom = np.eye(layout.dim_atom)
	if slot == UPPER_CAVITY:
		full = np.kron(atom, np.kron(single_mode_op.matrix, np.eye(layout.dim_l)))
	else:
		full = np.kron(atom, np.kron(np.eye(layout.dim_u), single_mode_op.matrix))
	return Operator(layout, full)


def number_operator(layout, slot):
	a = annihilation(layout.slot_dim(slot) - 1)
	return embed(a.dagger() @ a, slot, layout)


def commutator(a, b):
	return a @ b - b @ a


def expectation(rho, obs):
	"""trace(rho · obs). For Hermitian observables the real part is the value; the imaginary part is diagnostic only."""
	if rho.layout != obs.layout:
		raise ValueError(f"Layout mismatch between state {rho.layout} and observable {obs.layout}")
	# trace(rho @ obs) without forming the product
	value = complex(np.sum(rho.matrix * obs.matrix.T))
	if abs(value.imag) > 1e-10 and obs.is_hermitian():
		logmod.log_message('debug', f"expectation: imaginary part {value.imag:.3e} on a Hermitian observable")
	return value
