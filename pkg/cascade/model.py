"""
model.py — Hamiltonian, drive terms and dissipation channels of the ladder emitter in two cavities,
plus the closed-form analytics (dark state, eigenenergies, cooperativity, Purcell lifetimes).

Units:
- Inputs are linear frequencies in MHz (the "× 2π MHz" convention) and times in ns.
- Operators are returned in angular frequency, rad/µs: every rate is multiplied by 2π internally.
- Closed-form lifetimes come back in ns.

Positive cavity detuning means the cavity sits above the atomic transition. The drive detuning enters
exactly as -Δ_D (σ_ee + a_u† a_u) for both drive configurations.
"""

from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
import math

import numpy as np

from cascade.qspace import (
	LOWER_CAVITY, UPPER_CAVITY, DensityMatrix, Operator, SpaceLayout, StateVector,
	annihilation, embed, level_projector, number_operator, transition,
)
from utils import config


_DEFAULT_N_MAX = config.get('cascade.qspace', 'default_n_max', int)

TWO_PI = 2.0 * math.pi

DRIVE_PULSED = 'pulsed_g0_e'
DRIVE_CW = 'cw_g_e'
DRIVE_NONE = 'none'
DRIVE_MODES = (DRIVE_PULSED, DRIVE_CW, DRIVE_NONE)

CHANNEL_LABELS = ('cavity_u', 'cavity_l', 'dipole_u', 'dipole_l')


def angular(mhz):
	"""MHz (linear) -> rad/µs."""
	return TWO_PI * mhz


# ============================
# Parameter types
# ============================
@dataclass(frozen=True)
class PulseShape:
	center_ns: float
	fwhm_ns: float
	kind: str = 'gaussian'

	def __post_init__(self):
		if self.kind != 'gaussian':
			raise ValueError(f"Unsupported pulse kind '{self.kind}'")
		if not self.fwhm_ns > 0:
			raise ValueError(f"Pulse FWHM must be > 0 ns, got {self.fwhm_ns}")

	def envelope(self, t_ns):
		"""Unit-peak Gaussian amplitude envelope; FWHM refers to the amplitude."""
		x = (np.asarray(t_ns, dtype=float) - self.center_ns) / self.fwhm_ns
		return np.exp(-4.0 * math.log(2.0) * x * x)

	def unit_area_ns(self):
		"""∫ envelope dt in ns."""
		return self.fwhm_ns * math.sqrt(math.pi / (4.0 * math.log(2.0)))

	def start_ns(self, fwhm_units):
		return self.center_ns - fwhm_units * self.fwhm_ns

	def end_ns(self, fwhm_units):
		return self.center_ns + fwhm_units * self.fwhm_ns


@dataclass(frozen=True)
class DriveSpec:
	mode: str = DRIVE_NONE
	omega_D: float = 0.0
	delta_D: float = 0.0
	pulse: PulseShape = None

	def __post_init__(self):
		if self.mode not in DRIVE_MODES:
			raise ValueError(f"Unknown drive mode '{self.mode}'; expected one of {DRIVE_MODES}")
		if self.mode == DRIVE_PULSED and self.pulse is None:
			raise ValueError("Pulsed drive requires a pulse shape")
		if self.mode != DRIVE_PULSED and self.pulse is not None:
			raise ValueError(f"Drive mode '{self.mode}' does not take a pulse shape")
		if self.omega_D is not None and self.omega_D < 0:
			raise ValueError(f"Drive Rabi frequency must be >= 0, got {self.omega_D}")
		if self.omega_D is None and self.mode != DRIVE_PULSED:
			raise ValueError("Only a pulsed drive may leave omega_D unset for calibration")

	@property
	def needs_calibration(self):
		return self.mode == DRIVE_PULSED and self.omega_D is None

	def omega_at(self, t_ns):
		"""Drive Rabi frequency (MHz) at time t_ns."""
		if self.mode == DRIVE_NONE:
			return np.zeros_like(np.asarray(t_ns, dtype=float))
		if self.needs_calibration:
			raise ValueError("Pulsed drive amplitude is not calibrated yet")
		if self.mode == DRIVE_CW:
			return np.full_like(np.asarray(t_ns, dtype=float), self.omega_D)
		return self.omega_D * self.pulse.envelope(t_ns)

	def pulse_area(self):
		"""Rabi area ∫ 2·2πΩ_D dt in rad; π inverts an isolated two-level transition."""
		if self.mode != DRIVE_PULSED or self.needs_calibration:
			raise ValueError("Pulse area is defined for a calibrated pulsed drive only")
		return 2.0 * angular(self.omega_D) * self.pulse.unit_area_ns() * 1e-3


@dataclass(frozen=True)
class CollectionParams:
	eta_oc_u: float = 1.0
	eta_oc_l: float = 1.0
	eta_mm_u: float = 1.0
	eta_mm_l: float = 1.0

	def __post_init__(self):
		for name, value in asdict(self).items():
			if not 0.0 <= value <= 1.0:
				raise ValueError(f"Collection efficiency {name}={value} outside [0, 1]")

	def channel(self, cavity):
		if cavity == 'u':
			return self.eta_oc_u, self.eta_mm_u
		if cavity == 'l':
			return self.eta_oc_l, self.eta_mm_l
		raise ValueError(f"Unknown cavity channel '{cavity}'; expected 'u' or 'l'")


@dataclass(frozen=True)
class SystemParams:
	g_u: float
	g_l: float
	kappa_u: float
	kappa_l: float
	gamma_u: float
	gamma_l: float
	delta_u: float = 0.0
	delta_l: float = 0.0
	drive: DriveSpec = field(default_factory=DriveSpec)
	n_max_u: int = _DEFAULT_N_MAX
	n_max_l: int = _DEFAULT_N_MAX
	collection: CollectionParams = field(default_factory=CollectionParams)

	def __post_init__(self):
		for name in ('g_u', 'g_l', 'kappa_u', 'kappa_l', 'gamma_u', 'gamma_l'):
			value = getattr(self, name)
			if not (value >= 0 and math.isfinite(value)):
				raise ValueError(f"Rate {name}={value} must be finite and >= 0")
		for name in ('delta_u', 'delta_l'):
			if not math.isfinite(getattr(self, name)):
				raise ValueError(f"Detuning {name} must be finite")

	@property
	def layout(self):
		return SpaceLayout(self.n_max_u, self.n_max_l)

	def replace(self, **changes):
		return replace(self, **changes)

	def with_drive(self, **changes):
		return replace(self, drive=replace(self.drive, **changes))

	def to_dict(self):
		return asdict(self)

	@classmethod
	def from_dict(cls, data):
		data = dict(data)
		drive = dict(data.pop('drive', {}) or {})
		pulse = drive.pop('pulse', None)
		if pulse is not None:
			drive['pulse'] = PulseShape(**pulse)
		collection = data.pop('collection', None) or {}
		return cls(drive=DriveSpec(**drive), collection=CollectionParams(**collection), **data)


@dataclass(frozen=True, eq=False)
class CollapseChannel:
	"""Lindblad channel; the operator already carries √(2·rate)."""
	operator: Operator
	label: str
	rate: float


# ============================
# Operator bundle
# ============================
@dataclass(frozen=True, eq=False)
class SystemOperators:
	layout: SpaceLayout
	a_u: Operator
	a_l: Operator
	n_u: Operator
	n_l: Operator
	sigma_gi: Operator
	sigma_ie: Operator
	sigma_ge: Operator
	sigma_g0e: Operator
	P_g0: Operator
	P_g: Operator
	P_i: Operator
	P_e: Operator

	def populations(self):
		return {'P_g0': self.P_g0, 'P_g': self.P_g, 'P_i': self.P_i, 'P_e': self.P_e}


@lru_cache(maxsize=16)
def system_operators(layout):
	return SystemOperators(
		layout=layout,
		a_u=embed(annihilation(layout.n_max_u), UPPER_CAVITY, layout),
		a_l=embed(annihilation(layout.n_max_l), LOWER_CAVITY, layout),
		n_u=number_operator(layout, UPPER_CAVITY),
		n_l=number_operator(layout, LOWER_CAVITY),
		sigma_gi=transition(layout, 'g', 'i'),
		sigma_ie=transition(layout, 'i', 'e'),
		sigma_ge=transition(layout, 'g', 'e'),
		sigma_g0e=transition(layout, 'g0', 'e'),
		P_g0=level_projector(layout, 'g0'),
		P_g=level_projector(layout, 'g'),
		P_i=level_projector(layout, 'i'),
		P_e=level_projector(layout, 'e'),
	)


# ============================
# Hamiltonian, drive, dissipation
# ============================
def build_static_hamiltonian(params):
	"""g_l a_l†σ_gi + g_u a_u†σ_ie + H.c. + Δ_l a_l†a_l + Δ_u a_u†a_u, in rad/µs."""
	ops = system_operators(params.layout)
	coupling = params.g_l * (ops.a_l.dagger() @ ops.sigma_gi) + params.g_u * (ops.a_u.dagger() @ ops.sigma_ie)
	hamiltonian = coupling + coupling.dagger() + params.delta_l * ops.n_l + params.delta_u * ops.n_u
	return TWO_PI * hamiltonian


def drive_coupling_operator(params):
	"""σ + σ† for the configured drive transition (unit amplitude, no 2π)."""
	ops = system_operators(params.layout)
	mode = params.drive.mode
	if mode == DRIVE_PULSED:
		sigma = ops.sigma_g0e
	elif mode == DRIVE_CW:
		sigma = ops.sigma_ge
	else:
		raise ValueError("Drive mode 'none' has no drive term")
	return sigma + sigma.dagger()


def drive_detuning_operator(params):
	"""-2πΔ_D (σ_ee + a_u†a_u), time independent."""
	ops = system_operators(params.layout)
	return (-TWO_PI * params.drive.delta_D) * (ops.P_e + ops.n_u)


def build_drive_term(params, t_ns):
	"""V(t) = 2π[Ω_D(t)(σ + σ†) - Δ_D(σ_ee + a_u†a_u)] in rad/µs."""
	if params.drive.mode == DRIVE_NONE:
		raise ValueError("build_drive_term requires a drive mode other than 'none'")
	omega = float(params.drive.omega_at(t_ns))
	return (TWO_PI * omega) * drive_coupling_operator(params) + drive_detuning_operator(params)


def collapse_channels(params):
	"""√(2κ_u)a_u, √(2κ_l)a_l, √(2γ_u)σ_ie, √(2γ_l)σ_gi in rad/µs; zero-rate channels are omitted."""
	ops = system_operators(params.layout)
	candidates = (
		('cavity_u', params.kappa_u, ops.a_u),
		('cavity_l', params.kappa_l, ops.a_l),
		('dipole_u', params.gamma_u, ops.sigma_ie),
		('dipole_l', params.gamma_l, ops.sigma_gi),
	)
	return [
		CollapseChannel(math.sqrt(2.0 * angular(rate)) * op, label, rate)
		for label, rate, op in candidates if rate > 0
	]


# ============================
# Closed-form analytics
# ============================
def dark_state(params):
	"""(−g_l|e,0,0> + g_u|g,1,1>)/√(g_l²+g_u²); no amplitude on level i."""
	norm = math.hypot(params.g_u, params.g_l)
	if norm == 0.0:
		raise ValueError("Dark state undefined when both couplings are zero")
	layout = params.layout
	amplitudes = np.zeros(layout.total_dim, dtype=complex)
	amplitudes[layout.encode('e', 0, 0)] = -params.g_l / norm
	amplitudes[layout.encode('g', 1, 1)] = params.g_u / norm
	return StateVector(layout, amplitudes)


def chain_eigenenergies(params, delta):
	"""
	(E0, E1, E2) in MHz of the single-excitation chain {|e,0,0>, |i,1_u,0>, |g,1_u,1_l>}
	with Δ_u = +delta, Δ_l = −delta, referenced to |e,0,0>.
	"""
	root = math.sqrt(params.g_u ** 2 + params.g_l ** 2 + (delta / 2.0) ** 2)
	return 0.0, delta / 2.0 + root, delta / 2.0 - root


def chain_block(params):
	"""Single-excitation block of the static Hamiltonian (MHz) in the order e00, i10, g11."""
	layout = params.layout
	indices = [layout.encode('e', 0, 0), layout.encode('i', 1, 0), layout.encode('g', 1, 1)]
	matrix = build_static_hamiltonian(params).matrix
	return matrix[np.ix_(indices, indices)] / TWO_PI


def cooperativity(g, kappa, gamma):
	"""C = g²/(2κγ)."""
	if kappa <= 0 or gamma <= 0:
		raise ValueError(f"Cooperativity needs kappa > 0 and gamma > 0, got kappa={kappa} gamma={gamma}")
	return g * g / (2.0 * kappa * gamma)


def purcell_lifetime(tau_free, C):
	if tau_free <= 0 or C < 0:
		raise ValueError(f"Purcell lifetime needs tau_free > 0 and C >= 0, got tau_free={tau_free} C={C}")
	return tau_free / (2.0 * C + 1.0)


def free_space_lifetime(gamma):
	"""Population lifetime (ns) of a transition with dipole decay rate gamma (MHz)."""
	if gamma <= 0:
		raise ValueError(f"gamma must be > 0, got {gamma}")
	return 1e3 / (2.0 * angular(gamma))


def cavity_photon_lifetime(kappa):
	"""Intracavity photon lifetime (ns) for field decay rate kappa (MHz)."""
	if kappa <= 0:
		raise ValueError(f"kappa must be > 0, got {kappa}")
	return 1e3 / (2.0 * angular(kappa))


def single_excitation_lifetime(g, kappa, gamma):
	"""
	Population lifetime (ns) of the slower eigenmode of one excitation shared by a level (dipole rate gamma) and a
	cavity (field rate kappa) at coupling g, all in MHz. Reduces to purcell_lifetime when kappa >> g >> gamma.
	"""
	if kappa < 0 or gamma < 0 or kappa + gamma <= 0:
		raise ValueError(f"single_excitation_lifetime needs kappa, gamma >= 0 with a positive sum, got kappa={kappa} gamma={gamma}")
	discriminant = (0.5 * (kappa - gamma)) ** 2 - g * g
	rate = 0.5 * (kappa + gamma) - (math.sqrt(discriminant) if discriminant > 0 else 0.0)
	if rate <= 0:
		raise ValueError(f"single_excitation_lifetime: a lossless eigenmode remains at g={g} kappa={kappa} gamma={gamma}")
	return 1e3 / (2.0 * angular(rate))


def cavity_emission_efficiency(C):
	"""Fraction of decays that go into the cavity mode, 2C/(2C+1)."""
	if C < 0:
		raise ValueError(f"Cooperativity must be >= 0, got {C}")
	return 2.0 * C / (2.0 * C + 1.0)


def ground_state(params, level='g0'):
	return DensityMatrix.pure(params.layout, level)
