import pytest

from cascade.model import CollectionParams, DriveSpec, PulseShape, SystemParams
from utils import dbops


@pytest.fixture(autouse=True)
def isolated_ledger(tmp_path):
	"""Every test gets its own run ledger so CLI runs never touch db/runs.json."""
	dbops.init_module(str(tmp_path / 'runs.json'))
	yield


@pytest.fixture
def experimental_params():
	"""Experimental couplings and linewidths with a 7 ns calibrated pulse and the measured collection chain."""
	return SystemParams(
		g_u=4.0, g_l=21.9, kappa_u=30.0, kappa_l=60.0, gamma_u=0.33, gamma_l=3.0,
		drive=DriveSpec(mode='pulsed_g0_e', omega_D=None, pulse=PulseShape(center_ns=20.0, fwhm_ns=7.0)),
		collection=CollectionParams(eta_oc_u=0.79, eta_mm_u=0.94, eta_oc_l=0.85, eta_mm_l=0.81),
	)


@pytest.fixture
def weak_drive_params():
	"""Narrow-line regime under a weak continuous g-e drive."""
	return SystemParams(
		g_u=10.0, g_l=1.0, kappa_u=0.01, kappa_l=0.1, gamma_u=1.0, gamma_l=2.0,
		drive=DriveSpec(mode='cw_g_e', omega_D=0.1),
	)
