"""cascade-qed simulation core: cascaded two-photon emission from a ladder atom coupled to two cavities."""

from utils import config

__version__ = config.get('app', 'version')
