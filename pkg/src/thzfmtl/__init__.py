"""Beam-split-aware THz channel/DoA estimation and federated multi-task learning."""

from .system import DESK_PROFILE, PAPER_PROFILE, SystemConfig, make_rng, subcarrier_frequency

__version__ = "0.1.0"
