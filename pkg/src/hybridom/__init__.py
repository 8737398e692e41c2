"""Simulator for a fully coupled atom-cavity-mechanics system.

Modules
-------
core      Hilbert-space layout, operators and states.
model     Hamiltonian, polariton and dressed-state spectrum.
lindblad  Liouvillian, steady states, propagation and regression correlators.
analysis  Observables, g2(tau), spectra, joint density of states and sweeps.
config    Strict TOML experiment configurations.
cli       The ``hybridom`` command.
"""

__version__ = "0.1.0"

from .core import Ops, QOperator, QState, SpaceLayout  # noqa: E402
from .model import SystemParams  # noqa: E402

__all__ = ["Ops", "QOperator", "QState", "SpaceLayout", "SystemParams", "__version__"]
