"""Exact simulation of qubus (qubit + coherent-state bus) teleportation circuits.

Modules:
    hybrid_state: branch representation of qubit / coherent-state registers.
    measurement: qubit measurements and homodyne detection.
    protocols: one-bit teleportations, teleported gates, GHZ and repetition encoders.
    fidelity: closed-form, quadrature and Monte Carlo process fidelities.
    fock_oracle: truncated Fock-basis cross-check at small amplitude.
    cli: command-line front end.
"""

from .hybrid_state import HybridState, ProtocolParams
from .fidelity import FidelityReport, process_fidelity_mc
from .protocols import ResourceTally, RunOutcome

__all__ = [
    "FidelityReport",
    "HybridState",
    "ProtocolParams",
    "ResourceTally",
    "RunOutcome",
    "process_fidelity_mc",
]

__version__ = "0.1.0"
