"""Simulation of a two-family, two-path polarization authentication protocol.

Alice encodes one bit per code pair by sending a sequence of photons drawn
from family 0 (bit 0) or family 1 (bit 1). Bob identifies the family with
two single-outcome analyzers, checks the remaining designated positions and
echoes a complementary sequence that Alice verifies.
"""

from . import adversary, analysis, codebook, protocol, qstate
from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "adversary", "analysis", "codebook", "protocol", "qstate", "__version__"]
