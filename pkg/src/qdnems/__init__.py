"""Coherent electron-phonon dynamics of a quantum dot on a suspended plate.

Simulates a single electron in a hard-wall circular quantum dot coupled
through the deformation potential to the quantized flexural modes of a
clamped-free nanomechanical platform at finite temperature: Rabi exchange
between degenerate angular-momentum states, decoherence, clamping-loss
dissipation, and magnetic-field decoupling.
"""

__version__ = "0.1.0"
