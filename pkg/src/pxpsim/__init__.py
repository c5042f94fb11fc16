"""Desk-scale simulation of the monitored PXP chain.

Subpackages cover constrained-basis construction, the sparse flip
Hamiltonian, exact and Krylov time evolution, projective measurements,
scar-subspace analysis, the composite measurement protocols, and the
finite-size-scaling collapse of steady-state entanglement.
"""

__version__ = "0.1.0"
