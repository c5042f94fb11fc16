"""Exact diagonalization and the scarred-eigenstate ladder.

The spectrum of the constrained flip Hamiltonian hosts N special
eigenstates forming a near-uniform energy ladder: anomalously low
half-chain entanglement, anomalously high overlap with the alternating
(Néel) configuration. This module finds them, fixes their phases so the
Néel overlaps are real non-negative, and provides the scar-subspace weight
and the per-scar amplitude/phase decomposition of arbitrary states.

Selection runs in two stages per ladder rung k (k = -N/2..N/2, k != 0,
rung positions anchored to the measured band edges): shortlist the
eigenstates in the rung's energy window whose Néel overlap stands out
against the window background, then keep the shortlisted state with the
lowest half-chain entropy. Anything ambiguous raises instead of guessing.
"""

from dataclasses import dataclass

import numpy as np

from .basis import Basis, bipartition, neel_config
from .errors import AmbiguousScarError, CapacityError
from .evolution import DENSE_DIM_MAX, StateVector, entanglement_entropy

OVERLAP_FACTOR = 10.0
ENTROPY_TIE = 1e-6
NULL_AMPLITUDE = 1e-12


@dataclass(eq=False)
class EigenSystem:
    """Full spectrum of a real symmetric Hamiltonian, energies ascending."""

    basis: Basis
    energies: np.ndarray
    states: np.ndarray  # columns are orthonormal eigenvectors


@dataclass(eq=False)
class ScarSet:
    """The N scarred eigenpairs with Néel-fixed phases.

    ``rungs[s]`` is the ladder index of scar ``s`` (negative below the band
    center); ``states`` holds one column per scar, ordered by energy.
    """

    basis: Basis
    indices: np.ndarray
    rungs: np.ndarray
    energies: np.ndarray
    states: np.ndarray
    neel_overlaps: np.ndarray
    entropies: np.ndarray

    @property
    def count(self):
        return len(self.indices)


@dataclass(eq=False)
class ScarDecomposition:
    """Polar coefficients of a state over the scar subspace."""

    weight: float
    amplitudes: np.ndarray
    phases: np.ndarray
    phase_defined: np.ndarray


def diagonalize(ham, dim_max=DENSE_DIM_MAX):
    """Dense full diagonalization of ``ham`` (capacity-guarded)."""
    if ham.dim > dim_max:
        raise CapacityError(
            f"diagonalization guard: dimension {ham.dim} exceeds limit {dim_max}"
        )
    energies, states = np.linalg.eigh(ham.matrix.toarray())
    return EigenSystem(basis=ham.basis, energies=energies, states=states)


def identify_scars(
    eig,
    basis,
    neel,
    overlap_factor=OVERLAP_FACTOR,
    entropy_tie=ENTROPY_TIE,
):
    """Select the N scarred eigenstates of an even-N chain.

    Parameters
    ----------
    eig : EigenSystem
        Full spectrum of the chain Hamiltonian.
    basis : Basis
        The underlying basis (even number of sites).
    neel : StateVector
        The alternating reference state used for overlaps and phase fixing.
    overlap_factor : float
        A window state is shortlisted when its squared Néel overlap exceeds
        this factor times the mean squared overlap of the other window
        states.
    entropy_tie : float
        Two shortlisted candidates closer than this in half-chain entropy
        make the window ambiguous.

    Raises
    ------
    AmbiguousScarError
        Empty window, empty shortlist, entropy tie, or one eigenstate
        claimed by two windows.
    """
    n = basis.size
    if n % 2:
        raise ValueError(f"scar ladder selection needs an even chain, got n={n}")
    energies = eig.energies
    overlaps_sq = np.abs(eig.states[basis.rank(neel_config(n)), :]) ** 2

    # rung positions anchored to the measured band edges: the extreme
    # eigenstates belong to the ladder, and the mean rung distance
    # (E_max - E_min) / N tracks the edge compression of the band
    spacing = (energies[-1] - energies[0]) / n
    half_width = 0.5 * spacing
    bmap = bipartition(basis, n // 2)

    chosen = []
    chosen_rungs = []
    entropies = []
    for rung in [k for k in range(-(n // 2), n // 2 + 1) if k != 0]:
        center = rung * spacing
        window = np.nonzero(np.abs(energies - center) <= half_width)[0]
        if len(window) == 0:
            raise AmbiguousScarError(
                f"no eigenstates in the ladder window at rung {rung} "
                f"(center {center:.4f}, half-width {half_width:.4f})"
            )
        win_ov = overlaps_sq[window]
        if len(window) == 1:
            shortlist = window
        else:
            loo_mean = (win_ov.sum() - win_ov) / (len(window) - 1)
            shortlist = window[win_ov > overlap_factor * loo_mean]
        if len(shortlist) == 0:
            top = window[np.argsort(-win_ov)[:5]]
            raise AmbiguousScarError(
                f"no eigenstate stands out against the window background at "
                f"rung {rung}",
                candidates=[(int(i), float(energies[i]), float(overlaps_sq[i])) for i in top],
            )
        cand_entropy = np.array(
            [
                entanglement_entropy(StateVector(basis, eig.states[:, i].astype(np.complex128)), bmap)
                for i in shortlist
            ]
        )
        order = np.argsort(cand_entropy)
        if len(shortlist) > 1 and cand_entropy[order[1]] - cand_entropy[order[0]] < entropy_tie:
            raise AmbiguousScarError(
                f"two shortlisted candidates at rung {rung} have half-chain "
                f"entropies within {entropy_tie}",
                candidates=[
                    (int(shortlist[j]), float(energies[shortlist[j]]), float(cand_entropy[j]))
                    for j in order[:2]
                ],
            )
        pick = int(shortlist[order[0]])
        chosen.append(pick)
        chosen_rungs.append(rung)
        entropies.append(float(cand_entropy[order[0]]))

    if len(set(chosen)) != len(chosen):
        raise AmbiguousScarError("one eigenstate was claimed by two ladder windows")

    indices = np.array(chosen)
    states = eig.states[:, indices].astype(np.complex128)
    neel_amp = states[basis.rank(neel_config(n)), :]
    phase = np.where(np.abs(neel_amp) > NULL_AMPLITUDE, neel_amp, 1.0)
    states = states * (np.abs(phase) / phase)[np.newaxis, :]
    return ScarSet(
        basis=basis,
        indices=indices,
        rungs=np.array(chosen_rungs),
        energies=energies[indices],
        states=states,
        neel_overlaps=np.abs(neel_amp) ** 2,
        entropies=np.array(entropies),
    )


def ladder_spacing(scars, central_fraction=0.5):
    """Mean per-rung energy spacing over the central part of the ladder.

    Consecutive energy gaps are normalized by their rung distance (the gap
    across the unoccupied central rung counts as two rungs), and the outer
    quarter of gaps on each side is dropped, keeping the central
    ``central_fraction`` of the ladder where the spacing is cleanest.
    """
    order = np.argsort(scars.rungs)
    rungs = scars.rungs[order]
    energies = scars.energies[order]
    gaps = np.diff(energies) / np.diff(rungs)
    drop = int(round(len(gaps) * (1.0 - central_fraction) / 2))
    central = gaps[drop : len(gaps) - drop]
    return float(central.mean())


def scar_overlaps(psi, scars):
    """Complex coefficients <psi_s|psi> under the fixed phase convention."""
    if not psi.basis.same_space(scars.basis):
        raise ValueError("state and scar set live on different bases")
    return scars.states.conj().T @ psi.amps


def scar_weight(psi, scars):
    """Total squared overlap of ``psi`` with the scar subspace."""
    coeffs = scar_overlaps(psi, scars)
    return float(np.sum(np.abs(coeffs) ** 2))


def scar_decomposition(psi, scars):
    """Amplitudes and phases of ``psi`` over the scar ladder.

    Phases are reported in (-pi, pi]; a scar whose amplitude falls below
    NULL_AMPLITUDE gets an undefined (NaN) phase and a cleared
    ``phase_defined`` flag.
    """
    coeffs = scar_overlaps(psi, scars)
    amplitudes = np.abs(coeffs)
    defined = amplitudes > NULL_AMPLITUDE
    phases = np.where(defined, np.angle(coeffs), np.nan)
    return ScarDecomposition(
        weight=float(np.sum(amplitudes**2)),
        amplitudes=amplitudes,
        phases=phases,
        phase_defined=defined,
    )
