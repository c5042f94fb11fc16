"""Sparse kinetically constrained flip Hamiltonian on the reduced basis.

A spin at site ``j`` flips only if every neighbor of ``j`` (one neighbor at
an open end, cyclic neighbors on a ring) carries no excitation. All nonzero
matrix elements equal one, the matrix is real symmetric with zero diagonal,
and it is stored in compressed-row form with sorted column indices so that
matrix-vector products sum in a fixed order.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import OBC, Basis


@dataclass(eq=False)
class SparseHamiltonian:
    basis: Basis
    matrix: sp.csr_matrix

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def row_offsets(self):
        return self.matrix.indptr

    @property
    def col_indices(self):
        return self.matrix.indices

    @property
    def values(self):
        return self.matrix.data


def _neighbors(site, n, boundary):
    if boundary == OBC:
        return [j for j in (site - 1, site + 1) if 0 <= j < n]
    return [(site - 1) % n, (site + 1) % n]


def build_hamiltonian(basis):
    """Assemble the constrained flip operator over ``basis``.

    Returns
    -------
    SparseHamiltonian
        Real symmetric CSR matrix; entry (a, b) is 1 iff the two
        configurations differ by a single flip at a site whose neighbors are
        all unexcited.
    """
    n = basis.size
    configs = basis.configs
    rows, cols = [], []
    for site in range(n):
        nbrs = _neighbors(site, n, basis.boundary)
        free = np.ones(basis.dim, dtype=bool)
        for nb in nbrs:
            free &= ((configs >> nb) & 1) == 0
        flipped = configs[free] ^ (1 << site)
        # the flip of a flippable site never leaves the constrained space
        targets = np.searchsorted(configs, flipped)
        rows.append(np.nonzero(free)[0])
        cols.append(targets)
    row = np.concatenate(rows)
    col = np.concatenate(cols)
    data = np.ones(len(row), dtype=np.float64)
    matrix = sp.csr_matrix((data, (row, col)), shape=(basis.dim, basis.dim))
    matrix.sort_indices()
    return SparseHamiltonian(basis=basis, matrix=matrix)


def apply(ham, amps):
    """Matrix-vector product H @ amps for a raw amplitude array."""
    amps = np.asarray(amps)
    if amps.shape != (ham.dim,):
        raise ValueError(f"amplitude array has shape {amps.shape}, expected ({ham.dim},)")
    return ham.matrix @ amps
