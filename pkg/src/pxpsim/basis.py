"""Enumeration and indexing of the constrained Hilbert space.

Configurations are plain integers: bit ``j`` set means site ``j`` carries an
excitation (up spin). The kinetic constraint forbids excitations on adjacent
sites, so the space of allowed configurations is the Fibonacci cube for an
open chain and the Lucas cube for a ring. Site indices are 0-based; strings
produced for output put site 0 leftmost.
"""

from dataclasses import dataclass, field

import numpy as np

OBC = "obc"
PBC = "pbc"

_ENUM_CHUNK = 1 << 20


def fibonacci(n):
    """n-th Fibonacci number with F_1 = F_2 = 1."""
    if n < 1:
        raise ValueError(f"fibonacci index must be >= 1, got {n}")
    a, b = 1, 1
    for _ in range(n - 1):
        a, b = b, a + b
    return a


def lucas(n):
    """n-th Lucas number with L_1 = 1, L_2 = 3."""
    if n < 1:
        raise ValueError(f"lucas index must be >= 1, got {n}")
    a, b = 2, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def expected_dimension(n, boundary):
    """Dimension of the constrained space: F_{N+2} for OBC, L_N for PBC."""
    _check_size(n, boundary)
    if boundary == OBC:
        return fibonacci(n + 2)
    return lucas(n)


def _check_size(n, boundary):
    if boundary not in (OBC, PBC):
        raise ValueError(f"boundary must be '{OBC}' or '{PBC}', got {boundary!r}")
    if n < 1:
        raise ValueError(f"need at least one site, got n={n}")
    if boundary == PBC and n < 3:
        raise ValueError(f"periodic chains need n >= 3, got n={n}")


def is_allowed(config, n, boundary):
    """Whether an n-bit configuration respects the adjacency constraint."""
    if config < 0 or config >= (1 << n):
        return False
    if config & (config << 1):
        return False
    if boundary == PBC and (config & 1) and (config >> (n - 1)) & 1:
        return False
    return True


def neel_config(n):
    """Alternating configuration with excitations on even sites (site 0 up)."""
    if n % 2:
        raise ValueError(f"alternating configuration needs even n, got {n}")
    return sum(1 << j for j in range(0, n, 2))


@dataclass(eq=False)
class Basis:
    """Ordered constrained basis for a chain of ``size`` sites.

    ``configs`` is strictly ascending, so the index of a configuration in
    that array is its rank.
    """

    size: int
    boundary: str
    configs: np.ndarray
    _index: dict = field(repr=False)

    @property
    def dim(self):
        return len(self.configs)

    def rank(self, config):
        """Index of ``config`` in the basis; raises for forbidden configurations."""
        idx = self._index.get(int(config))
        if idx is None:
            raise ValueError(
                f"configuration {config:#x} is not in the {self.boundary} basis "
                f"of {self.size} sites"
            )
        return idx

    def site_mask(self, site):
        """Boolean array over the basis: excitation present at ``site``."""
        if not 0 <= site < self.size:
            raise ValueError(f"site {site} out of range for {self.size} sites")
        return ((self.configs >> site) & 1).astype(bool)

    def config_string(self, config):
        """Render a configuration with site 0 leftmost."""
        return "".join("1" if (config >> j) & 1 else "0" for j in range(self.size))

    def same_space(self, other):
        return self.size == other.size and self.boundary == other.boundary


def enumerate_basis(n, boundary=OBC):
    """Enumerate all allowed configurations of ``n`` sites in ascending order.

    Parameters
    ----------
    n : int
        Number of sites (>= 1 for OBC, >= 3 for PBC).
    boundary : str
        ``"obc"`` or ``"pbc"``.

    Returns
    -------
    Basis
    """
    _check_size(n, boundary)
    total = 1 << n
    kept = []
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        cand = np.arange(start, stop, dtype=np.int64)
        ok = (cand & (cand << 1)) == 0
        if boundary == PBC:
            ok &= ~((cand & 1).astype(bool) & ((cand >> (n - 1)) & 1).astype(bool))
        kept.append(cand[ok])
    configs = np.concatenate(kept)
    index = {int(c): i for i, c in enumerate(configs)}
    return Basis(size=n, boundary=boundary, configs=configs, _index=index)


@dataclass(eq=False)
class BipartitionMap:
    """Split of a basis at a bond into two open sub-blocks.

    ``left_index[g]`` and ``right_index[g]`` give, for global basis index
    ``g``, the ranks of the left part (sites ``0..cut-1``) and the right part
    (sites ``cut..N-1``) in the respective open-chain sub-bases.
    """

    cut: int
    left: Basis
    right: Basis
    left_index: np.ndarray
    right_index: np.ndarray

    @property
    def pair_count(self):
        return len(self.left_index)


def bipartition(basis, cut):
    """Build the bipartition map of ``basis`` at bond ``cut``.

    The left block holds sites ``0..cut-1``. Both blocks are open chains
    regardless of the parent boundary; the parent constraint only restricts
    which (left, right) pairs occur.
    """
    if not 1 <= cut <= basis.size - 1:
        raise ValueError(f"cut must lie in [1, {basis.size - 1}], got {cut}")
    left = enumerate_basis(cut, OBC)
    right = enumerate_basis(basis.size - cut, OBC)
    low_mask = (1 << cut) - 1
    left_parts = basis.configs & low_mask
    right_parts = basis.configs >> cut
    left_index = np.searchsorted(left.configs, left_parts)
    right_index = np.searchsorted(right.configs, right_parts)
    return BipartitionMap(
        cut=cut,
        left=left,
        right=right,
        left_index=left_index,
        right_index=right_index,
    )
