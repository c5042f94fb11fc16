"""State vectors and time evolution on the constrained basis.

Two propagation routes are provided: a dense eigendecomposition (exact, cost
``dim^3`` once, then two dense matvecs per call) and a Lanczos small-subspace
exponential with adaptive substepping (for dimensions where dense
diagonalization is wasteful or impossible). Fidelity and half-chain
entanglement entropy round out the observables used throughout.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import Basis, BipartitionMap, neel_config
from .errors import CapacityError, ConvergenceError

DENSE_DIM_MAX = 20000
SCHMIDT_CUTOFF = 1e-14
KRYLOV_TOL = 1e-10
KRYLOV_M_MAX = 40


@dataclass(eq=False)
class StateVector:
    """Complex amplitudes over a constrained basis; kept unit-norm."""

    basis: Basis
    amps: np.ndarray

    def copy(self):
        return StateVector(self.basis, self.amps.copy())

    def norm(self):
        return float(np.linalg.norm(self.amps))


def _check_shared_basis(a, b):
    if not a.same_space(b):
        raise ValueError(
            f"basis mismatch: {a.size}-site {a.boundary} vs {b.size}-site {b.boundary}"
        )


def basis_state(basis, config):
    """Unit vector on a single configuration."""
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.rank(config)] = 1.0
    return StateVector(basis, amps)


def make_uniform(basis):
    """All sites unexcited."""
    return basis_state(basis, 0)


def make_neel(basis):
    """Alternating initial state with the excitation on site 0; needs even N."""
    return basis_state(basis, neel_config(basis.size))


@dataclass(eq=False)
class DensePropagator:
    """Cached eigendecomposition H = V diag(E) V^T for exact evolution."""

    basis: Basis
    energies: np.ndarray
    vectors: np.ndarray


def dense_propagator(ham, dim_max=DENSE_DIM_MAX):
    """Diagonalize ``ham`` densely; refuses dimensions above ``dim_max``."""
    if ham.dim > dim_max:
        raise CapacityError(
            f"dense route guard: dimension {ham.dim} exceeds limit {dim_max}"
        )
    energies, vectors = np.linalg.eigh(ham.matrix.toarray())
    return DensePropagator(basis=ham.basis, energies=energies, vectors=vectors)


def real_matmul(mat, z):
    """``mat @ z`` for real ``mat`` and complex ``z`` without upcasting ``mat``."""
    return mat @ np.ascontiguousarray(z.real) + 1j * (mat @ np.ascontiguousarray(z.imag))


def evolve_dense(prop, psi, t):
    """Exact evolution by time ``t`` via the cached eigendecomposition."""
    _check_shared_basis(prop.basis, psi.basis)
    if t == 0:
        return psi.copy()
    coeffs = real_matmul(prop.vectors.T, psi.amps)
    coeffs *= np.exp(-1j * t * prop.energies)
    return StateVector(psi.basis, real_matmul(prop.vectors, coeffs))


def _expm_tridiag_e1(alphas, betas, t):
    """First column of exp(-i t T) for the symmetric tridiagonal T."""
    theta, q = scipy.linalg.eigh_tridiagonal(alphas, betas)
    return q @ (np.exp(-1j * t * theta) * q[0, :])


def _lanczos_step(matrix, amps, dt, m_max, step_tol):
    """One Krylov substep; returns (new_amps, error_estimate, converged)."""
    dim = len(amps)
    beta0 = np.linalg.norm(amps)
    m_cap = min(m_max, dim)
    vecs = np.empty((dim, m_cap + 1), dtype=np.complex128)
    vecs[:, 0] = amps / beta0
    alphas = np.empty(m_cap)
    betas = np.empty(m_cap)
    best = (None, np.inf)
    for k in range(m_cap):
        w = matrix @ vecs[:, k]
        alphas[k] = np.vdot(vecs[:, k], w).real
        w -= alphas[k] * vecs[:, k]
        if k:
            w -= betas[k - 1] * vecs[:, k - 1]
        # full reorthogonalization; subspaces are small so the cost is minor
        w -= vecs[:, : k + 1] @ (vecs[:, : k + 1].conj().T @ w)
        beta = np.linalg.norm(w)
        betas[k] = beta
        m = k + 1
        small = _expm_tridiag_e1(alphas[:m], betas[: m - 1], dt)
        if beta < 1e-12:
            # invariant subspace reached: the projected exponential is exact
            return beta0 * (vecs[:, :m] @ small), 0.0, True
        err = beta * abs(small[-1])
        if err <= step_tol:
            return beta0 * (vecs[:, :m] @ small), err, True
        if err < best[1]:
            best = (beta0 * (vecs[:, :m] @ small), err)
        vecs[:, m] = w / beta
    return best[0], best[1], False


def evolve_krylov(ham, psi, t, tol=KRYLOV_TOL, m_max=KRYLOV_M_MAX):
    """Evolve ``psi`` by time ``t`` to 2-norm accuracy ``tol``.

    Substeps adaptively, allotting each substep an error budget proportional
    to its length; the result is renormalized to unit norm. Raises
    ConvergenceError (carrying the best residual estimate) if the required
    substep length underflows.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    _check_shared_basis(ham.basis, psi.basis)
    if t == 0:
        return psi.copy()

    matrix = ham.matrix
    amps = psi.amps.astype(np.complex128, copy=True)
    total = abs(t)
    remaining = float(t)
    dt = float(t)
    min_dt = total * 1e-12
    while abs(remaining) > total * 1e-14:
        if abs(dt) > abs(remaining):
            dt = remaining
        step_tol = tol * abs(dt) / total
        new_amps, err, ok = _lanczos_step(matrix, amps, dt, m_max, step_tol)
        if not ok:
            if abs(dt) / 2 < min_dt:
                raise ConvergenceError(
                    f"Krylov propagation stalled at substep {abs(dt):.3e} "
                    f"with residual estimate {err:.3e} (m_max={m_max})",
                    residual=err,
                )
            dt /= 2
            continue
        amps = new_amps
        remaining -= dt
        if err < 0.1 * step_tol:
            dt *= 1.5
    amps /= np.linalg.norm(amps)
    return StateVector(psi.basis, amps)


def fidelity(psi, phi):
    """Squared overlap |<phi|psi>|^2."""
    _check_shared_basis(psi.basis, phi.basis)
    return float(abs(np.vdot(phi.amps, psi.amps)) ** 2)


def entanglement_entropy(psi, bimap):
    """Von Neumann entropy (natural log) across the bipartition cut.

    Amplitudes are scattered into the (left x right) coefficient matrix and
    the entropy is computed from its singular values; squared singular values
    below SCHMIDT_CUTOFF are dropped to avoid 0*log(0).
    """
    coeff = np.zeros((bimap.left.dim, bimap.right.dim), dtype=np.complex128)
    coeff[bimap.left_index, bimap.right_index] = psi.amps
    sv = np.linalg.svd(coeff, compute_uv=False)
    weights = sv * sv
    weights = weights[weights > SCHMIDT_CUTOFF]
    return max(0.0, float(-(weights * np.log(weights)).sum()))
