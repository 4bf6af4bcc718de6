"""Dense complex linear algebra kernels for Hermitian matrices of dimension <= 16.

All Hamiltonians are in frequency units (MHz) and all durations in
microseconds; propagators therefore carry an explicit 2*pi factor.
Matrix exponentials go through an eigendecomposition rather than a series
expansion so the result is unitary to machine precision at these sizes.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

SUPPORTED_DIMS = (2, 4, 8, 16)

# 100x double-precision accumulation error at dim 16.
HERMITICITY_TOL = 1e-10
PSD_CLIP_TOL = 1e-10

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": SIGMA_I, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}


class ContractError(ValueError):
    """An operation precondition was violated."""


class NotPositiveSemidefiniteError(ContractError):
    """Matrix has an eigenvalue below the PSD clipping tolerance."""


class DimensionError(ContractError):
    """Matrix dimension outside the supported set {2, 4, 8, 16}."""


class EigenSystem(NamedTuple):
    """Eigenvalues in ascending order and orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(m) -> np.ndarray:
    """Coerce to a square complex array with a supported dimension."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] not in SUPPORTED_DIMS:
        raise DimensionError(f"dimension {a.shape[0]} not in {SUPPORTED_DIMS}")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(m.T)


def require_hermitian(m: np.ndarray, tol: float = HERMITICITY_TOL) -> np.ndarray:
    m = as_matrix(m)
    dev = np.max(np.abs(m - dagger(m)))
    if dev >= tol:
        raise ContractError(f"matrix is not Hermitian: max |M - M^dag| = {dev:.3e}")
    return m


def hermitian_eig(m) -> EigenSystem:
    """Eigendecomposition of a Hermitian matrix.

    Returns eigenvalues ascending and orthonormal eigenvectors such that
    M = V diag(w) V^dag.
    """
    m = require_hermitian(m)
    w, v = np.linalg.eigh(m)
    return EigenSystem(w, v)


def unitary_exp(h, t_us: float) -> np.ndarray:
    """Propagator U = exp(-i 2pi H t) for H in MHz and t in microseconds."""
    if t_us < 0:
        raise ContractError(f"negative duration {t_us} us")
    w, v = hermitian_eig(h)
    phases = np.exp(-2j * np.pi * w * t_us)
    return (v * phases) @ dagger(v)


def psd_sqrt(m) -> np.ndarray:
    """Principal square root of a positive-semidefinite Hermitian matrix.

    Eigenvalues in [-PSD_CLIP_TOL, 0) are clipped to zero; anything lower
    raises NotPositiveSemidefiniteError.
    """
    w, v = hermitian_eig(m)
    if w[0] < -PSD_CLIP_TOL:
        raise NotPositiveSemidefiniteError(f"minimum eigenvalue {w[0]:.3e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dagger(v)


def project_to_simplex(vals: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex.

    Sort descending, zero out entries that would go negative, and spread the
    resulting deficit uniformly over the surviving entries (waterfilling).
    This is the closed-form minimizer of ||x - vals||_2 over {x >= 0, sum x = 1}.
    """
    vals = np.asarray(vals, dtype=float)
    mu = np.sort(vals)[::-1]
    div = np.arange(1, len(vals) + 1)
    shifted = mu - (np.cumsum(mu) - 1.0) / div
    k = int(np.nonzero(shifted > 0)[0][-1]) + 1
    tau = (np.cumsum(mu)[k - 1] - 1.0) / k
    return np.clip(vals - tau, 0.0, None)


def nearest_physical_density(m) -> np.ndarray:
    """Frobenius-nearest density matrix (PSD, Hermitian, trace one).

    The input is hermitized as (M + M^dag)/2 and trace-normalized first; the
    eigenvalues are then projected onto the probability simplex.
    """
    m = as_matrix(m)
    m = (m + dagger(m)) / 2.0
    tr = np.trace(m).real
    if abs(tr) < 1e-12:
        raise ContractError("matrix has (near-)zero trace; cannot normalize")
    m = m / tr
    w, v = np.linalg.eigh(m)
    w_proj = project_to_simplex(w)
    return (v * w_proj) @ dagger(v)


def tensor(a, b) -> np.ndarray:
    """Kronecker product with the <=16 dimension cap enforced."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[0] * b.shape[0] > 16:
        raise DimensionError(
            f"tensor product dimension {a.shape[0] * b.shape[0]} exceeds 16"
        )
    return np.kron(a, b)


def kron_all(*ops) -> np.ndarray:
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def partial_trace(rho: np.ndarray, keep: tuple[int, ...], n_qubits: int) -> np.ndarray:
    """Trace a 2^n x 2^n matrix down to the qubits in `keep` (order preserved)."""
    rho = np.asarray(rho, dtype=complex)
    dims = (2,) * n_qubits
    t = rho.reshape(dims + dims)
    drop = [q for q in range(n_qubits) if q not in keep]
    for q in sorted(drop, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + t.ndim // 2)
    d = 2 ** len(keep)
    return t.reshape(d, d)
