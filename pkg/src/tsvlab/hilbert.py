"""Dense complex linear algebra: states, operators, evolution, eigensystems.

States are 1-d complex ``numpy`` arrays and operators are square 2-d complex
arrays.  Bras are never stored separately; a bra is the conjugate of a ket
and conjugation happens at the point of use (``np.vdot``).

Tensor products follow ``np.kron``: the first factor is the slow index.
Throughout the package the joint space is ordered ``device (x) system``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import DegenerateSpectrum, DimensionMismatch

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12
DEGENERACY_TOL = 1e-8


def as_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1 or psi.size == 0:
        raise DimensionMismatch(f"state must be a non-empty 1-d array, got shape {psi.shape}")
    return psi


def as_operator(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimensionMismatch(f"operator must be square, got shape {m.shape}")
    return m


def normalize(psi) -> np.ndarray:
    psi = as_state(psi)
    norm = np.linalg.norm(psi)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite state")
    return psi / norm


def is_normalized(psi, tol: float = NORM_TOL) -> bool:
    return abs(np.linalg.norm(psi) - 1.0) < tol


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = as_operator(m)
    return bool(np.max(np.abs(m - m.conj().T)) < tol)


def fidelity(a, b) -> float:
    """|<a|b>|^2 for (not necessarily normalized) kets, after normalizing both."""
    a, b = as_state(a), as_state(b)
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def fix_phase(psi: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the largest component is real and positive.

    Ties within a relative 1e-9 go to the lowest index, which keeps the
    convention stable for symmetric states such as (1, 1)/sqrt(2).
    """
    mags = np.abs(psi)
    k = int(np.argmax(mags >= mags.max() * (1.0 - 1e-9)))
    if mags[k] == 0.0:
        return psi
    return psi * (mags[k] / psi[k])


def tensor(a, b) -> np.ndarray:
    """Kronecker product of two states or two operators."""
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise DimensionMismatch("tensor needs two states or two operators")
    if a.ndim == 2:
        as_operator(a)
        as_operator(b)
    return np.kron(a, b)


def tensor_all(*factors) -> np.ndarray:
    out = np.asarray(factors[0], dtype=complex)
    for f in factors[1:]:
        out = tensor(out, f)
    return out


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite entries")


def _is_normal(m: np.ndarray) -> bool:
    scale = max(np.max(np.abs(m)), 1.0)
    return bool(np.max(np.abs(m @ m.conj().T - m.conj().T @ m)) < 1e-12 * scale**2)


def evolution_operator(H, t: float) -> np.ndarray:
    """exp(-i H t).

    Hermitian and normal generators go through a unitary diagonalization;
    anything else uses scipy's scaling-and-squaring Pade approximant.
    """
    H = as_operator(H)
    _check_finite(H, np.asarray(t))
    if is_hermitian(H):
        w, v = np.linalg.eigh(H)
        return (v * np.exp(-1j * w * t)) @ v.conj().T
    if _is_normal(H):
        tri, z = scipy.linalg.schur(H, output="complex")
        return (z * np.exp(-1j * np.diag(tri) * t)) @ z.conj().T
    return scipy.linalg.expm(-1j * t * H)


def expm_apply(H, t: float, psi) -> np.ndarray:
    """exp(-i H t) applied to a state (or to the columns of a 2-d block)."""
    H = as_operator(H)
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[0] != H.shape[0]:
        raise DimensionMismatch(f"operator dim {H.shape[0]} vs state dim {psi.shape[0]}")
    _check_finite(psi)
    if is_hermitian(H):
        _check_finite(H, np.asarray(t))
        w, v = np.linalg.eigh(H)
        block = psi.reshape(len(w), -1)
        out = v @ (np.exp(-1j * w * t)[:, None] * (v.conj().T @ block))
        return out.reshape(psi.shape)
    return evolution_operator(H, t) @ psi


class EigenTriple(NamedTuple):
    value: complex
    right: np.ndarray
    left: np.ndarray


def general_eig(M) -> list[EigenTriple]:
    """Right and left eigenvectors of a nondegenerate (possibly non-Hermitian) matrix.

    Right vectors are unit-norm with the ``fix_phase`` convention; left vectors
    are the rows of the inverse eigenvector matrix, so that
    ``vdot(left_i, right_j) == delta_ij``.  Sorted by real then imaginary part.

    Raises
    ------
    DegenerateSpectrum
        If two eigenvalues are closer than ``1e-8 * max|M_ij|``.
    """
    M = as_operator(M)
    _check_finite(M)
    n = M.shape[0]
    scale = max(float(np.max(np.abs(M))), np.finfo(float).tiny)
    if is_hermitian(M):
        w, v = np.linalg.eigh(M)
        w = w.astype(complex)
    else:
        w, v = np.linalg.eig(M)
    if n > 1:
        gaps = np.abs(w[:, None] - w[None, :]) + np.diag(np.full(n, np.inf))
        if gaps.min() <= DEGENERACY_TOL * scale:
            raise DegenerateSpectrum(f"minimum eigenvalue gap {gaps.min():.3e} (scale {scale:.3e})")
    order = np.lexsort((w.imag, w.real))
    w = w[order]
    v = np.column_stack([fix_phase(normalize(v[:, k])) for k in order])
    left = np.linalg.inv(v).conj().T
    return [EigenTriple(complex(w[k]), v[:, k], left[:, k]) for k in range(n)]


def spectral_assemble(triples) -> np.ndarray:
    """Rebuild sum_i w_i |right_i><left_i| / <left_i|right_i>."""
    out = None
    for value, right, left in triples:
        term = value * np.outer(right, left.conj()) / np.vdot(left, right)
        out = term if out is None else out + term
    return out
