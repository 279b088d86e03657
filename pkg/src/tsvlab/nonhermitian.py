"""Non-Hermitian effective Hamiltonians and their biorthogonal eigensystems.

A nondegenerate H is written as

    H = sum_i w_i |Phi_i><Psi_i| / <Psi_i|Phi_i>

with eigen-kets |Phi_i> and eigen-bras <Psi_i|.  Here ``kets`` are
unit-norm and ``bras`` are stored as kets (conjugated on use), scaled so
that <Psi_i|Phi_j> = delta_ij.

Weak-value readings of branch i use the bra <Psi_i| and the ket |Phi_i>,
i.e. <Psi_i|A|Phi_i> / <Psi_i|Phi_i>, the same ordering as an ordinary weak
value <Psi_2|A|Psi_1> / <Psi_2|Psi_1>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnderflowedBranch
from .hilbert import as_operator, as_state, general_eig
from .spin import pauli, pauli_component

UNDERFLOW_NORM = 1e-300


@dataclass(frozen=True, eq=False)
class BiorthogonalSystem:
    omegas: np.ndarray
    kets: np.ndarray  # columns |Phi_i>
    bras: np.ndarray  # columns |Psi_i>, conjugated on use

    @classmethod
    def decompose(cls, H) -> "BiorthogonalSystem":
        triples = general_eig(H)
        return cls(
            np.array([t.value for t in triples]),
            np.column_stack([t.right for t in triples]),
            np.column_stack([t.left for t in triples]),
        )

    def __len__(self) -> int:
        return len(self.omegas)

    @property
    def gram(self) -> np.ndarray:
        """<Psi_i|Phi_j>."""
        return self.bras.conj().T @ self.kets

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.kets))

    def coefficients(self, psi) -> np.ndarray:
        """alpha_i with psi = sum_i alpha_i |Phi_i>."""
        return self.bras.conj().T @ as_state(psi)

    def assemble(self) -> np.ndarray:
        out = np.zeros((len(self),) * 2, dtype=complex)
        for k in range(len(self)):
            phi, psi = self.kets[:, k], self.bras[:, k]
            out += self.omegas[k] * np.outer(phi, psi.conj()) / np.vdot(psi, phi)
        return out

    def branch_weak_value(self, A, k: int) -> complex:
        phi, psi = self.kets[:, k], self.bras[:, k]
        return complex(np.vdot(psi, as_operator(A) @ phi) / np.vdot(psi, phi))


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    state: np.ndarray
    norm_factor: float
    branch_amplitudes: np.ndarray

    @property
    def survival(self) -> float:
        """Norm of the unnormalized evolved state, 1 / norm_factor."""
        return 1.0 / self.norm_factor


def effective_protector(lam: float, Sw) -> np.ndarray:
    """-lam (Sw_x sigma_x + Sw_y sigma_y + Sw_z sigma_z) on the qubit."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    sx, sy, sz = pauli()
    wx, wy, wz = (complex(c) for c in Sw)
    return -lam * (wx * sx + wy * sy + wz * sz)


def add_measurement_term(H, p: float, T: float, xi=None, observable=None) -> np.ndarray:
    """H + (p / T) O with O = xi . sigma, or an explicitly supplied observable."""
    H = as_operator(H)
    if observable is None:
        if xi is None:
            raise ValueError("need a direction or an observable")
        observable = pauli_component(xi)
    observable = as_operator(observable)
    if observable.shape != H.shape:
        raise ValueError("observable and Hamiltonian dims differ")
    return H + (p / T) * observable


def first_order_eigenvalues(H0, V) -> np.ndarray:
    """w_i + <Psi_i|V|Phi_i> / <Psi_i|Phi_i>: first-order shifts of a nondegenerate H0."""
    bio = BiorthogonalSystem.decompose(H0)
    return np.array([bio.omegas[k] + bio.branch_weak_value(V, k) for k in range(len(bio))])


def evolve_nonhermitian(H, psi0, t: float) -> EvolutionResult:
    """Norm-tracked evolution sum_i alpha_i exp(-i w_i t) |Phi_i>, renormalized."""
    psi0 = as_state(psi0)
    bio = BiorthogonalSystem.decompose(H)
    branches = bio.coefficients(psi0) * np.exp(-1j * bio.omegas * t)
    raw = bio.kets @ branches
    norm = float(np.linalg.norm(raw))
    if not np.isfinite(norm) or norm < UNDERFLOW_NORM:
        raise UnderflowedBranch(f"unnormalized norm {norm:.3e} at t={t}")
    return EvolutionResult(raw / norm, 1.0 / norm, branches)


def backward_evolve(H, phi_target, t: float) -> EvolutionResult:
    """Evolve a post-selected bra <phi| backwards by ``t``: <phi| exp(-i H t).

    Returned as the ket exp(+i H^dagger t)|phi>, i.e. forward evolution under
    H^dagger for time -t.
    """
    return evolve_nonhermitian(as_operator(H).conj().T, phi_target, -t)


@dataclass(frozen=True)
class Branch:
    reading: complex
    probability: float
    omega: complex


def adiabatic_branches(H_eff, A, psi0, T: float) -> list[Branch]:
    """Readings and probabilities of the branches of an adiabatic measurement.

    Branch i shows the weak value of A for the biorthogonal pair
    (<Psi_i|, |Phi_i>) with relative probability |alpha_i exp(-i w_i T)|^2,
    normalized here to sum to one.
    """
    bio = BiorthogonalSystem.decompose(H_eff)
    amps = bio.coefficients(psi0) * np.exp(-1j * bio.omegas * T)
    weights = np.abs(amps) ** 2
    total = weights.sum()
    if not total > 0:
        raise UnderflowedBranch("all branch amplitudes vanished")
    return [Branch(bio.branch_weak_value(A, k), float(weights[k] / total), complex(bio.omegas[k])) for k in range(len(bio))]
