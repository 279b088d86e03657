"""Neutral-kaon decay as a two-level non-Hermitian Hamiltonian.

Basis (|K0>, |K0bar>).  With CP violation epsilon the decay eigenstates
|K_L>, |K_S> ~ (1 + eps)|K0> +/- (1 - eps)|K0bar> are not orthogonal, so the
eigen-bra belonging to each eigen-ket differs from its conjugate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .hilbert import as_state, general_eig, normalize
from .nonhermitian import EvolutionResult, evolve_nonhermitian


@dataclass(frozen=True)
class KaonParams:
    m_L: float = 0.0
    m_S: float = 0.0
    gamma_L: float = 0.002
    gamma_S: float = 1.0
    epsilon: complex = 0.002

    def __post_init__(self):
        object.__setattr__(self, "epsilon", complex(self.epsilon))
        if not self.gamma_S > self.gamma_L > 0:
            raise ValueError(f"need gamma_S > gamma_L > 0, got {self.gamma_S}, {self.gamma_L}")
        if not abs(self.epsilon) < 0.1:
            raise ValueError(f"|epsilon| must be below 0.1, got {abs(self.epsilon)}")
        if not all(np.isfinite([self.m_L, self.m_S])):
            raise ValueError("masses must be finite")

    @property
    def eigenvalues(self) -> tuple[complex, complex]:
        """(omega_L, omega_S) = m - i gamma / 2."""
        return complex(self.m_L, -self.gamma_L / 2), complex(self.m_S, -self.gamma_S / 2)


def kaon_kets(params: KaonParams) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm (|K_L>, |K_S>)."""
    eps = params.epsilon
    return normalize([1 + eps, 1 - eps]), normalize([1 + eps, -(1 - eps)])


def mixing(params: KaonParams) -> complex:
    """<K_S|K_L> for unit kets, 2 Re(eps) / (1 + |eps|^2)."""
    k_l, k_s = kaon_kets(params)
    return complex(np.vdot(k_s, k_l))


def kaon_hamiltonian(params: KaonParams) -> np.ndarray:
    V = np.column_stack(kaon_kets(params))
    return V @ np.diag(params.eigenvalues) @ np.linalg.inv(V)


class OverlapCheck(NamedTuple):
    forward_backward_overlap: float
    predicted: float
    unit_overlap: float
    mixing: complex
    per_state: tuple[tuple[str, float, float], ...]


def kaon_overlap_check(params: KaonParams) -> OverlapCheck:
    """Compare each eigen-ket with its own eigen-bra.

    The eigen-bra <K'| comes from the left eigenvectors of the Hamiltonian,
    scaled dual to the unit eigen-ket (<K'|K> = 1).  Its norm, which is the
    inverse of the overlap between the unit-normalized bra and ket, equals
    1 / sqrt(1 - |<K_S|K_L>|^2) for both K_L and K_S.  ``unit_overlap`` is
    |<K'|K>| with both sides unit-normalized.
    """
    H = kaon_hamiltonian(params)
    c = mixing(params)
    predicted = 1.0 / np.sqrt(1.0 - abs(c) ** 2)
    rows = []
    for t in general_eig(H):
        # general_eig returns unit right vectors and duals with <left|right> = 1
        dual_norm = float(np.linalg.norm(t.left))
        unit = float(abs(np.vdot(normalize(t.left), t.right)))
        label = "L" if abs(t.value - params.eigenvalues[0]) < abs(t.value - params.eigenvalues[1]) else "S"
        rows.append((label, dual_norm, unit))
    rows.sort()
    worst = max(rows, key=lambda r: abs(r[1] - predicted))
    return OverlapCheck(worst[1], float(predicted), worst[2], c, tuple(rows))


def survival_postselected_run(params: KaonParams, psi0, T: float) -> EvolutionResult:
    """Evolve for ``T`` keeping only the runs in which no decay happened.

    ``branch_amplitudes`` are ordered (K_L, K_S) and refer to unit-norm kets;
    ``norm_factor`` is the inverse survival amplitude.
    """
    if not T >= 0:
        raise ValueError("T must be non-negative")
    psi0 = normalize(as_state(psi0))
    result = evolve_nonhermitian(kaon_hamiltonian(params), psi0, T)
    V = np.column_stack(kaon_kets(params))
    amps = np.linalg.solve(V, psi0) * np.exp(-1j * np.array(params.eigenvalues) * T)
    return EvolutionResult(result.state, result.norm_factor, amps)


def branch_probabilities(result: EvolutionResult) -> np.ndarray:
    w = np.abs(result.branch_amplitudes) ** 2
    return w / w.sum()
