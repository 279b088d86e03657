"""Two-state vectors, weak values and post-selection statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NearOrthogonal, NoSolution
from .hilbert import as_operator, as_state, fix_phase, is_normalized, normalize
from .spin import SpinSystem, coherent, pauli

ORTHOGONALITY_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class TwoStateVector:
    """A pre-selected ket ``forward`` and a post-selected state ``backward``.

    ``backward`` is stored as a ket; the bra <Psi_2| is its conjugate.
    """

    forward: np.ndarray
    backward: np.ndarray
    eps: float = ORTHOGONALITY_EPS
    overlap: complex = field(init=False)

    def __post_init__(self):
        fwd, bwd = as_state(self.forward), as_state(self.backward)
        if fwd.shape != bwd.shape:
            raise DimensionMismatch(f"forward dim {fwd.size} != backward dim {bwd.size}")
        if not (is_normalized(fwd) and is_normalized(bwd)):
            raise ValueError("two-state vector components must be normalized")
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "backward", bwd)
        ov = complex(np.vdot(bwd, fwd))
        if abs(ov) <= self.eps:
            raise NearOrthogonal(f"|<Psi_2|Psi_1>| = {abs(ov):.3e} <= {self.eps:.1e}")
        object.__setattr__(self, "overlap", ov)

    @classmethod
    def from_states(cls, pre, post, eps: float = ORTHOGONALITY_EPS) -> "TwoStateVector":
        return cls(normalize(pre), normalize(post), eps)

    @property
    def dim(self) -> int:
        return self.forward.size

    def fidelities(self, other: "TwoStateVector") -> tuple[float, float]:
        """(forward, backward) state fidelities against another two-state vector."""
        return (
            float(abs(np.vdot(self.forward, other.forward)) ** 2),
            float(abs(np.vdot(self.backward, other.backward)) ** 2),
        )


def spin_tsv(j, pre_dir, post_dir, eps: float = ORTHOGONALITY_EPS) -> TwoStateVector:
    """<S_post = j| |S_pre = j>."""
    return TwoStateVector(coherent(j, pre_dir), coherent(j, post_dir), eps)


@dataclass(frozen=True)
class WeakValue:
    value: complex
    observable_label: str = ""

    @property
    def real(self) -> float:
        return self.value.real

    @property
    def imag(self) -> float:
        return self.value.imag

    def __complex__(self) -> complex:
        return self.value


def weak_value(A, tsv: TwoStateVector, label: str = "") -> WeakValue:
    """<Psi_2|A|Psi_1> / <Psi_2|Psi_1>."""
    A = as_operator(A)
    if A.shape[0] != tsv.dim:
        raise DimensionMismatch(f"operator dim {A.shape[0]} vs two-state vector dim {tsv.dim}")
    if abs(tsv.overlap) <= tsv.eps:
        raise NearOrthogonal("overlap below cutoff")
    return WeakValue(complex(np.vdot(tsv.backward, A @ tsv.forward) / tsv.overlap), label)


def weak_value_vector(sys: SpinSystem, tsv: TwoStateVector) -> tuple[complex, complex, complex]:
    return tuple(complex(weak_value(s, tsv).value) for s in sys.components)


def pauli_weak_values(tsv: TwoStateVector) -> tuple[complex, complex, complex]:
    return tuple(complex(weak_value(s, tsv).value) for s in pauli())


def postselect_probability(target, evolved) -> float:
    """Born probability |<target|evolved>|^2, clipped to [0, 1]."""
    target, evolved = as_state(target), as_state(evolved)
    if target.shape != evolved.shape:
        raise DimensionMismatch("target and evolved state dims differ")
    return float(min(1.0, max(0.0, abs(np.vdot(target, evolved)) ** 2)))


def reconstruct_qubit_tsv(wx: complex, wy: complex, wz: complex, tol: float = 1e-8) -> TwoStateVector:
    """The qubit two-state vector whose Pauli weak values are (wx, wy, wz).

    For a qubit, |Psi_1><Psi_2| / <Psi_2|Psi_1> = (I + w . sigma) / 2, a
    trace-one rank-one operator.  Its dominant singular pair gives the two
    states; with noisy readings this is the nearest rank-one fit.  The
    result is accepted only if its own weak values reproduce the input to
    ``tol``.
    """
    w = np.array([wx, wy, wz], dtype=complex)
    if not np.all(np.isfinite(w)):
        raise NoSolution("non-finite weak values")
    sx, sy, sz = pauli()
    W = (np.eye(2) + w[0] * sx + w[1] * sy + w[2] * sz) / 2
    u, s, vh = np.linalg.svd(W)
    forward = fix_phase(u[:, 0])
    backward = fix_phase(vh[0].conj())
    try:
        tsv = TwoStateVector(forward, backward)
    except NearOrthogonal as exc:
        raise NoSolution(f"weak values {tuple(w)} need orthogonal states") from exc
    got = np.array(pauli_weak_values(tsv))
    err = float(np.max(np.abs(got - w)))
    if err > tol:
        raise NoSolution(
            f"no qubit two-state vector reproduces {tuple(w)}: residual {err:.3e} > {tol:.1e} "
            f"(w.w - 1 = {complex(w @ w - 1):.3e})"
        )
    return tsv
