"""Spin-j operators, Pauli matrices and spin coherent states.

Basis ordering is the S_z eigenbasis with m = j, j-1, ..., -j (descending),
so for j = 1/2 index 0 is |up_z> and ``make_spin(0.5).sx == pauli()[0] / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .hilbert import fix_phase

X_HAT = np.array([1.0, 0.0, 0.0])
Y_HAT = np.array([0.0, 1.0, 0.0])
Z_HAT = np.array([0.0, 0.0, 1.0])


def direction(v) -> np.ndarray:
    """Validate and normalize a 3-vector into a unit direction."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"direction must be a finite 3-vector, got {v!r}")
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("direction must be non-zero")
    return v / n


def from_angles(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def random_direction(rng: np.random.Generator) -> np.ndarray:
    return direction(rng.normal(size=3))


def _check_spin(j) -> Fraction:
    twice = 2 * Fraction(j).limit_denominator(1000)
    if twice.denominator != 1 or twice < 0 or abs(float(twice) - 2 * float(j)) > 1e-12:
        raise ValueError(f"2j must be a non-negative integer, got j={j!r}")
    return twice / 2


@dataclass(frozen=True, eq=False)
class SpinSystem:
    j: float
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    @property
    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.sx, self.sy, self.sz

    @property
    def casimir(self) -> np.ndarray:
        return self.sx @ self.sx + self.sy @ self.sy + self.sz @ self.sz


def make_spin(j) -> SpinSystem:
    """Angular-momentum matrices for spin ``j`` built from the ladder operators."""
    jf = _check_spin(j)
    jj = float(jf)
    m = jj - np.arange(int(2 * jf) + 1)
    # <m+1|S+|m> = sqrt(j(j+1) - m(m+1)) sits on the first superdiagonal
    splus = np.diag(np.sqrt(jj * (jj + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    sminus = splus.conj().T
    sx = (splus + sminus) / 2
    sy = (splus - sminus) / 2j
    sz = np.diag(m).astype(complex)
    return SpinSystem(jj, sx, sy, sz)


def pauli() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = make_spin(0.5)
    return 2 * s.sx, 2 * s.sy, 2 * s.sz


def spin_component(sys: SpinSystem, n) -> np.ndarray:
    n = direction(n)
    return n[0] * sys.sx + n[1] * sys.sy + n[2] * sys.sz


def pauli_component(n) -> np.ndarray:
    """n . sigma."""
    n = direction(n)
    sx, sy, sz = pauli()
    return n[0] * sx + n[1] * sy + n[2] * sz


def coherent(j, n) -> np.ndarray:
    """|S_n = j>: the maximal-weight eigenvector of n . S (phase per ``fix_phase``)."""
    sys = make_spin(j)
    _, vecs = np.linalg.eigh(spin_component(sys, n))
    return fix_phase(vecs[:, -1])


def qubit(n) -> np.ndarray:
    """|up_n> for a spin-1/2."""
    return coherent(0.5, n)
