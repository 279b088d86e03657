"""von Neumann pointer models and momentum-sector evolution.

The coupling is always of the form g(t) P A with the pointer momentum P a
constant of motion, so the joint evolution splits into independent sectors
labelled by the momentum value p.  The pointer is never put on a position
grid: each sector is evolved together with its derivative d/dp, and the
pointer moments are reassembled from those.  In the momentum
representation Q = i d/dp, which gives for a sector amplitude chi(p)

    <Q> = sum_p w(p) (-Im <chi|d chi/dp>) / sum_p w(p) <chi|chi>

and the momentum shift is the reweighting of w(p) by |chi(p)|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotAnEigenstate
from .hilbert import as_operator, as_state, dagger, is_hermitian
from .tsv import TwoStateVector

SCHEDULES = ("impulsive", "flat_with_ramps")
CONVERGENCE_TOL = 1e-6


def _ramp_time(duration: float, ramp_fraction: float) -> float:
    # ramps shorter than this are indistinguishable from a hard switch
    tau = ramp_fraction * duration
    return 0.0 if tau < 1e-12 * duration else tau


def schedule_integral(t, duration: float, ramp_fraction: float):
    """Antiderivative of the raised-cosine-ramped coupling, normalized to 1 at ``duration``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, duration)
    tau = _ramp_time(duration, ramp_fraction)
    if tau == 0.0:
        return t / duration
    g0 = 1.0 / (duration - tau)

    def rising(s):
        return 0.5 * g0 * (s - tau / np.pi * np.sin(np.pi * s / tau))

    return np.where(
        t <= tau,
        rising(t),
        np.where(t >= duration - tau, 1.0 - rising(duration - t), 0.5 * g0 * tau + g0 * (t - tau)),
    )


def schedule_segments(schedule: str, ramp_fraction: float, duration: float, steps: int):
    """Piecewise-constant steps ``[(dt, G), ...]`` with G the exact integral of g over the step.

    Consecutive steps inside the flat plateau are merged into one: the
    propagator over n identical steps is exactly the single-step propagator
    over their union.
    """
    if schedule == "impulsive":
        return [(0.0, 1.0)]
    if schedule != "flat_with_ramps":
        raise ValueError(f"unknown schedule {schedule!r}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    tau = _ramp_time(duration, ramp_fraction)
    grid = np.linspace(0.0, duration, steps + 1)
    F = schedule_integral(grid, duration, ramp_fraction)
    segments: list[tuple[float, float]] = []
    flat_run = 0.0
    for k in range(steps):
        lo, hi = grid[k], grid[k + 1]
        if lo >= tau - 1e-15 * duration and hi <= duration - tau + 1e-15 * duration:
            flat_run += hi - lo
            continue
        if flat_run:
            segments.append((flat_run, flat_run / (duration - tau)))
            flat_run = 0.0
        segments.append((hi - lo, float(F[k + 1] - F[k])))
    if flat_run:
        segments.append((flat_run, flat_run / (duration - tau)))
    return segments


@dataclass(frozen=True, eq=False)
class PointerModel:
    """Gaussian pointer centred at ``q_mean`` with position spread ``delta``.

    The momentum distribution (spread 1/(2 delta)) is truncated at ``cutoff``
    standard deviations and discretized on ``n_samples`` Gauss-Legendre nodes
    carrying Gaussian weights.
    """

    delta: float = 2.0
    T: float = 1.0
    schedule: str = "flat_with_ramps"
    ramp_fraction: float = 0.1
    q_mean: float = 0.0
    n_samples: int = 33
    cutoff: float = 4.0
    momenta: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.delta > 0 or not self.T > 0:
            raise ValueError("delta and T must be positive")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if not 0.0 <= self.ramp_fraction < 0.5:
            raise ValueError("ramp_fraction must lie in [0, 0.5)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        x, wl = np.polynomial.legendre.leggauss(self.n_samples)
        p = x * self.p_max
        w = wl * np.exp(-0.5 * (p / self.sigma_p) ** 2)
        object.__setattr__(self, "momenta", p)
        object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def from_pmax(cls, p_max: float, **kwargs) -> "PointerModel":
        """Pointer whose momentum support is [-p_max, p_max]."""
        cutoff = kwargs.get("cutoff", 4.0)
        if not p_max > 0:
            raise ValueError("p_max must be positive")
        return cls(delta=cutoff / (2.0 * p_max), **kwargs)

    @property
    def sigma_p(self) -> float:
        return 1.0 / (2.0 * self.delta)

    @property
    def p_max(self) -> float:
        return self.cutoff * self.sigma_p

    @property
    def momentum_variance(self) -> float:
        """Variance of the discretized momentum distribution."""
        mean = float(self.weights @ self.momenta)
        return float(self.weights @ (self.momenta - mean) ** 2)

    def coupling(self, t, duration: float | None = None):
        """g(t); integrates to one over the measurement."""
        duration = self.T if duration is None else duration
        t = np.asarray(t, dtype=float)
        tau = _ramp_time(duration, self.ramp_fraction)
        g0 = 1.0 / (duration - tau)
        if tau == 0.0:
            return np.where((t >= 0) & (t <= duration), g0, 0.0)
        ramp = lambda s: 0.5 * g0 * (1.0 - np.cos(np.pi * s / tau))  # noqa: E731
        inside = np.where(t < tau, ramp(t), np.where(t > duration - tau, ramp(duration - t), g0))
        return np.where((t >= 0) & (t <= duration), inside, 0.0)

    def segments(self, steps: int, duration: float | None = None):
        return schedule_segments(self.schedule, self.ramp_fraction, self.T if duration is None else duration, steps)


@dataclass(frozen=True)
class MeasurementRecord:
    """Pointer statistics after a measurement.

    ``reading`` combines both pointer quadratures into a complex number:
    the position shift plus i times the momentum shift divided by twice the
    prior momentum variance (the Gaussian-pointer calibration of the
    imaginary part).
    """

    q_shift_mean: float
    p_shift_mean: float
    postselect_prob: float = 1.0
    outcome_distribution: tuple[tuple[float, float], ...] = ()
    reading: complex = complex("nan")
    leakage: float = math.nan
    disturbance: float = math.nan
    fidelity_forward: float = math.nan
    fidelity_backward: float = math.nan
    converged: bool = True
    extras: dict = field(default_factory=dict)


def _divided_exp(x: np.ndarray) -> np.ndarray:
    """F[..., a, b] = (exp(x_a) - exp(x_b)) / (x_a - x_b), with the diagonal limit exp(x_a)."""
    dx = x[..., :, None] - x[..., None, :]
    small = np.abs(dx) < 1e-12
    ratio = np.where(small, 1.0 + dx / 2, np.expm1(dx) / np.where(small, 1.0, dx))
    return np.exp(x)[..., None, :] * ratio


def _blocks(conserved: np.ndarray | None, d: int):
    """Unitary basis change and index blocks of a conserved Hermitian operator's eigenspaces."""
    if conserved is None:
        return None, {d: np.arange(d)[None, :]}
    vals, basis = np.linalg.eigh(conserved)
    cuts = np.flatnonzero(np.diff(vals) > 1e-6) + 1
    groups = np.split(np.arange(d), cuts)
    by_size: dict[int, list[np.ndarray]] = {}
    for g in groups:
        by_size.setdefault(len(g), []).append(g)
    return basis, {s: np.array(gs) for s, gs in by_size.items()}


def propagate_sectors(H0, A, momenta, segments, X, conserved=None):
    """Evolve ``X`` under H0 + g(t) p A for every momentum ``p``, with d/dp.

    Parameters
    ----------
    H0, A : (d, d) Hermitian arrays
    momenta : (n,) array of sector momenta
    segments : list of (dt, G) from :func:`schedule_segments`; each step
        applies exp(-i (H0 dt + p G A)).
    X : (d,) or (d, m) initial state(s), identical in every sector.
    conserved : optional Hermitian operator commuting with H0 and A; the
        evolution is then carried out blockwise in its eigenbasis.

    Returns
    -------
    Y, dY : arrays of shape (n, d, m) (or (n, d) for a 1-d ``X``): the
        evolved states and their derivatives with respect to p.
    """
    H0, A = as_operator(H0), as_operator(A)
    if not (is_hermitian(H0, 1e-10) and is_hermitian(A, 1e-10)):
        raise ValueError("sector propagation needs Hermitian H0 and A")
    p = np.asarray(momenta, dtype=float)
    X = np.asarray(X, dtype=complex)
    vector_input = X.ndim == 1
    X = X.reshape(X.shape[0], -1)
    d = H0.shape[0]
    basis, blocks = _blocks(conserved, d)
    if basis is not None:
        H0b, Ab = dagger(basis) @ H0 @ basis, dagger(basis) @ A @ basis
        mask = np.zeros((d, d), dtype=bool)
        for idx in blocks.values():
            for g in idx:
                mask[np.ix_(g, g)] = True
        leak = max(np.max(np.abs(H0b[~mask]), initial=0.0), np.max(np.abs(Ab[~mask]), initial=0.0))
        if leak > 1e-9 * max(1.0, np.max(np.abs(H0)), np.max(np.abs(A))):
            raise ValueError(f"operators do not commute with the conserved quantity (leak {leak:.2e})")
        Xb = dagger(basis) @ X
    else:
        H0b, Ab, Xb = H0, A, X

    n = p.size
    Y = np.broadcast_to(Xb, (n,) + Xb.shape).copy()
    dY = np.zeros_like(Y)
    stacks = {s: (H0b[idx[:, :, None], idx[:, None, :]], Ab[idx[:, :, None], idx[:, None, :]]) for s, idx in blocks.items()}

    for dt, G in segments:
        for s, idx in blocks.items():
            h0s, as_ = stacks[s]
            K = dt * h0s[None] + (p * G)[:, None, None, None] * as_[None]
            w, V = np.linalg.eigh(K)
            Vh = dagger(V)
            x = -1j * w
            U = (V * np.exp(x)[..., None, :]) @ Vh
            E = Vh @ (-1j * G * as_[None]) @ V
            dU = V @ (_divided_exp(x) * E) @ Vh
            xs, dxs = Y[:, idx], dY[:, idx]
            Y[:, idx] = U @ xs
            dY[:, idx] = U @ dxs + dU @ xs

    if basis is not None:
        Y, dY = basis @ Y, basis @ dY
    if vector_input:
        return Y[..., 0], dY[..., 0]
    return Y, dY


def pointer_moments(chi, dchi, momenta, weights):
    """Post-selection probability and pointer shifts from sector amplitudes.

    ``chi`` and ``dchi`` have shape (n, k): one (unnormalized, post-selected)
    vector per momentum sector and its p-derivative.
    """
    chi = np.asarray(chi).reshape(len(weights), -1)
    dchi = np.asarray(dchi).reshape(len(weights), -1)
    norms = np.sum(np.abs(chi) ** 2, axis=1)
    prob = float(weights @ norms)
    if prob == 0.0:
        return 0.0, math.nan, math.nan
    q = float(weights @ (-np.imag(np.sum(chi.conj() * dchi, axis=1)))) / prob
    p_shift = float(weights @ (momenta * norms)) / prob - float(weights @ momenta)
    return prob, q, p_shift


def impulsive_measure(A, psi, ptr: PointerModel) -> MeasurementRecord:
    """Strong measurement: one Gaussian of width ``ptr.delta`` per distinct eigenvalue."""
    A = as_operator(A)
    psi = as_state(psi)
    if not is_hermitian(A):
        raise ValueError("impulsive measurement needs a Hermitian observable")
    vals, vecs = np.linalg.eigh(A)
    probs = np.abs(vecs.conj().T @ psi) ** 2
    probs = probs / probs.sum()
    components: list[list[float]] = []
    for a, w in zip(vals, probs):
        if components and abs(a - components[-1][0]) < 1e-10 * max(1.0, abs(a)):
            components[-1][1] += w
        else:
            components.append([float(a), float(w)])
    dist = tuple((ptr.q_mean + a, w) for a, w in components)
    mean = sum(a * w for a, w in components)
    return MeasurementRecord(
        q_shift_mean=mean,
        p_shift_mean=0.0,
        outcome_distribution=dist,
        reading=complex(mean),
        extras={"delta": ptr.delta},
    )


def mixture_density(record: MeasurementRecord, q, delta: float):
    """Pointer position density of an impulsive-measurement record."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    for center, w in record.outcome_distribution:
        out += w * np.exp(-0.5 * ((q - center) / delta) ** 2) / (delta * np.sqrt(2 * np.pi))
    return out


def weak_measure_tsv(A, tsv: TwoStateVector, ptr: PointerModel, strength: float) -> MeasurementRecord:
    """Impulsive coupling exp(-i strength P A) followed by post-selection on <Psi_2|.

    In the limit strength -> 0 the position shift approaches strength times
    Re(A_w) and ``reading / strength`` approaches A_w.
    """
    A = as_operator(A)
    if not is_hermitian(A):
        raise ValueError("weak measurement needs a Hermitian observable")
    if strength == 0:
        return MeasurementRecord(0.0, 0.0, postselect_prob=abs(tsv.overlap) ** 2, reading=0j)
    vals, vecs = np.linalg.eigh(A)
    left = np.conj(vecs.conj().T @ tsv.backward)
    right = vecs.conj().T @ tsv.forward
    phases = np.exp(-1j * strength * np.outer(ptr.momenta, vals))
    chi = phases @ (left * right)
    dchi = phases @ (left * right * (-1j * strength * vals))
    prob, q, p_shift = pointer_moments(chi, dchi, ptr.momenta, ptr.weights)
    return MeasurementRecord(
        q_shift_mean=q,
        p_shift_mean=p_shift,
        postselect_prob=prob,
        reading=complex(q, p_shift / (2 * ptr.momentum_variance)),
        extras={"strength": strength},
    )


def _check_eigenstate(H0: np.ndarray, psi0: np.ndarray) -> float:
    energy = float(np.vdot(psi0, H0 @ psi0).real)
    scale = max(1.0, float(np.max(np.abs(H0))))
    if np.linalg.norm(H0 @ psi0 - energy * psi0) > 1e-8 * scale:
        raise NotAnEigenstate("initial state is not an eigenstate of H0")
    others = np.linalg.eigvalsh(H0)
    if np.sum(np.abs(others - energy) < 1e-8 * scale) > 1:
        raise NotAnEigenstate("initial eigenstate is degenerate")
    return energy


def adiabatic_measure_single(A, H0, psi0, ptr: PointerModel, steps: int, check_convergence: bool = True) -> MeasurementRecord:
    """Slow measurement of A on a nondegenerate eigenstate of H0.

    Each momentum sector is evolved under H0 + g(t) p A over ``ptr.T``; the
    pointer shift tends to <psi0|A|psi0> as T grows.  ``leakage`` is the
    weighted probability of ending outside the initial eigenstate.
    """
    A, H0 = as_operator(A), as_operator(H0)
    psi0 = as_state(psi0)
    if ptr.schedule != "flat_with_ramps":
        raise ValueError("adiabatic measurement needs a flat_with_ramps schedule")
    _check_eigenstate(H0, psi0)

    def run(n_steps):
        Y, dY = propagate_sectors(H0, A, ptr.momenta, ptr.segments(n_steps), psi0)
        _, q, _ = pointer_moments(Y, dY, ptr.momenta, ptr.weights)
        leak = float(ptr.weights @ (1.0 - np.abs(Y @ psi0.conj()) ** 2))
        return q, leak

    q, leak = run(steps)
    converged = True
    if check_convergence:
        q2, leak2 = run(2 * steps)
        converged = abs(q2 - q) <= CONVERGENCE_TOL and abs(leak2 - leak) <= CONVERGENCE_TOL
    return MeasurementRecord(
        q_shift_mean=q,
        p_shift_mean=0.0,
        reading=complex(q),
        leakage=max(leak, 0.0),
        converged=converged,
        extras={"expectation": float(np.vdot(psi0, A @ psi0).real), "steps": steps},
    )
