"""Exact simulation of a two-state vector protected by a pre- and post-selected large spin.

The joint space is ``device (x) system``.  The device is a spin N prepared
in |S_alpha = N> and post-selected on <S_beta = N|; it couples to the
system through -lam S . sigma, where sigma is either the Pauli triple of a
qubit or a "model spin" triple acting on the span of two states of a
larger system.  A pointer of momentum p measures an observable O of the
system through p g(t) (I (x) O).

Only the device is post-selected.  The system's conditional state after a
run is K(p) |Psi_1> with K(p) = (<post| (x) I) U(p) (|pre> (x) I).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import DeadBranch, NearOrthogonal
from .hilbert import as_operator, as_state, dagger, evolution_operator, fix_phase, normalize
from .pointer import MeasurementRecord, PointerModel, pointer_moments, propagate_sectors
from .spin import X_HAT, Y_HAT, Z_HAT, coherent, direction, make_spin, pauli, qubit
from .tsv import ORTHOGONALITY_EPS, TwoStateVector, reconstruct_qubit_tsv, weak_value

# conditioning on a device outcome rarer than this, relative to its
# interaction-free probability |<post|pre>|^2, is refused
DEAD_BRANCH_PROB = 1e-12
# |<post|pre>|^2 below this is not resolvable in double precision
DEVICE_OVERLAP_FLOOR = 1e-28
# ramp discretization error falls as steps^-2; at 200 steps readings move by
# ~1e-5 when the step count doubles, far below the O(1/N) protection error
PROTECTION_CONVERGENCE_TOL = 1e-3


def _default_system_tsv() -> TwoStateVector:
    return TwoStateVector(qubit(X_HAT), qubit(Y_HAT))


@dataclass(frozen=True, eq=False)
class ProtectionSetup:
    lam: float
    N: float
    pre_dir: np.ndarray = field(default_factory=lambda: X_HAT.copy())
    post_dir: np.ndarray = field(default_factory=lambda: Y_HAT.copy())
    system_tsv: TwoStateVector = field(default_factory=_default_system_tsv)
    meas_dir: np.ndarray = field(default_factory=lambda: X_HAT.copy())
    pointer: PointerModel = field(default_factory=lambda: PointerModel.from_pmax(1.0))
    duration: float = 1.0
    system_ops: tuple | None = None
    observable: np.ndarray | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.N >= 0.5:
            raise ValueError("device spin N must be >= 1/2")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        for name in ("pre_dir", "post_dir", "meas_dir"):
            object.__setattr__(self, name, direction(getattr(self, name)))
        dev = make_spin(self.N)
        object.__setattr__(self, "N", dev.j)
        if self.system_ops is not None:
            ops = tuple(as_operator(s) for s in self.system_ops)
            if len(ops) != 3 or len({s.shape for s in ops}) != 1:
                raise ValueError("system_ops must be three operators of equal dimension")
            object.__setattr__(self, "system_ops", ops)
        if self.observable is not None:
            object.__setattr__(self, "observable", as_operator(self.observable))
        if self.system_tsv.dim != self.system_dim or self.measured.shape[0] != self.system_dim:
            raise ValueError("system two-state vector, system operators and observable dims must agree")
        if self.device_baseline < DEVICE_OVERLAP_FLOOR:
            raise NearOrthogonal(
                f"device pre/post overlap^2 {self.device_baseline:.2e} is below {DEVICE_OVERLAP_FLOOR:.0e}"
            )

    def replace(self, **changes) -> "ProtectionSetup":
        return dataclasses.replace(self, **changes)

    @property
    def device(self):
        return make_spin(self.N)

    @property
    def sigma(self) -> tuple:
        return self.system_ops if self.system_ops is not None else pauli()

    @property
    def system_dim(self) -> int:
        return self.sigma[0].shape[0]

    @property
    def measured(self) -> np.ndarray:
        if self.observable is not None:
            return self.observable
        sx, sy, sz = self.sigma
        n = self.meas_dir
        return n[0] * sx + n[1] * sy + n[2] * sz

    @property
    def device_pre(self) -> np.ndarray:
        return coherent(self.N, self.pre_dir)

    @property
    def device_post(self) -> np.ndarray:
        return coherent(self.N, self.post_dir)

    @property
    def device_baseline(self) -> float:
        """|<S_beta = N|S_alpha = N>|^2 = ((1 + alpha.beta) / 2)^(2N)."""
        return float(((1.0 + self.pre_dir @ self.post_dir) / 2.0) ** (2 * self.N))

    @property
    def expected_weak_value(self) -> complex:
        return weak_value(self.measured, self.system_tsv).value


def protection_hamiltonian(setup: ProtectionSetup) -> np.ndarray:
    dev = setup.device
    return -setup.lam * sum(np.kron(s, o) for s, o in zip(dev.components, setup.sigma))


def build_joint_hamiltonian(setup: ProtectionSetup, p: float, observable=None) -> np.ndarray:
    """-lam S . sigma + p (I (x) O) on device (x) system."""
    O = setup.measured if observable is None else as_operator(observable)
    return protection_hamiltonian(setup) + p * np.kron(np.eye(setup.device.dim), O)


def _conserved(setup: ProtectionSetup, observable_dir) -> np.ndarray | None:
    """S_n + sigma_n / 2 commutes with S . sigma and with sigma_n (Pauli case only)."""
    if setup.system_ops is not None or observable_dir is None:
        return None
    dev = setup.device
    n = direction(observable_dir)
    s_n = sum(c * s for c, s in zip(n, dev.components))
    sig_n = sum(c * s for c, s in zip(n, pauli()))
    return np.kron(s_n, np.eye(2)) + np.kron(np.eye(dev.dim), sig_n / 2)


def _post_projector(setup: ProtectionSetup) -> np.ndarray:
    """<post| (x) I as a (system_dim, joint_dim) matrix."""
    return np.kron(setup.device_post.conj()[None, :], np.eye(setup.system_dim))


def _sequential_amplitudes(setup: ProtectionSetup, stages, steps_per_stage: int):
    """Sector amplitudes for consecutive measurement stages, one pointer each.

    ``stages`` is a list of (observable, direction-or-None, duration).
    Returns ``chi`` of shape (n**K, system_dim, system_dim) holding the
    system operators K(p_K, ..., p_1), the list of d chi / d p_k, and the
    flattened sector index grid (row k-1 indexes pointer k).
    """
    ptr = setup.pointer
    p, n = ptr.momenta, ptr.momenta.size
    H0 = protection_hamiltonian(setup)
    eye_dev = np.eye(setup.device.dim)
    d = H0.shape[0]
    ds = setup.system_dim
    K = len(stages)

    state = np.kron(setup.device_pre[:, None], np.eye(ds))
    derivs: list[np.ndarray] = []
    M = ds
    for obs, obs_dir, dur in stages[:-1]:
        cols = np.concatenate([state] + derivs, axis=1)
        Y, dY = propagate_sectors(
            H0, np.kron(eye_dev, obs), p, ptr.segments(steps_per_stage, dur), cols, _conserved(setup, obs_dir)
        )

        def regroup(arr):
            return arr.transpose(1, 0, 2).reshape(d, n * M)

        derivs = [regroup(Y[:, :, (1 + j) * M : (2 + j) * M]) for j in range(len(derivs))] + [regroup(dY[:, :, :M])]
        state = regroup(Y[:, :, :M])
        M *= n

    obs, obs_dir, dur = stages[-1]
    U, dU = propagate_sectors(
        H0, np.kron(eye_dev, obs), p, ptr.segments(steps_per_stage, dur), np.eye(d), _conserved(setup, obs_dir)
    )
    post = _post_projector(setup)
    W, dW = post @ U, post @ dU

    def finish(arr):
        # (n, ds, n**(K-1) * ds) -> (n**K, ds, ds), sector order (i_K, ..., i_1)
        return arr.reshape(n, ds, M // ds, ds).transpose(0, 2, 1, 3).reshape(n**K, ds, ds)

    chi = finish(W @ state)
    dchis = [finish(W @ dj) for dj in derivs] + [finish(dW @ state)]
    grid = np.indices((n,) * K).reshape(K, -1)[::-1]
    return chi, dchis, grid


def _flat_weights(w: np.ndarray, K: int) -> np.ndarray:
    out = w
    for _ in range(K - 1):
        out = np.multiply.outer(out, w).reshape(-1)
    return out


def _records(setup: ProtectionSetup, stages, steps: int):
    K = len(stages)
    ptr = setup.pointer
    chi, dchis, grid = _sequential_amplitudes(setup, stages, max(1, steps // K))
    w = _flat_weights(ptr.weights, K)
    psi1, psi2 = setup.system_tsv.forward, setup.system_tsv.backward
    fwd = chi @ psi1
    bwd = np.conj(np.einsum("i,nij->nj", psi2.conj(), chi))
    var = ptr.momentum_variance
    baseline = setup.device_baseline

    norms_f = np.sum(np.abs(fwd) ** 2, axis=1)
    prob = float(w @ norms_f)
    if prob < DEAD_BRANCH_PROB * baseline:
        raise DeadBranch(f"device post-selection probability {prob:.3e} vs baseline {baseline:.3e}")
    fid_f = float(w @ np.abs(fwd @ psi1.conj()) ** 2) / prob
    norms_b = np.sum(np.abs(bwd) ** 2, axis=1)
    fid_b = float(w @ np.abs(bwd @ psi2.conj()) ** 2) / float(w @ norms_b)

    records = []
    for k in range(K):
        _, q, p_shift = pointer_moments(fwd, dchis[k] @ psi1, ptr.momenta[grid[k]], w)
        records.append(
            MeasurementRecord(
                q_shift_mean=q,
                p_shift_mean=p_shift,
                postselect_prob=prob,
                reading=complex(q, p_shift / (2 * var)),
                disturbance=1.0 - min(fid_f, fid_b),
                fidelity_forward=fid_f,
                fidelity_backward=fid_b,
                extras={
                    "conditional_postselect_prob": prob / baseline,
                    "weak_value": weak_value(stages[k][0], setup.system_tsv).value,
                },
            )
        )
    return records


def _with_convergence(setup, stages, steps, check):
    records = _records(setup, stages, steps)
    if not check:
        return records, True
    finer = _records(setup, stages, 2 * steps)
    diff = max(abs(a.reading - b.reading) for a, b in zip(records, finer))
    diff = max(diff, max(abs(a.disturbance - b.disturbance) for a, b in zip(records, finer)))
    return records, bool(diff <= PROTECTION_CONVERGENCE_TOL)


def protected_run(setup: ProtectionSetup, steps: int = 200, check_convergence: bool = True) -> MeasurementRecord:
    """One protected measurement of ``setup.measured`` on the system.

    The joint state |S_alpha = N> (x) |Psi_1> is evolved for ``setup.duration``
    in every pointer-momentum sector, the device is post-selected on
    <S_beta = N| and the pointer moments are reassembled.  The system itself
    is not post-selected.
    """
    obs_dir = setup.meas_dir if setup.observable is None else None
    stages = [(setup.measured, obs_dir, setup.duration)]
    (record,), converged = _with_convergence(setup, stages, steps, check_convergence)
    return dataclasses.replace(record, converged=converged, extras={**record.extras, "steps": steps})


@dataclass(frozen=True, eq=False)
class TomographyResult:
    tsv: TwoStateVector
    readings: tuple[complex, complex, complex]
    records: tuple[MeasurementRecord, ...]
    fidelity_forward: float
    fidelity_backward: float
    converged: bool


def sequential_tomography(
    setup: ProtectionSetup, steps: int = 200, tol: float = 0.25, check_convergence: bool = False
) -> TomographyResult:
    """Measure the three spin components one after another on the same run.

    Each component gets a third of ``setup.duration`` with its own ramped
    coupling and its own pointer; the three complex readings are then turned
    back into a two-state vector.  ``tol`` bounds the disagreement between
    the readings and the reconstructed state's weak values.
    """
    dur = setup.duration / 3
    axes = (X_HAT, Y_HAT, Z_HAT) if setup.system_ops is None else (None, None, None)
    stages = [(op, ax, dur) for op, ax in zip(setup.sigma, axes)]
    records, converged = _with_convergence(setup, stages, steps, check_convergence)
    readings = tuple(r.reading for r in records)
    tsv = reconstruct_qubit_tsv(*readings, tol=tol)
    f_fwd, f_bwd = tsv.fidelities(setup.system_tsv)
    return TomographyResult(tsv, readings, tuple(records), f_fwd, f_bwd, converged)


def _time_nodes(n: int, duration: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) * duration / 2, w / 2


def disturbance_probability(setup: ProtectionSetup, p: float = 0.0, initial=None, target=None, n_times: int = 24) -> float:
    """Probability of finding the system in ``target`` at an intermediate time.

    The system starts in ``initial`` (default |down_beta>, the second
    protected eigen-ket), the coupling p (I (x) O) is held constant, and a
    projective test {target, not target} is made at time t.  Conditioned on
    the device post-selection at the end of the run, the outcome
    probability is

        |(<post| (x) I) U(T - t) Pi_target U(t) |pre, initial>|^2 / (sum over both outcomes)

    and it is averaged uniformly over t in (0, T) with ``n_times``
    Gauss-Legendre nodes.  The default target is |up_beta>.
    """
    if initial is None or target is None:
        if setup.system_ops is not None:
            raise ValueError("initial and target states are required for model-spin setups")
    initial = qubit(-setup.post_dir) if initial is None else normalize(initial)
    target = qubit(setup.post_dir) if target is None else normalize(target)
    H = build_joint_hamiltonian(setup, p)
    w, V = np.linalg.eigh(H)
    psi = np.kron(setup.device_pre, initial)
    eye_dev = np.eye(setup.device.dim)
    proj = np.outer(target, target.conj())
    pi_plus = np.kron(eye_dev, proj)
    pi_minus = np.kron(eye_dev, np.eye(setup.system_dim) - proj)
    post = _post_projector(setup)

    def U(t):
        return (V * np.exp(-1j * w * t)) @ V.conj().T

    ts, ws = _time_nodes(n_times, setup.duration)
    total = 0.0
    for t, wt in zip(ts, ws):
        mid = U(t) @ psi
        later = post @ U(setup.duration - t)
        plus = np.linalg.norm(later @ (pi_plus @ mid)) ** 2
        minus = np.linalg.norm(later @ (pi_minus @ mid)) ** 2
        if plus + minus < DEAD_BRANCH_PROB * setup.device_baseline:
            raise DeadBranch(f"post-selection probability {plus + minus:.3e} at t={t:.3f}")
        total += wt * plus / (plus + minus)
    return float(total)


def conditional_system_state(setup: ProtectionSetup, p: float, t: float, psi=None) -> np.ndarray:
    """Normalized system state when the device is post-selected at time ``t`` (constant p)."""
    psi = setup.system_tsv.forward if psi is None else as_state(psi)
    U = evolution_operator(build_joint_hamiltonian(setup, p), t)
    out = _post_projector(setup) @ (U @ np.kron(setup.device_pre, psi))
    return normalize(out)


def device_forward_fidelity(setup: ProtectionSetup, p: float, t: float) -> float:
    """<pre|rho_device(t)|pre> for the unselected joint forward state."""
    U = evolution_operator(build_joint_hamiltonian(setup, p), t)
    out = U @ np.kron(setup.device_pre, setup.system_tsv.forward)
    pre_proj = np.kron(setup.device_pre.conj()[None, :], np.eye(setup.system_dim))
    return float(np.linalg.norm(pre_proj @ out) ** 2)


@dataclass(frozen=True, eq=False)
class ModelSpinMap:
    """Two states of an arbitrary system recast as a spin-1/2.

    |Psi_1> plays |up_z> and the Gram-Schmidt complement |Psi_perp> plays
    |down_z>; |Psi_2> = a |Psi_1> + b |Psi_perp> is then |up_chi>.
    """

    basis: tuple[np.ndarray, np.ndarray]
    a: complex
    b: complex
    chi: np.ndarray
    sigma_tilde: tuple[np.ndarray, np.ndarray, np.ndarray]
    psi2: np.ndarray

    @property
    def tsv(self) -> TwoStateVector:
        return TwoStateVector(self.basis[0], self.psi2)

    def setup(self, lam: float, N: float, observable, pointer: PointerModel | None = None, **kwargs) -> ProtectionSetup:
        """Protection with the device pre-selected along z and post-selected along chi."""
        extra = {} if pointer is None else {"pointer": pointer}
        return ProtectionSetup(
            lam=lam,
            N=N,
            pre_dir=Z_HAT,
            post_dir=self.chi,
            system_tsv=self.tsv,
            system_ops=self.sigma_tilde,
            observable=observable,
            **extra,
            **kwargs,
        )


def model_spin(psi1, psi2, eps: float = ORTHOGONALITY_EPS) -> ModelSpinMap:
    psi1, psi2 = normalize(psi1), normalize(psi2)
    if psi1.shape != psi2.shape:
        raise ValueError("states must have the same dimension")
    a = complex(np.vdot(psi1, psi2))
    if abs(a) <= eps:
        raise NearOrthogonal(f"|<Psi_2|Psi_1>| = {abs(a):.3e}")
    rest = psi2 - a * psi1
    if np.linalg.norm(rest) > 1e-12:
        perp = rest / np.linalg.norm(rest)
    else:
        # psi2 parallel to psi1: any orthogonal completion will do
        k = int(np.argmin(np.abs(psi1)))
        e = np.zeros_like(psi1)
        e[k] = 1.0
        perp = normalize(e - np.vdot(psi1, e) * psi1)
    b = complex(np.vdot(perp, psi2))
    if abs(b) < 1e-12:
        chi = Z_HAT.copy()
    else:
        ab = np.conj(a) * b
        chi = direction([2 * ab.real, 2 * ab.imag, abs(a) ** 2 - abs(b) ** 2])
    P = np.column_stack([psi1, perp])
    sigma_tilde = tuple(P @ s @ dagger(P) for s in pauli())
    return ModelSpinMap((psi1, perp), a, b, chi, sigma_tilde, fix_phase(psi2))
