"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import filecmp
import json

import numpy as np
import pytest

from conftest import random_hermitian, random_matrix, random_state, same_ray
from tsvlab.cli import bundled_configs, main
from tsvlab.kaon import KaonParams, kaon_kets, kaon_overlap_check
from tsvlab.nonhermitian import BiorthogonalSystem, add_measurement_term, effective_protector, evolve_nonhermitian
from tsvlab.pointer import PointerModel
from tsvlab.protection import ProtectionSetup, disturbance_probability, model_spin, protected_run, sequential_tomography
from tsvlab.spin import X_HAT, Y_HAT, Z_HAT, make_spin, pauli, pauli_component, qubit
from tsvlab.tsv import TwoStateVector, spin_tsv, weak_value, weak_value_vector

AXES = {"x": X_HAT, "y": Y_HAT, "z": Z_HAT}


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}")
        assert passed, detail

    return emit


def test_weak_value_exactness(report):
    tsv = TwoStateVector(qubit(X_HAT), qubit(Y_HAT))
    got = np.array([weak_value(s, tsv).value for s in pauli()])
    err = float(np.max(np.abs(got - [1, 1, 1j])))
    report(1, "qubit weak values (1, 1, i)", err < 1e-12, f"max error {err:.1e}")


def test_forbidden_value(report):
    xi = (X_HAT + Y_HAT) / np.sqrt(2)
    errs = []
    for N in (1, 5, 10):
        s = make_spin(N)
        op = xi[0] * s.sx + xi[1] * s.sy
        errs.append(abs(weak_value(op, spin_tsv(N, X_HAT, Y_HAT)).value - np.sqrt(2) * N))
    report(2, "45-degree spin weak value sqrt(2) N", max(errs) < 1e-10, f"max error {max(errs):.1e} over N = 1, 5, 10")


def test_weak_value_vector(report):
    errs = []
    for N in (0.5, 3, 10):
        got = np.array(weak_value_vector(make_spin(N), spin_tsv(N, X_HAT, Y_HAT)))
        errs.append(np.max(np.abs(got - [N, N, 1j * N])))
    report(3, "spin weak vector (N, N, iN)", max(errs) < 1e-10, f"max error {max(errs):.1e} over N = 1/2, 3, 10")


def test_nonhermitian_spectrum(report):
    bio = BiorthogonalSystem.decompose(effective_protector(1.0, (1, 1, 1j)))
    left = bio.bras[:, 0] / np.linalg.norm(bio.bras[:, 0])
    ok = (
        np.allclose(bio.omegas, [-1, 1], atol=1e-10)
        and same_ray(bio.kets[:, 0], qubit(X_HAT), 1e-10)
        and same_ray(left, qubit(Y_HAT), 1e-10)
    )
    report(4, "effective protector eigen-pairs", ok, f"eigenvalues {np.round(bio.omegas, 12)}")


def test_first_order_perturbation(report):
    lam, N, g = 1.0, 10, 0.01
    H0 = effective_protector(lam, (N, N, 1j * N))
    up = TwoStateVector(qubit(X_HAT), qubit(Y_HAT))
    down = TwoStateVector(qubit(-Y_HAT), qubit(-X_HAT))
    worst = 0.0
    for xi in AXES.values():
        A = pauli_component(xi)
        predicted = np.array([-lam * N + g * weak_value(A, up).value, lam * N + g * weak_value(A, down).value])
        exact = BiorthogonalSystem.decompose(add_measurement_term(H0, g, 1.0, xi=xi)).omegas
        worst = max(worst, float(np.max(np.abs(exact - predicted))))
    report(5, "first-order branch eigenvalues", worst < 1e-4, f"max residual {worst:.2e}")


def test_full_simulation_protection(report):
    errors = {}
    for N in (20, 40):
        for name, xi in AXES.items():
            s = ProtectionSetup(lam=2.0, N=N, meas_dir=xi, pointer=PointerModel.from_pmax(1.0))
            r = protected_run(s, steps=200)
            errors[N, name] = abs(r.q_shift_mean - s.expected_weak_value.real)
    at20 = max(errors[20, n] for n in AXES)
    at40 = max(errors[40, n] for n in AXES)
    ok = at20 < 0.05 and at40 < at20
    detail = ", ".join(f"{n}: {errors[20, n]:.4f}" for n in AXES) + f"; max error N=20 {at20:.4f}, N=40 {at40:.4f}"
    report(6, "protected readings at N = 20", ok, detail)


def test_disturbance_scaling(report):
    Ns = np.array([4, 8, 16, 32])
    probs = np.array([disturbance_probability(ProtectionSetup(lam=1.0, N=N), p=0.0) for N in Ns])
    slope = float(np.polyfit(np.log(Ns), np.log(probs), 1)[0])
    ok = -2.6 <= slope <= -1.4 and np.all(np.diff(probs) < 0)
    report(7, "second-branch disturbance ~ N^-2", ok, f"slope {slope:.3f}, probabilities {np.array2string(probs, precision=3)}")


def test_lambda_monotonicity(report):
    dist = {lam: protected_run(ProtectionSetup(lam=lam, N=10), steps=200).disturbance for lam in (2.0, 50.0)}
    report(8, "disturbance lower at lambda 50 than 2", dist[50.0] < dist[2.0], f"lambda=2: {dist[2.0]:.4e}, lambda=50: {dist[50.0]:.4e}")


def test_model_spin_equivalence(report):
    m = model_spin(qubit(X_HAT), qubit(Y_HAT))
    worst = 0.0
    for xi in AXES.values():
        direct = protected_run(ProtectionSetup(lam=2.0, N=20, meas_dir=xi), steps=200, check_convergence=False)
        via = protected_run(m.setup(2.0, 20, pauli_component(xi)), steps=200, check_convergence=False)
        for attr in ("q_shift_mean", "p_shift_mean", "postselect_prob", "disturbance", "fidelity_forward", "fidelity_backward"):
            worst = max(worst, abs(getattr(direct, attr) - getattr(via, attr)))
    report(9, "model spin reproduces direct scheme", worst < 1e-6, f"max output difference {worst:.1e}")


def test_biorthogonal_round_trip(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(200):
        d = 2 + k % 5
        M = random_matrix(rng, d)
        worst = max(worst, float(np.max(np.abs(BiorthogonalSystem.decompose(M).assemble() - M))))
    norm_dev = max(
        abs(evolve_nonhermitian(random_hermitian(rng, d), random_state(rng, d), t).norm_factor - 1)
        for d in range(2, 7)
        for t in (0.5, 3.0, 40.0)
    )
    ok = worst < 1e-8 and norm_dev < 1e-12
    report(10, "assemble(decompose(M)) = M", ok, f"max residual {worst:.1e}; Hermitian norm_factor deviation {norm_dev:.1e}")


def test_kaon_relation(report):
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(1000):
        eps = complex(*rng.uniform(-0.07, 0.07, size=2))
        gamma_l = rng.uniform(1e-4, 0.9)
        p = KaonParams(m_L=rng.uniform(-1, 1), m_S=rng.uniform(-1, 1), gamma_L=gamma_l, gamma_S=1.0, epsilon=eps)
        chk = kaon_overlap_check(p)
        worst = max(worst, abs(chk.forward_backward_overlap - chk.predicted))
    k_l, k_s = kaon_kets(KaonParams(epsilon=0.0))
    orth = abs(np.vdot(k_s, k_l))
    ok = worst < 1e-9 and orth < 1e-15
    report(11, "kaon bra/ket overlap relation", ok, f"max residual {worst:.1e} over 1000 draws; CP-conserving overlap {orth:.1e}")


def test_tomography(report):
    s = ProtectionSetup(lam=5.0, N=25, pointer=PointerModel.from_pmax(0.5))
    res = sequential_tomography(s, steps=200)
    ok = res.fidelity_forward > 0.99 and res.fidelity_backward > 0.99
    report(12, "sequential tomography", ok, f"fidelities {res.fidelity_forward:.5f}, {res.fidelity_backward:.5f}")


def test_determinism(report, tmp_path):
    mismatched = []
    for name, path in sorted(bundled_configs().items()):
        scenario = json.loads(path.read_text())["scenario"]
        outs = []
        for k in range(2):
            out = tmp_path / f"{name}.{k}"
            assert main([scenario, "--config", str(path), "--output", str(out)]) == 0
            outs.append(out)
        if not filecmp.cmp(*outs, shallow=False):
            mismatched.append(name)
    report(13, "byte-identical reruns", not mismatched, f"{len(bundled_configs())} configs, mismatched: {mismatched or 'none'}")
