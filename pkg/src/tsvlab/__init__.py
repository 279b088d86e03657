"""Two-state vectors, weak values and their protection by a large pre- and post-selected spin."""

__version__ = "0.1.0"

from .errors import (
    DeadBranch,
    DegenerateSpectrum,
    DimensionMismatch,
    NearOrthogonal,
    NoSolution,
    NotAnEigenstate,
    TSVError,
    UnderflowedBranch,
)
from .hilbert import EigenTriple, general_eig, spectral_assemble
from .kaon import KaonParams, kaon_hamiltonian, kaon_kets, kaon_overlap_check, survival_postselected_run
from .nonhermitian import (
    BiorthogonalSystem,
    EvolutionResult,
    add_measurement_term,
    adiabatic_branches,
    backward_evolve,
    effective_protector,
    evolve_nonhermitian,
    first_order_eigenvalues,
)
from .pointer import MeasurementRecord, PointerModel, adiabatic_measure_single, impulsive_measure, weak_measure_tsv
from .protection import (
    ModelSpinMap,
    ProtectionSetup,
    TomographyResult,
    build_joint_hamiltonian,
    disturbance_probability,
    model_spin,
    protected_run,
    sequential_tomography,
)
from .spin import SpinSystem, coherent, make_spin, pauli, qubit
from .tsv import TwoStateVector, WeakValue, reconstruct_qubit_tsv, spin_tsv, weak_value, weak_value_vector

__all__ = [name for name in dir() if not name.startswith("_")]
