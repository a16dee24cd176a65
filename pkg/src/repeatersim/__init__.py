"""Desk-scale simulator of an atomic-ensemble entanglement-swapping node.

Two ensemble sources each emit a photon entangled with a stored collective
excitation; a linear-optics Bell analyzer heralds the swap that entangles
the two remote memories; storage dephasing, retrieval and polarization
analysis close the loop with CHSH, visibility and fidelity statistics.
An exact density-operator engine and a seeded Monte Carlo engine
cross-validate each other.
"""

from .analysis import (
    CHSHResult,
    CorrelationEstimate,
    FidelityEstimate,
    VisibilityEstimate,
    chsh_s,
    correlation,
    fidelity_from_settings,
    visibility,
    werner_chsh_threshold,
)
from .config import ConfigError, ExperimentConfig, ResultRecord, config_digest, load_config
from .exact import ExactReport, StationParams, run_exact
from .mc import CountsRow, CountsTable, run_monte_carlo
from .optics import Analyzer, BSMStation, ClickPattern, Detector
from .protocol import (
    MemoryChannel,
    NodePhase,
    NoEventError,
    PrecisionEstimate,
    SwapRecord,
    decohere_memory,
    entanglement_swap_exact,
    estimate_local_precision,
    false_event_fraction,
)
from .qstate import (
    DensityOperator,
    LabeledState,
    LinearMap,
    ModeLabel,
    NumericalError,
    RegisterError,
    apply,
    bosonic_mode,
    expectation,
    fidelity_pure,
    measure_project,
    partial_trace,
    qubit_mode,
    tensor,
)
from .source import AtomPhotonState, EnsembleParams, combine_anti_stokes, retrieve, write_joint_state
from .timing import EventLog, TimingConfig, attempt_rate, schedule

__version__ = "0.1.0"
