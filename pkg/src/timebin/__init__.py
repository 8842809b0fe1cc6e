"""Simulation and analysis of high-dimensional time-bin entangled photon pairs."""

from .qstate import (
    AnalyzerConfig,
    BiphotonState,
    JointOutcomeTable,
    PumpTrain,
    apply_analyzer,
    build_spdc_state,
    coincidence_rate,
    fringe_visibility,
    make_envelope_train,
    make_uniform_train,
)
from .noise import (
    MultipairRates,
    VisibilityBudget,
    analytic_visibility_d,
    budget_from_factors,
    multipair_rates,
    visibility_budget,
    visibility_misalignment,
    visibility_multipair,
    visibility_phase_noise,
)
from .records import CoincidenceHistogram, DetectionRecord, FringeScan
from .montecarlo import (
    DetectorConfig,
    ExperimentConfig,
    ideal_detectors,
    lab_detectors,
    run_experiment,
    scan_phase,
)
from .analysis import (
    FitResult,
    estimate_accidentals,
    estimate_mu_sidepeak,
    fit_fringe,
    net_visibility,
    dimension_sweep,
    multipair_sweep,
    window_counts,
)

__version__ = "0.1.0"
