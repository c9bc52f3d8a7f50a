"""Steady states, equilibria and certificates for random-matching games with erasable records."""
from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    ErasableRecordsError,
    NoDominantAction,
    NonConvergence,
    NonPositiveParameter,
    NotCertified,
    NotSubmodular,
    StateSpaceMismatch,
    SupportShifts,
    VerificationFailure,
)
from .game import (
    Modularity,
    MonitoringStructure,
    PopulationParams,
    PrisonersDilemmaParams,
    StageGame,
    make_prisoners_dilemma,
    non_shifting_support,
    perfect_monitoring,
    strictly_dominant_action,
)
from .records import (
    RecordAutomaton,
    RoleStrategy,
    StrategyProfile,
    build_kernel,
    junior_senior_automaton,
    self_consistent_distribution,
    stationary_distribution,
)
from .values import ValueFunction, best_response_value, incentive_gap, policy_value, secure_defection_payoff
from .junior_senior import JuniorSeniorEquilibrium, feasibility_interval, mu0_of_q, solve, verify
from .bounds import theorem1_constants, theorem1_upper_bound, band_decomposition_and_chain, theorem4_certificate
from .purification import ShockSpec, PerturbedEquilibrium, perturbed_fixed_point, purification_check
from .sim import SimConfig, SimResult, run, compare

__version__ = "0.1.0"
