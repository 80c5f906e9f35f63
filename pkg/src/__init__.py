# src/__init__.py

# Model building blocks
from .speedup import (
    SpeedupFunction,
    AmdahlSpeedup,
    TabulatedSpeedup,
    load_tabulated,
    evaluate,
    equi_total_rate,
    amdahl_harmonic_merge,
    check_midpoint_concavity,
)
from .workload import (
    JobSizeDistribution,
    Exponential,
    Hyperexponential2,
    ShiftedPareto,
    ScaledJobSize,
    SystemConfig,
    fit_hyperexp,
    sample,
    replication_streams,
    divisors,
)
from .errors import InstabilityError, DivergenceError, ConfigError

# Analysis, simulation and MDP
from .analytic import (
    BirthDeathChain,
    ThresholdChainParams,
    ChunkMoments,
    EquiBounds,
    random_chunk_mrt,
    mixed_random_chunk_mrt,
    mixed_random_chunk_var,
    erlang_c_wait,
    jsq_mrt_approx,
    jsq_chunk_mrt,
    birth_death_solve,
    threshold_chain_mrt,
    equi_mrt,
    equi_bounds,
    critical_load_config,
    optimal_fixed_width,
    optimal_width_regions,
    stability_load,
    jsq_chunk_limit,
)
from .policies import (
    SchedulingPolicy,
    RandomChunk,
    JSQChunk,
    Random,
    MixedRandomChunk,
    Equi,
    GreedyStar,
    FixedAllocTable,
    jsq_dispatch,
    depletion_rates,
    make_policy,
)
from .simulator import SimResult, simulate, random_piece_response, paired_difference
from .mdp import (
    MdpModel,
    ValueGrid,
    PolicyTable,
    class_service_rate,
    greedy_star_allocation,
    greedy_table,
    equi_table,
    value_iteration,
    policy_evaluation,
    check_value_properties,
)

# Experiments and output
from .results import ResultRow, Difference
from .base_report import BaseReport
from .csv_report import CSVReport
from .json_report import JSONReport
from .persistence import PersistenceManager
from .config import RunConfig
from .experiment import ExperimentSpec, ExperimentRunner

__all__ = [
    "SpeedupFunction", "AmdahlSpeedup", "TabulatedSpeedup", "load_tabulated", "evaluate",
    "equi_total_rate", "amdahl_harmonic_merge", "check_midpoint_concavity",
    "JobSizeDistribution", "Exponential", "Hyperexponential2", "ShiftedPareto", "ScaledJobSize",
    "SystemConfig", "fit_hyperexp", "sample", "replication_streams", "divisors",
    "InstabilityError", "DivergenceError", "ConfigError",
    "BirthDeathChain", "ThresholdChainParams", "ChunkMoments", "EquiBounds",
    "random_chunk_mrt", "mixed_random_chunk_mrt", "mixed_random_chunk_var", "erlang_c_wait",
    "jsq_mrt_approx", "jsq_chunk_mrt", "birth_death_solve", "threshold_chain_mrt", "equi_mrt",
    "equi_bounds", "critical_load_config", "optimal_fixed_width", "optimal_width_regions",
    "stability_load", "jsq_chunk_limit",
    "SchedulingPolicy", "RandomChunk", "JSQChunk", "Random", "MixedRandomChunk", "Equi",
    "GreedyStar", "FixedAllocTable", "jsq_dispatch", "depletion_rates", "make_policy",
    "SimResult", "simulate", "random_piece_response", "paired_difference",
    "MdpModel", "ValueGrid", "PolicyTable", "class_service_rate", "greedy_star_allocation",
    "greedy_table", "equi_table", "value_iteration", "policy_evaluation", "check_value_properties",
    "ResultRow", "Difference", "BaseReport", "CSVReport", "JSONReport", "PersistenceManager",
    "RunConfig", "ExperimentSpec", "ExperimentRunner",
]

__version__ = "0.2.0"
