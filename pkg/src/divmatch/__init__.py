"""Real-time diverse team formation as streaming submodular matching."""

from .core import (
    Attribute,
    AttributeSet,
    DivmatchError,
    Edge,
    Instance,
    InvalidInstance,
    KnapsackSpec,
    MatchState,
    Person,
    TeamSpec,
    uniform_instance,
    validate,
)
from .metrics import RunReport, build_report, entropy_gain, pod_num, pod_util, team_entropy
from .objective import cluster_marginal_sequence, marginal_gain, team_value, total_value
from .optimum import (
    RelaxationResult,
    ThresholdPolicy,
    compute_df_quota,
    policy_for_quota,
    quota_policy,
    solve_relaxation,
    verify_relaxation,
)
from .oracle import OracleResult, SearchSpaceTooLarge, brute_force_offline, fcfs_baseline, offline_greedy
from .stream import ArrivalDecision, Engine, new_engine, process_arrival, run_stream

__version__ = "0.1.0"

__all__ = [
    "ArrivalDecision",
    "Attribute",
    "AttributeSet",
    "DivmatchError",
    "Edge",
    "Engine",
    "Instance",
    "InvalidInstance",
    "KnapsackSpec",
    "MatchState",
    "OracleResult",
    "Person",
    "RelaxationResult",
    "RunReport",
    "SearchSpaceTooLarge",
    "TeamSpec",
    "ThresholdPolicy",
    "brute_force_offline",
    "build_report",
    "cluster_marginal_sequence",
    "compute_df_quota",
    "entropy_gain",
    "fcfs_baseline",
    "marginal_gain",
    "new_engine",
    "offline_greedy",
    "pod_num",
    "pod_util",
    "policy_for_quota",
    "process_arrival",
    "quota_policy",
    "run_stream",
    "solve_relaxation",
    "team_entropy",
    "team_value",
    "total_value",
    "uniform_instance",
    "validate",
    "verify_relaxation",
]
