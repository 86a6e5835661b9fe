"""Distributed multi-view compressive phase retrieval: simulator and solvers.

The pipeline recovers each sensor's partially observed sparse signal from
magnitude-squared compressed measurements corrupted by sparse outliers,
without any device sharing raw data: devices report zero-count scores, the
server fuses a global support estimate and majority-votes component
amplitudes from private-row ratios, and each device finishes with a ternary
sign/mask solve.
"""
from .amplitude import (AmplitudeEstimate, RatioBundle, cluster_ratios,
                        device_ratios, majority_amplitude, recover_amplitudes)
from .disjunct import (DisjunctReport, GroupPartition, build_disjunct_report,
                       conditional_private_counts, effective_t,
                       partition_devices, stack_group, support_conditional_t,
                       verify_disjunct_exact)
from .errors import InfeasibleSizeError, InvalidConfigError, NoEvidenceError
from .harness import (SUCCESS_REL_ERR, SweepRow, SweepTable, TrialResult,
                      desk_config, emit_csv, relative_error_up_to_sign,
                      run_trial, run_trial_on, sweep)
from .localsolve import (K_MAX_EXHAUSTIVE, SolveOptions, TernarySolution,
                         WeightedMatrix, assemble_local_signal,
                         build_weighted_matrix, canonical_sign, is_connected,
                         solve_l0_exhaustive, solve_l1_projected,
                         ternary_candidates, ternary_l1_objective)
from .netsim import (Message, NetworkTrace, ProtocolOptions, ProtocolResult,
                     audit_trace, comm_cost, run_protocol, trace_to_jsonl)
from .scenario import (DeviceView, GlobalSignal, Scenario, ScenarioConfig,
                       gen_global_signal, gen_mask, gen_outliers,
                       gen_sensing_matrix, measure, make_device_view,
                       scenario_from_dict, scenario_to_dict, sigma_from_nsr_db,
                       split_measurements, synthesize_scenario, with_seed)
from .support import (ConditionReport, ScoreVector, check_recovery_conditions,
                      default_eta, fuse_support, local_scores)

__version__ = "0.1.0"
