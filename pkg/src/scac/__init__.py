"""Single-time-scale online actor-critic for average-reward MDPs, with exact oracles."""
from .actor_critic import (AgentState, AlgoConfig, RunStreams, ScheduleSpec, advance,
                           algorithm1_step, baseline_two_timescale_step, project_weights,
                           step_size)
from .errors import (ConditioningError, ErgodicityError, NumericalFailure, ParameterError,
                     ScacError)
from .harness import (BatchSummary, PairedSummary, RunRecord, compare_algorithms,
                      export_records, import_records, run_batch, run_single)
from .mdp import (ChainReport, GarnetSpec, Mdp, garnet_generate, sample_step,
                  transition_under_policy, validate_chain)
from .oracle import (OracleBundle, average_reward, check_negative_definite, compute_bundle,
                     critic_ode_quantities, differential_value, gradient_exact,
                     projected_weights_and_error, stationary_distribution, td_exact,
                     td_fixed_point)
from .policy import (FeatureSet, PolicyParams, action_feature, build_feature_set,
                     likelihood_ratio, policy_distribution, sample_action)

__version__ = "0.1.0"
