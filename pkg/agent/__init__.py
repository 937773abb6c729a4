from agent.lstm_policy import (
    RunningStandardizer,
    PolicyParams,
    AgentState,
    Observation,
    KnobDistribution,
    ActionDistribution,
    SampledAction,
    init_params,
    policy_step,
    sample_action,
    greedy_action,
    greedy_raw,
    log_prob_of,
    trajectory_grad,
    trajectory_objective,
    check_policy_matches_space,
)
from agent.gradient_check import numeric_grad, flatten_grads, max_relative_error, random_case, check_case
