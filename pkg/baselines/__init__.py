from baselines.common import BaselineBudget, OptimizationResult, EvaluationTracker, BudgetExhausted
from baselines.powell import powell, golden_section, feasible_interval
from baselines.tpe import TpeConfig, ParzenEstimator, split_history, build_estimators, propose, tpe
from baselines.random_search import random_search
