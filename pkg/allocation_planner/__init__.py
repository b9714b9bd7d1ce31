"""Batch adaptive experimentation: Gaussian posterior dynamics and residual horizon planning."""

from .config import CONFIGS_DIR, OUTPUT_DIR, load_config
from .errors import ConfigError, NonFiniteError, PlannerError
from .model import ContextSet, LossFamily, ModelSpec, fit_batch, information_matrices
from .objectives import ObjectiveSpec, apply_constraints, final_decision, realized_regret
from .planner import AllocationPlan, OptimizerConfig, pathwise_gradient, rho_policy_step, solve_plan
from .posterior import HorizonSpec, PosteriorState, simulate_transition, update
from .baselines import dts_alloc, ts_assign, ttts_assign, uniform_alloc
from .simulator import Environment, gen_asos_like, gen_linear_contextual, run_batch
from .harness import BenchConfig, pareto_sweep, quantile_report, run_bench, run_episode

__all__ = [
    'CONFIGS_DIR',
    'OUTPUT_DIR',
    'load_config',
    'ConfigError',
    'NonFiniteError',
    'PlannerError',
    'ContextSet',
    'LossFamily',
    'ModelSpec',
    'fit_batch',
    'information_matrices',
    'ObjectiveSpec',
    'apply_constraints',
    'final_decision',
    'realized_regret',
    'AllocationPlan',
    'OptimizerConfig',
    'pathwise_gradient',
    'rho_policy_step',
    'solve_plan',
    'HorizonSpec',
    'PosteriorState',
    'simulate_transition',
    'update',
    'dts_alloc',
    'ts_assign',
    'ttts_assign',
    'uniform_alloc',
    'Environment',
    'gen_asos_like',
    'gen_linear_contextual',
    'run_batch',
    'BenchConfig',
    'pareto_sweep',
    'quantile_report',
    'run_bench',
    'run_episode',
]
