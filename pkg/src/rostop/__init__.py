"""Solver toolkit for stochastic optimal stopping via robust optimization.

Simulate sample paths, build the sampled robust problem, solve it exactly
(enumeration, branch-and-bound, MILP export) or approximately (maximal
closure via max-flow), and run the train/validate/test selection pipeline
against a Longstaff-Schwartz regression baseline.
"""

from .baseline_ls import BasisSpec, LSPolicy, apply_ls, evaluate_ls, fit_ls, ls_stop_times
from .core import (NEVER, BarrierCallReward, IdentityReward, MeanEstimate,
                   RewardMatrix, SamplePathSet, SigmaPolicy, StoppingRule,
                   TableReward, apply_policy, evaluate_policy, ip_objective,
                   materialize_policy, reward_matrix, stop_times)
from .errors import (BudgetExhaustedError, ConfigError, EnumerationCapError,
                     ParameterError, RegressionError, RostopError)
from .exact import ExactSolution, export_milp, solve_bnb, solve_enumeration
from .heuristic import HeuristicSolution, build_hbar, solve_heuristic
from .instance import (KappaTable, RobustInstance, build_instance, intersects,
                       load_instance, save_instance)
from .maxflow import (INFINITE_CAPACITY, ClosureProblem, ClosureResult,
                      FlowGraph, MaxFlowResult, max_flow, maximal_closure,
                      write_dot)
from .pipeline import (PipelineConfig, PipelineReport, PipelineRow,
                       best_epsilon_curve, run_pipeline, simulate_process)
from .scenarios import (BumpParams, GbmBarrierParams, ThreePointParams,
                        UniformParams, derive_seed, read_paths_csv,
                        read_rewards_csv, simulate_bump, simulate_gbm_barrier,
                        simulate_threepoint, simulate_uniform, write_paths_csv,
                        write_rewards_csv)

__version__ = "0.1.0"
