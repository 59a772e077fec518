"""PSO solvers for the dynamic VRP and a linear hyper-heuristic that picks one."""

from .domain import (FeasibilityReport, FleetSpec, ProblemInstance, Request, Solution,
                     ValidationError, check_feasibility, route_length, solution_cost)
from .dynamics import CommitmentState, FrozenSnapshot, SliceClock, advance, freeze, run_day
from .features import FeatureVector, GapResult, extract_features, gap_statistic, sample_skewness
from .harness import (ComparisonRow, InstanceSummary, RunRecord, batch_solve, emit_report,
                      loocv_experiment, welch_t_test)
from .instance_io import generate_instance, parse_instance, read_instance, serialize_instance
from .local_search import RouteView, greedy_insert, nearest_neighbor_baseline, two_opt
from .memso import MemsoConfig, MemsoSolver, memso_fitness, memso_optimize, memso_transfer
from .pso import SwarmConfig, step_continuous, step_discrete
from .selector import SelectorModel, TrainingRow, choose_solver, fit_ols, stepwise_aic
from .twompso import (TwoMpsoConfig, TwoMpsoSolver, decode_division, phase1_fitness,
                      phase2_fitness, two_mpso_optimize, two_mpso_transfer)

__version__ = "0.1.0"
