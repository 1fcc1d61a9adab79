"""Energy-harvesting cognitive radio: sub-channel allocation and harvesting-ratio
optimisation for secondary users under primary-user interference limits."""

from .allocation import (allocate_baseline, allocate_efm, efm_factor, initial_theta,
                         initial_thetas, satisfied_rt_count, user_rates)
from .errors import (ConfigError, DegenerateInputError, DomainError, InfeasibleThetaError,
                     InfeasibleUserError, NoSolutionError, OracleSizeError,
                     PreconditionError, UsageError)
from .experiments import (EXPERIMENTS, ExperimentResult, read_results, run_experiment,
                          write_results)
from .model import (Allocation, PrimaryUser, Scenario, SecondaryUser, SensingModel,
                    SystemParams, TrafficClass, evaluate_constraints, feasible_interval,
                    snr_gap, sum_rate, total_rate, transmit_power)
from .oracle import GridSpec, constrained_grid_solve, exhaustive_allocation, grid_theta_optimum
from .scenario import (ScenarioConfig, generate_scenario, read_config, read_scenario,
                       write_config, write_scenario)
from .structopt import (SolveReport, SolverConfig, StepSchedule, closed_form_theta,
                        dual_subgradient_solve, per_su_theta_optimize, solve_closed_form)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "ConfigError", "DegenerateInputError", "DomainError", "EXPERIMENTS",
    "ExperimentResult", "GridSpec", "InfeasibleThetaError", "InfeasibleUserError",
    "NoSolutionError", "OracleSizeError", "PreconditionError", "PrimaryUser", "Scenario",
    "ScenarioConfig", "SecondaryUser", "SensingModel", "SolveReport", "SolverConfig",
    "StepSchedule", "SystemParams", "TrafficClass", "UsageError", "allocate_baseline",
    "allocate_efm", "closed_form_theta", "constrained_grid_solve", "dual_subgradient_solve",
    "efm_factor", "evaluate_constraints", "exhaustive_allocation", "feasible_interval",
    "generate_scenario", "grid_theta_optimum", "initial_theta", "initial_thetas",
    "per_su_theta_optimize", "read_config", "read_results", "read_scenario",
    "run_experiment", "satisfied_rt_count", "snr_gap", "solve_closed_form", "sum_rate",
    "total_rate", "transmit_power", "user_rates", "write_config", "write_results",
    "write_scenario",
]
