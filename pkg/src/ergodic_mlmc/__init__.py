"""Adaptive Euler-Maruyama and coupled-horizon multilevel Monte Carlo for
expectations under the invariant measure of ergodic SDEs."""

from .analysis import (FitResult, QuadratureSpec, WeakError, estimate_contraction,
                       estimate_moment, fit_order, invariant_expectation_1d,
                       level_statistics, weak_error_curve)
from .coupling import (CoupledBatch, CoupledSample, LevelSchedule, coupled_sample,
                       coupled_samples, level0_sample)
from .exceptions import (ConfigError, DegenerateFit, DegenerateVariance, ErgodicMlmcError,
                         MaxLevelExceeded, MissingJacobian, NonFiniteEvaluation,
                         NonFiniteState, NonIntegrable, NonPositiveValue, NotScalar,
                         OutOfRange, ScheduleTooShort)
from .mlmc import LevelStats, MlmcConfig, MlmcResult, optimal_samples, run_mlmc, t_schedule, theoretical_L
from .model import (CheckReport, GridSpec, Observable, RegularityConstants, SdeModel,
                    abs_observable, builtin_cubic_langevin, builtin_ou, check_contractivity,
                    check_diffusion_bound, check_dissipativity, check_enhanced_lipschitz,
                    identity_observable, polynomial_model, square_observable)
from .stepping import (PathBatch, PathResult, TimestepPolicy, check_lower_bound,
                       check_timestep_condition, cubic_policy, default_h_cubic,
                       default_policy, drift_scaled_h, interpolate, simulate_path,
                       simulate_paths, uniform_policy)
from .streams import RngStream

__version__ = "0.1.0"
