"""Homogenized coefficients of random conductance models on the lattice.

Two estimator families for the effective matrix A_hom of a discrete elliptic
operator with random edge conductances: corrector-equation solvers on finite
boxes and tori (Dirichlet, regularized-and-filtered, periodic), and Monte
Carlo over random walks among the conductances (mean-square displacement and
smooth functionals of the rescaled endpoint). The analysis layer decomposes
the error of either family into statistical and systematic parts, fits
log-log convergence rates, and sizes (N, k) budgets for a target accuracy.

Everything is deterministic given a master seed: environments are pure
functions of (seed, edge), walks of (seed, walk index), so results are
reproducible bit-for-bit at any worker count.
"""

from .analysis import (AggregateStats, BudgetPlan, ErrorDecomposition,
                       RateFit, SampleSet, aggregate, decompose_error,
                       fit_rate, partial_triples, plan_budget)
from .config import ExperimentConfig, Reference, parse_config
from .corrector import (DEFAULT_TOL, CorrectorField, EstimateSample, Mask,
                        cg_solve, default_filter_side, default_mu,
                        estimate_dirichlet, estimate_periodic,
                        estimate_regularized, local_drift, make_mask,
                        solve_dirichlet, solve_periodic, unit_vector)
from .environment import (BUILTIN_CELLS, Bernoulli, BoxEnvironment,
                          DiscreteList, EdgeId, EnvironmentSpec, IID, Islands,
                          LazyEnvironment, PeriodicCell, PeriodicEnvironment,
                          Uniform, asym3_cell, conductance,
                          explicit_cell_environment, periodize_space,
                          read_cell_csv, sample_box, sample_periodic_law,
                          write_edges_csv)
from .errors import (CapabilityError, ConfigurationError, DomainError,
                     InsufficientDataError, SolverError)
from .experiment import (PointResult, compute_fits, read_results_csv,
                         run_experiment, write_fits_csv, write_results_csv)
from .rwre import (Gaussian, Indicator, McEstimate, SinFirstCoord,
                   SquareDisplacement, WalkOutcome, WalkState,
                   estimate_functional, estimate_msd, limiting_variance,
                   run_walk, step)

__version__ = "0.1.0"
