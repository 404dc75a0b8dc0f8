"""Numerical toolkit for the fully nonlinear free-boundary problem F(D^2 u) = -chi_{u>0}:
monotone solvers for maximal solutions, free-boundary geometry, singular-point
stratification and conical blow-ups."""

__version__ = "0.1.0"

from .operators import (CheckReport, ConfigurationError, InvalidInputError, OperatorSpec, bellman_eval,
                        check_ellipticity, check_homogeneity, pucci_minus, pucci_plus)
from .grid import DirichletData, Disc, Grid, GridField
from .solver import (AnisotropyError, IterationLimitError, MaximalSolution, PenaltySchedule, beta_eps,
                     discretize_hessian, exact_radial_solution, solve_maximal, solve_penalized)
from .barriers import verify_doubling_barrier, verify_nondegeneracy_barrier
from .geometry import (FlatnessResult, PointSet, QuadraticForm, extract_free_boundary, flatness, gradient,
                       hausdorff, h_min, sample_cone, singular_points)
from .stratify import (GrowthProfile, JunctionResult, PointClassification, StructureError,
                       classify_singular_points, dichotomy_check, growth_profile, junction_arcs,
                       monotonicity_probe)
from .cone import (BlowupResult, PolarField, SectorSpec, blowup, blowup_sequence, check_doubling,
                   check_two_sided_bound, homogeneity_exponent, lemma_v0, solve_cone_dirichlet)
from .io import FormatError, RunConfig, read_ufbg, write_ufbg
