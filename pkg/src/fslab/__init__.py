"""Falkner-Skan boundary-layer laboratory.

Profiles, self-similar backgrounds, downstream marching of perturbations,
good-unknown stacks, weighted energy functionals, and decay diagnostics.
"""

from .background import (BackgroundFields, SelfSimilarBackground, VDecomposition,
                         WedgeFlow, build_background, decompose_v,
                         wedge_euler_trace, wedge_harmonicity_check)
from .fs_profile import FsParams, FsProfile, beta_from_m, m_from_beta, solve_fs
from .functionals import (FunctionalReport, WeightSet, alpha_gamma,
                          calibrate_sigma, ck_pressure, evaluate_all)
from .good_unknowns import (CompatReport, GoodUnknownStack, build_stack,
                            build_stack_from_derivatives, commutator_forcing,
                            iterate_cauchy_data, project_compatible,
                            quadratic_lower)
from .marching import (GridSpec, MarchConfig, PerturbationState,
                       init_perturbation, march_step, march_to, x_derivatives)

__version__ = "0.1.0"
