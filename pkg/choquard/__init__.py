from ._version import __version__
from .spectral_core import Field, Grid, make_grid, frac_laplacian, riesz_convolve, gagliardo_seminorm
from .radial_riesz import RadialProfile, thim_kernel, radial_convolve, annuli_thickness, annulus_interaction
from .nonlinearity import Nonlinearity, make_nonlinearity, exponent_set, check_growth, quotient_sup
from .functionals import FunctionalContext, evaluate, grad_J, pohozaev_residual, classify_pohozaev
from .minimax_paths import PathSpec, estimate_a_n, theta_star, annuli_floor_check, asymptotic_scan
from .solvers import SolverOptions, Solution, solve_fixed_mu, solve_normalized, excited_search, psp_diagnostic
from .identity_audit import pairing_check_laplacian, pairing_check_riesz, cutoff_family, pohozaev_full_audit
from .run_conf import RunConfig, load_run_config
