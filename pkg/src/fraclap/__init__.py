"""Rational approximation of the discrete fractional Laplacian for
fractional-in-space reaction-diffusion problems.

``L**beta`` (``0 < beta < 1``) is approximated by a Gauss-Jacobi
quadrature of its Stieltjes integral form, giving
``R_k(L) = L sum_j gamma_j (eta_j I + L)**-1`` with positive poles, so every
application or implicit solve reduces to shifted banded solves.
"""

from .errors import DomainError, NumericalError, PoleError, StepFailure
from .integrator import (
    SemiLinearSystem,
    StepperConfig,
    ThetaIntegrator,
    Trajectory,
    integrate,
    step,
    step_by_step_difference,
)
from .operators import BandedMatrix, DiscreteLaplacian, laplacian_1d, laplacian_2d
from .oracle import dense_frac_power_apply, dense_frac_power_matrix, spectral_decomposition
from .problems import (
    ProblemDefinition,
    discretize,
    example1,
    example2,
    example3,
    example4,
    get_example,
    mt_system,
    rational_system,
    solve,
)
from .quadrature import fractional_weight, gauss_jacobi, jacobi_recurrence
from .rational import (
    RationalCoeffs,
    RationalOperator,
    apply_rational,
    assemble_mk,
    build_coeffs,
    convergence_factor,
    ellipse_radius,
    epsilon_k,
    error_bound,
    eval_scalar,
    pole_distance,
    select_k,
    tau_opt,
)

__version__ = "0.1.0"
