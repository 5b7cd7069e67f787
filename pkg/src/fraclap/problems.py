"""Benchmark problems for ``u_t = -kappa (-Laplacian)^(alpha/2) u + f(x, t, u)``
with homogeneous Dirichlet data, and their method-of-lines discretizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .integrator import (
    BandedPairStiff,
    DenseStiff,
    RationalStiff,
    SemiLinearSystem,
    StepperConfig,
    ThetaIntegrator,
)
from .operators import DiscreteLaplacian, laplacian_1d, laplacian_2d
from .oracle import (
    dense_frac_power_matrix,
    exact_solution_example1,
    exact_solution_example3,
    exact_solution_example4,
    example4_modes,
)
from .rational import RationalOperator, assemble_mk, build_coeffs, tau_opt

__all__ = [
    "ProblemDefinition",
    "Discretization",
    "example1",
    "example2",
    "example3",
    "example4",
    "get_example",
    "generic_problem",
    "RunSetup",
    "build_from_config",
    "discretize",
    "mt_system",
    "rational_system",
    "solve",
    "EXAMPLES",
]


@dataclass(frozen=True)
class ProblemDefinition:
    """Fractional reaction-diffusion problem on ``(0, length)`` or the unit square.

    Callables take mesh coordinates ``x`` (1-D array) or ``(x, y)`` (pair of
    arrays of equal shape). ``forcing(x, t, u)`` may ignore ``u``.
    """

    name: str
    dimension: int
    alpha: float
    kappa: float
    initial: Callable
    length: float = 1.0
    forcing: Callable | None = None
    forcing_jacobian: Callable | None = None
    forcing_depends_on_u: bool = False
    forcing_affine: bool = False
    exact: Callable | None = None
    defaults: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {self.dimension}")
        if not 1.0 < self.alpha <= 2.0:
            raise DomainError(f"alpha must lie in (1, 2], got {self.alpha}")
        if self.kappa <= 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")

    @property
    def beta(self):
        return self.alpha / 2.0


def example1(alpha=1.8, kappa=0.25) -> ProblemDefinition:
    """No forcing on ``(0, pi)``, ``u0 = x**2 (pi - x)``; exact sine series known."""
    return ProblemDefinition(
        name="example1", dimension=1, alpha=alpha, kappa=kappa, length=math.pi,
        initial=lambda x: x ** 2 * (math.pi - x),
        exact=lambda x, t: exact_solution_example1(x, t, alpha, kappa),
        defaults={"N": 200, "k": 2, "t_end": 0.4},
    )


def example2(alpha=1.9, kappa=0.25) -> ProblemDefinition:
    """No forcing on ``(0, pi)``, ``u0 = sin(4x)``; compared against matrix transfer only."""
    return ProblemDefinition(
        name="example2", dimension=1, alpha=alpha, kappa=kappa, length=math.pi,
        initial=lambda x: np.sin(4.0 * x),
        defaults={"N": 500, "k": 3, "t_end": 0.3, "alphas": (1.1, 1.9)},
    )


def _example3_forcing(alpha, kappa):
    g3 = math.gamma(3.0 - alpha)
    g4 = math.gamma(4.0 - alpha)
    g5 = math.gamma(5.0 - alpha)
    pref = kappa / (2.0 * math.cos(alpha * math.pi / 2.0))

    def forcing(x, t, u=None):
        x = np.asarray(x, dtype=float)
        if t == 0.0:
            return np.zeros_like(x)
        y = 1.0 - x
        spatial = (
            2.0 / g3 * (x ** (2 - alpha) + y ** (2 - alpha))
            - 12.0 / g4 * (x ** (3 - alpha) + y ** (3 - alpha))
            + 24.0 / g5 * (x ** (4 - alpha) + y ** (4 - alpha))
        )
        return pref * t ** alpha * spatial + alpha * t ** (alpha - 1) * x ** 2 * y ** 2

    return forcing


def example3(alpha=1.7, kappa=2.0) -> ProblemDefinition:
    """Forced problem on ``(0, 1)`` with exact solution ``t**alpha x**2 (1-x)**2``.

    The forcing is built from Riemann-Liouville derivatives of the
    polynomial extended by zero, i.e. the Riesz form of the operator.
    """
    return ProblemDefinition(
        name="example3", dimension=1, alpha=alpha, kappa=kappa, length=1.0,
        initial=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        forcing=_example3_forcing(alpha, kappa),
        exact=lambda x, t: exact_solution_example3(x, t, alpha),
        defaults={"N": 400, "k": 5, "t_end": 0.5, "ks": (1, 3, 5)},
    )


def _example4_forcing(alpha, kappa):
    def forcing(xy, t, u):
        x, y = xy
        s3 = np.sin(np.pi * x) ** 3 * np.sin(np.pi * y) ** 3
        out = -kappa * np.asarray(u, dtype=float)
        if t == 0.0:
            return out
        series = sum((1.0 + mu ** (alpha / 2.0)) * v for v, mu in example4_modes(x, y))
        return out + t ** alpha * kappa / 16.0 * series + alpha * t ** (alpha - 1) * s3

    return forcing


def example4(alpha=1.5, kappa=10.0) -> ProblemDefinition:
    """Two-dimensional reaction-diffusion with reaction ``-kappa u`` on the unit square."""
    return ProblemDefinition(
        name="example4", dimension=2, alpha=alpha, kappa=kappa, length=1.0,
        initial=lambda xy: np.zeros_like(np.asarray(xy[0], dtype=float)),
        forcing=_example4_forcing(alpha, kappa),
        forcing_jacobian=lambda xy, t, u: -kappa,
        forcing_depends_on_u=True,
        forcing_affine=True,
        exact=lambda xy, t: exact_solution_example4(xy[0], xy[1], t, alpha),
        defaults={"N": 40, "k": 7, "t_end": 1.0},
    )


def generic_problem(dimension=1, alpha=1.5, kappa=1.0) -> ProblemDefinition:
    """Unforced decay of the first sine mode on the unit interval or square.

    The exact solution is ``exp(-kappa * (d pi**2)**(alpha/2) t) u0``.
    """
    mu = dimension * math.pi ** 2

    if dimension == 1:
        def initial(x):
            return np.sin(np.pi * np.asarray(x, dtype=float))
    else:
        def initial(xy):
            return np.sin(np.pi * xy[0]) * np.sin(np.pi * xy[1])

    return ProblemDefinition(
        name=f"generic{dimension}d", dimension=dimension, alpha=alpha, kappa=kappa,
        initial=initial,
        exact=lambda mesh, t: math.exp(-kappa * mu ** (alpha / 2) * t) * initial(mesh),
        defaults={"N": 100 if dimension == 1 else 20, "k": 8, "t_end": 0.1},
    )


EXAMPLES = {1: example1, 2: example2, 3: example3, 4: example4}


def get_example(example_id, alpha=None, kappa=None) -> ProblemDefinition:
    """Example by number with optional parameter overrides."""
    try:
        factory = EXAMPLES[int(example_id)]
    except (KeyError, ValueError):
        raise DomainError(f"unknown example {example_id!r}; choose from 1-4") from None
    kwargs = {}
    if alpha is not None:
        kwargs["alpha"] = alpha
    if kappa is not None:
        kwargs["kappa"] = kappa
    return factory(**kwargs)


@dataclass(frozen=True)
class RunSetup:
    """Everything needed to run one configuration."""

    discretization: "Discretization"
    k: int
    t_end: float
    stepper: StepperConfig


_CONFIG_KEYS = {
    "example": int, "dimension": int, "N": int, "alpha": float, "kappa": float,
    "t_end": float, "k": int, "scheme": str, "rel_tol": float, "abs_tol": float,
}


def build_from_config(config) -> RunSetup:
    """Build a run from ``key = value`` text or a mapping.

    ``example`` selects one of the benchmark problems; without it a
    :func:`generic_problem` of the given ``dimension`` is used. Missing
    keys fall back to the problem defaults.
    """
    if isinstance(config, str):
        items = {}
        for raw in config.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DomainError(f"expected 'key = value', got {raw!r}")
            items[key.strip()] = value.strip()
        config = items
    cfg = {}
    for key, value in config.items():
        if key not in _CONFIG_KEYS:
            raise DomainError(f"unknown configuration key {key!r}")
        try:
            cfg[key] = _CONFIG_KEYS[key](value)
        except ValueError:
            raise DomainError(f"bad value for {key}: {value!r}") from None
    if "example" in cfg:
        problem = get_example(cfg["example"], cfg.get("alpha"), cfg.get("kappa"))
    else:
        problem = generic_problem(cfg.get("dimension", 1), cfg.get("alpha", 1.5),
                                  cfg.get("kappa", 1.0))
    if "dimension" in cfg and cfg["dimension"] != problem.dimension:
        raise DomainError(f"{problem.name} is {problem.dimension}-dimensional")
    d = problem.defaults
    stepper = StepperConfig(
        scheme=cfg.get("scheme", "theta"),
        rel_tol=cfg.get("rel_tol", 1e-6),
        abs_tol=cfg.get("abs_tol", 1e-10),
    )
    return RunSetup(discretize(problem, cfg.get("N", d["N"])), cfg.get("k", d["k"]),
                    cfg.get("t_end", d["t_end"]), stepper)


@dataclass
class Discretization:
    """A problem bound to a uniform interior mesh."""

    problem: ProblemDefinition
    laplacian: DiscreteLaplacian
    mesh: object

    @property
    def h(self):
        return self.laplacian.h

    @property
    def scale(self):
        """``kappa / h**alpha`` multiplying the fractional matrix."""
        return self.problem.kappa / self.h ** self.problem.alpha

    @property
    def n(self):
        return self.laplacian.n

    def initial_vector(self):
        return np.asarray(self.problem.initial(self.mesh), dtype=float).reshape(-1)

    def exact_vector(self, t):
        if self.problem.exact is None:
            raise DomainError(f"{self.problem.name} has no exact solution")
        return np.asarray(self.problem.exact(self.mesh, t), dtype=float).reshape(-1)

    def forcing_function(self):
        p = self.problem
        if p.forcing is None:
            return None
        mesh = self.mesh

        def f(t, u):
            return np.asarray(p.forcing(mesh, t, _shape(u, mesh)), dtype=float).reshape(-1)

        return f

    def jacobian_function(self):
        p = self.problem
        if p.forcing_jacobian is None:
            return None
        mesh = self.mesh

        def jac(t, u):
            J = p.forcing_jacobian(mesh, t, _shape(u, mesh))
            return J if np.ndim(J) == 0 else np.asarray(J, dtype=float).reshape(-1)

        return jac


def _shape(u, mesh):
    if isinstance(mesh, tuple):
        return np.asarray(u).reshape(mesh[0].shape)
    return u


def discretize(problem: ProblemDefinition, N: int) -> Discretization:
    """Uniform mesh with ``N`` interior points per direction, ``h = length / (N + 1)``."""
    if problem.dimension == 1:
        L = laplacian_1d(N, problem.length)
        mesh = L.h * np.arange(1, N + 1)
    else:
        L = laplacian_2d(N)
        x = L.h * np.arange(1, N + 1)
        mesh = tuple(np.meshgrid(x, x, indexing="ij"))
    return Discretization(problem, L, mesh)


def _system(disc, linear):
    p = disc.problem
    return SemiLinearSystem(
        linear=linear,
        u0=disc.initial_vector(),
        forcing=disc.forcing_function(),
        jacobian=disc.jacobian_function(),
        forcing_depends_on_u=p.forcing_depends_on_u,
        affine=p.forcing_affine,
    )


def mt_system(disc: Discretization) -> SemiLinearSystem:
    """Matrix transfer system with the dense ``L**(alpha/2)``."""
    A = dense_frac_power_matrix(disc.laplacian, disc.problem.beta)
    return _system(disc, DenseStiff(A, disc.scale))


def rational_system(disc: Discretization, k: int, form: str = "pole") -> SemiLinearSystem:
    """System with ``L**(alpha/2)`` replaced by its ``k``-point rational approximant.

    ``form="pole"`` applies the approximant in partial fractions and inverts
    implicit stages through their real poles (banded shifted solves only);
    ``form="mk"`` integrates the banded mass/stiffness pair ``(M, K)``
    directly, which loses accuracy as ``k`` grows because ``M`` becomes
    ill-conditioned.
    """
    L = disc.laplacian
    R = build_coeffs(k, disc.problem.beta, tau_opt(L.lambda_min, L.lambda_max))
    if form == "pole":
        linear = RationalStiff(RationalOperator(R, L), disc.scale)
    elif form == "mk":
        linear = BandedPairStiff(assemble_mk(R, L), disc.scale)
    else:
        raise DomainError(f"unknown rational form {form!r}")
    return _system(disc, linear)


def solve(disc: Discretization, mode: str, k: int | None = None,
          config: StepperConfig = StepperConfig(), snapshots=None, t_end=None,
          form: str = "pole"):
    """Integrate with ``mode`` in ``{"rational", "mt"}``; returns a Trajectory."""
    t_end = disc.problem.defaults.get("t_end", 1.0) if t_end is None else t_end
    if mode == "mt":
        system = mt_system(disc)
    elif mode == "rational":
        if k is None:
            k = disc.problem.defaults.get("k", 3)
        system = rational_system(disc, k, form)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return ThetaIntegrator(system, config).integrate(t_end, snapshots)
