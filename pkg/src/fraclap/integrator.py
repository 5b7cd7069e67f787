"""Theta-method time integration of semi-discrete systems

    M u' = -S u + M f(t, u),   u(t0) = u0,

where ``S`` is the scaled fractional operator. Three linear parts are
provided: a dense matrix with identity mass (matrix transfer), the banded
pair ``(M, c K)``, and ``c R_k(L)`` in partial-fraction form whose implicit
stages are inverted through the real poles of ``1 / (a + b R_k)``.

The forcing is assumed pointwise in ``u`` (a reaction term), so its
Jacobian is diagonal; this is what the Newton iteration uses.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, NumericalError, StepFailure
from .rational import FactorizedPower, RationalOperator

__all__ = [
    "DenseStiff",
    "BandedPairStiff",
    "RationalStiff",
    "SemiLinearSystem",
    "StepperConfig",
    "StepInfo",
    "Trajectory",
    "ThetaIntegrator",
    "step",
    "integrate",
    "step_by_step_difference",
    "write_trajectory_csv",
    "write_error_csv",
]

# smallest step fraction used by the error-per-unit-step controller
_EPUS_FLOOR = 1e-4


def _is_uniform(a):
    return np.ndim(a) == 0


class DenseStiff:
    """``S = scale * A`` with a dense symmetric ``A`` and identity mass."""

    has_mass = False

    def __init__(self, A, scale=1.0):
        self.A = np.asarray(A, dtype=float)
        self.scale = float(scale)
        self.n = self.A.shape[0]

    def mass(self, x):
        return x

    def stiff(self, x):
        return self.scale * (self.A @ x)

    def factor(self, a, b):
        """Solver for ``(diag(a) + b S) x = r``."""
        T = (b * self.scale) * self.A
        T[np.diag_indices(self.n)] += a
        lu = sla.lu_factor(T, check_finite=False)
        return lambda r: sla.lu_solve(lu, r, check_finite=False)


class BandedPairStiff:
    """Mass ``M`` and stiffness ``scale * K`` from an assembled factorization."""

    has_mass = True

    def __init__(self, power: FactorizedPower, scale=1.0):
        if not power.banded:
            raise DomainError("factorization has no banded pair; use RationalStiff")
        self.M = power.M.to_sparse("csr")
        self.K = power.K.to_sparse("csr")
        self.scale = float(scale)
        self.n = self.M.shape[0]

    def mass(self, x):
        return self.M @ x

    def stiff(self, x):
        return self.scale * (self.K @ x)

    def factor(self, a, b):
        """Solver for ``(M diag(a) + b S) x = r``."""
        Ma = self.M * a if _is_uniform(a) else self.M @ sp.diags(a)
        lu = spla.splu((Ma + (b * self.scale) * self.K).tocsc())
        return lu.solve


class RationalStiff:
    """``S = scale * R_k(L)`` applied by partial fractions, identity mass."""

    has_mass = False

    def __init__(self, op: RationalOperator, scale=1.0):
        self.op = op
        self.scale = float(scale)
        self.n = op.n

    def mass(self, x):
        return x

    def stiff(self, x):
        return self.scale * self.op.apply(x)

    def factor(self, a, b):
        """Solver for ``(diag(a) + b S) x = r``.

        A uniform positive ``a`` is inverted exactly; otherwise GMRES is
        preconditioned with the uniform solve at the mean of ``a``.
        """
        bs = b * self.scale
        if _is_uniform(a) and a > 0:
            return lambda r: self.op.solve(a, bs, r)
        a_vec = np.broadcast_to(np.asarray(a, dtype=float), (self.n,))
        a_bar = float(np.mean(a_vec))
        if a_bar <= 0:
            raise NumericalError("implicit stage matrix is not positive definite", a_mean=a_bar)
        A = spla.LinearOperator(
            (self.n, self.n), matvec=lambda x: a_vec * x + bs * self.op.apply(x), dtype=float
        )
        P = spla.LinearOperator(
            (self.n, self.n), matvec=lambda r: self.op.solve(a_bar, bs, r), dtype=float
        )

        def solve(r):
            x, info = spla.gmres(A, r, M=P, rtol=1e-13, atol=0.0, restart=50, maxiter=20)
            if info != 0:
                raise NumericalError("GMRES did not converge in implicit stage", info=info)
            return x

        return solve


@dataclass
class SemiLinearSystem:
    """``M u' = -S u + M f(t, u)`` with a linear part from this module.

    ``jacobian(t, u)`` returns the diagonal of ``df/du`` as a scalar or a
    vector; when absent and ``forcing_depends_on_u`` is set it is estimated
    by a one-sided difference. ``affine`` declares ``f`` affine in ``u`` so
    a single Newton correction is exact.
    """

    linear: object
    u0: np.ndarray
    t0: float = 0.0
    forcing: Callable | None = None
    jacobian: Callable | None = None
    forcing_depends_on_u: bool = False
    affine: bool = False

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != (self.linear.n,):
            raise DomainError(f"initial vector of shape {self.u0.shape} for system of size {self.linear.n}")

    def f(self, t, u):
        if self.forcing is None:
            return None
        return np.asarray(self.forcing(t, u), dtype=float)

    def jac_diag(self, t, u):
        if self.jacobian is not None:
            return self.jacobian(t, u)
        eps = math.sqrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(u))
        return (self.f(t, u + eps) - self.f(t, u)) / eps


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping parameters; ``dt=None`` selects step-halving adaptivity."""

    scheme: str = "theta"
    theta: float = 0.5
    dt: float | None = None
    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    max_newton: int = 10
    dt_initial: float | None = None
    dt_min: float = 1e-12

    def __post_init__(self):
        if self.scheme not in ("theta", "theta1"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if not 0.5 <= self.effective_theta <= 1.0:
            raise DomainError(f"theta must lie in [1/2, 1], got {self.theta}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise DomainError("tolerances must be positive")
        if self.dt is not None and self.dt <= 0:
            raise DomainError(f"dt must be positive, got {self.dt}")

    @property
    def effective_theta(self):
        return 1.0 if self.scheme == "theta1" else self.theta

    @property
    def order(self):
        return 2 if self.effective_theta == 0.5 else 1


@dataclass
class StepInfo:
    newton_iterations: int = 0
    last_update: float = 0.0


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    stats: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(zip(self.times, self.states))

    def __len__(self):
        return len(self.times)


class ThetaIntegrator:
    """Theta-method stepper with cached factorizations of the stage matrix.

    Factorizations are keyed on the exact ``(a, b)`` pair; the adaptive
    driver leaves ``dt`` untouched unless the controller asks for a change
    of more than 20%, so refactorizations stay rare.
    """

    def __init__(self, system: SemiLinearSystem, config: StepperConfig = StepperConfig(),
                 cache_size: int = 8):
        self.system = system
        self.config = config
        self.theta = config.effective_theta
        self._cache = OrderedDict()
        self._cache_size = cache_size
        self.factorizations = 0

    def _solver(self, a, b):
        key = (a if _is_uniform(a) else np.asarray(a).tobytes(), b)
        solver = self._cache.get(key)
        if solver is None:
            solver = self.system.linear.factor(a, b)
            self.factorizations += 1
            self._cache[key] = solver
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        return solver

    def step(self, u, t, dt):
        """One theta step from ``(t, u)``; returns ``(u_next, StepInfo)``."""
        if dt <= 0:
            raise DomainError(f"dt must be positive, got {dt}")
        sys, cfg, th = self.system, self.config, self.theta
        lin = sys.linear
        t1 = t + dt
        rhs = lin.mass(u)
        if th < 1.0:
            rhs = rhs - (1.0 - th) * dt * lin.stiff(u)
            f0 = sys.f(t, u)
            if f0 is not None:
                rhs = rhs + (1.0 - th) * dt * lin.mass(f0)

        if sys.forcing is None or not sys.forcing_depends_on_u:
            f1 = sys.f(t1, u)
            if f1 is not None:
                rhs = rhs + th * dt * lin.mass(f1)
            return self._solver(1.0, th * dt)(rhs), StepInfo(1, 0.0)

        J = sys.jac_diag(t1, u)
        if not _is_uniform(J):
            J = np.asarray(J, dtype=float)
            if np.ptp(J) == 0.0:
                J = float(J[0])
        a = 1.0 - th * dt * J
        solve = self._solver(a, th * dt)
        x = u
        for it in range(1, cfg.max_newton + 1):
            r = rhs + th * dt * lin.mass(sys.f(t1, x) - J * x)
            x_new = solve(r)
            upd = float(np.max(np.abs(x_new - x)))
            x = x_new
            if sys.affine:
                return x, StepInfo(it, upd)
            if upd <= cfg.abs_tol + cfg.rel_tol * float(np.max(np.abs(x))):
                # the converged pass only confirms the previous correction
                return x, StepInfo(max(it - 1, 1), upd)
        raise StepFailure(
            f"Newton did not converge in {cfg.max_newton} iterations",
            t=t, dt=dt, last_update=upd,
        )

    def integrate(self, t_end, snapshots=None):
        cfg, sys = self.config, self.system
        t0 = sys.t0
        if t_end < t0:
            raise DomainError(f"t_end={t_end} precedes t0={t0}")
        if snapshots is None:
            snapshots = [t_end]
        snaps = np.asarray(sorted(snapshots), dtype=float)
        if snaps.size and (snaps[0] < t0 or snaps[-1] > t_end):
            raise DomainError("snapshot times must lie in [t0, t_end]")

        u = sys.u0.copy()
        t = t0
        times, states = [], []
        stats = {"steps": 0, "rejected": 0}
        span = max(t_end - t0, 1e-300)
        dt = cfg.dt if cfg.dt is not None else (cfg.dt_initial or 1e-6 * span)
        p = cfg.order
        # tolerances are relative to the largest state seen so far
        peak = float(np.max(np.abs(u))) if u.size else 0.0
        for target in snaps:
            while target - t > 1e-14 * span:
                h = min(dt, target - t)
                if cfg.dt is not None:
                    u = self.step(u, t, h)[0]
                    t = target if h == target - t else t + h
                    stats["steps"] += 1
                    continue
                try:
                    full = self.step(u, t, h)[0]
                    mid = self.step(u, t, 0.5 * h)[0]
                    half = self.step(mid, t + 0.5 * h, 0.5 * h)[0]
                except StepFailure:
                    ratio = math.inf
                else:
                    err = float(np.max(np.abs(full - half))) / (2 ** p - 1)
                    peak = max(peak, float(np.max(np.abs(half))))
                    scale = cfg.abs_tol + cfg.rel_tol * peak
                    # error per unit step, so local errors summed over the run stay
                    # near tol; the floor lets steps from a t**p start (p < 2) settle
                    ratio = err / (scale * max(h / span, _EPUS_FLOOR))
                if ratio <= 1.0:
                    t = target if h == target - t else t + h
                    u = half
                    stats["steps"] += 1
                else:
                    stats["rejected"] += 1
                if ratio == 0.0:
                    proposal = 4.0 * h
                elif math.isinf(ratio):
                    proposal = 0.5 * h
                else:
                    proposal = h * min(4.0, max(0.2, 0.9 * ratio ** (-1.0 / p)))
                if ratio > 1.0:
                    dt = min(proposal, 0.5 * h) if math.isinf(ratio) else proposal
                elif proposal > 1.2 * dt or proposal < 0.8 * dt:
                    if h == dt or proposal > dt:
                        dt = proposal
                if dt < cfg.dt_min:
                    raise NumericalError(
                        f"step size fell below dt_min={cfg.dt_min} at t={t}",
                        t=t, dt=dt, rejected=stats["rejected"],
                    )
            times.append(target)
            states.append(u.copy())
        stats["factorizations"] = self.factorizations
        return Trajectory(np.array(times), np.array(states).reshape(len(times), -1), stats)


def step(system, u, t, dt, config: StepperConfig = StepperConfig()):
    """Single theta step; see :meth:`ThetaIntegrator.step`."""
    return ThetaIntegrator(system, config).step(u, t, dt)


def integrate(system, t_end, config: StepperConfig = StepperConfig(), snapshots=None):
    """States at ``snapshots`` (default ``[t_end]``)."""
    return ThetaIntegrator(system, config).integrate(t_end, snapshots)


def step_by_step_difference(traj_a: Trajectory, traj_b: Trajectory):
    """Max-norm difference at each common snapshot."""
    if len(traj_a.times) != len(traj_b.times) or not np.allclose(
        traj_a.times, traj_b.times, rtol=0, atol=1e-12
    ):
        raise DomainError("trajectories are on different snapshot grids")
    if traj_a.states.shape != traj_b.states.shape:
        raise DomainError("trajectories have different state sizes")
    diff = np.max(np.abs(traj_a.states - traj_b.states), axis=1)
    return list(zip(traj_a.times.tolist(), diff.tolist()))


def write_trajectory_csv(traj: Trajectory, path, comment=None):
    n = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i}" for i in range(1, n + 1)])
        for t, u in traj:
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in u])


def write_error_csv(errors, path, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["t", "error"])
        for t, e in errors:
            w.writerow([f"{t:.17g}", f"{e:.17g}"])
