"""Rational approximation of fractional matrix powers from Gauss-Jacobi rules.

For a symmetric positive definite ``A`` and ``0 < beta < 1``::

    A**beta  ~  R_k(A) = A * sum_j gamma_j (eta_j I + A)^{-1}
             = Q_k(A)^{-1} (A P_{k-1}(A)) = M^{-1} K

The nodes and weights of the ``k``-point rule for the weight
``(1-t)**(beta-1) (1+t)**(-beta)`` fix ``gamma_j`` and ``eta_j``; the scale
``tau`` of the change of variables is chosen as the geometric mean of the
extreme eigenvalues, which balances the distance of the integrand's poles
from ``[-1, 1]`` at both ends of the spectrum.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import DomainError, NumericalError, PoleError
from .operators import (
    BandedMatrix,
    ShiftedCholesky,
    SPDOperator,
    banded_multiply,
    shifted_solve,
)
from .quadrature import QuadratureRule, fractional_weight, gauss_jacobi

__all__ = [
    "RationalCoeffs",
    "FactorizedPower",
    "KSelectionWarning",
    "tau_opt",
    "mobius_pole",
    "pole_distance",
    "ellipse_radius",
    "build_coeffs",
    "eval_scalar",
    "assemble_mk",
    "apply_rational",
    "RationalOperator",
    "resolvent_partial_fractions",
    "error_bound",
    "convergence_factor",
    "remark_estimate",
    "epsilon_k",
    "select_k",
    "spectral_error",
    "write_coeffs_csv",
]

BOUND_CONSTANT = 16.0 * math.e


class KSelectionWarning(UserWarning):
    """The requested tolerance was not reached within ``k_max`` points."""


class BandwidthWarning(UserWarning):
    """The banded factors would be dense; only the partial-fraction form is used."""


@dataclass(frozen=True)
class RationalCoeffs:
    """Poles and residues of ``R_k(z) = z * sum_j gamma_j / (eta_j + z)``."""

    k: int
    beta: float
    tau: float
    gamma: np.ndarray
    eta: np.ndarray
    rule: QuadratureRule | None = field(default=None, repr=False, compare=False)

    def __call__(self, lam):
        return eval_scalar(self, lam)


def tau_opt(lambda_min: float, lambda_max: float) -> float:
    """Geometric mean of the spectral bounds."""
    if not 0 < lambda_min <= lambda_max:
        raise DomainError(
            f"need 0 < lambda_min <= lambda_max, got {lambda_min}, {lambda_max}"
        )
    return math.sqrt(lambda_min * lambda_max)


def mobius_pole(tau: float, lam: float) -> float:
    """Pole ``(tau + lam) / (tau - lam)`` of ``t -> 1 / (tau (1-t) + (1+t) lam)``."""
    if lam == tau:
        raise PoleError(f"lambda equals tau ({tau}); the pole is at infinity")
    return (tau + lam) / (tau - lam)


def pole_distance(kappa: float) -> float:
    """``(sqrt(kappa) + 1) / (sqrt(kappa) - 1)``: closest pole position at the optimal tau."""
    if kappa <= 1:
        return math.inf
    s = math.sqrt(kappa)
    return (s + 1.0) / (s - 1.0)


def ellipse_radius(kappa: float) -> float:
    """``rho_M = g + sqrt(g**2 - 1)`` with ``g = pole_distance(kappa)``."""
    g = pole_distance(kappa)
    if math.isinf(g):
        return math.inf
    # (g - 1)(g + 1) avoids cancellation in g**2 - 1 when kappa is large
    return g + math.sqrt((g - 1.0) * (g + 1.0))


def build_coeffs(k: int, beta: float, tau: float) -> RationalCoeffs:
    """Coefficients of the ``k``-point Gauss-Jacobi approximant of ``z**beta``."""
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    rule = gauss_jacobi(fractional_weight(beta), k)
    t, w = rule.nodes, rule.weights
    scale = 2.0 * math.sin(beta * math.pi) * tau ** beta / math.pi
    gamma = scale * w / (1.0 + t)
    eta = tau * (1.0 - t) / (1.0 + t)
    return RationalCoeffs(k, beta, tau, gamma, eta, rule)


def eval_scalar(R: RationalCoeffs, lam):
    """``R_k(lam)``; vectorised over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    terms = R.gamma / (R.eta + lam[..., None])
    out = lam * terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def spectral_error(R: RationalCoeffs, eigenvalues, relative=False):
    """``max_s |lam_s**beta - R_k(lam_s)|`` over the given eigenvalues.

    For symmetric ``A`` this is exactly ``||A**beta - R_k(A)||_2``.
    With ``relative=True`` it is divided by ``max_s lam_s**beta``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    exact = lam ** R.beta
    err = np.max(np.abs(exact - eval_scalar(R, lam)))
    return err / np.max(exact) if relative else err


def apply_rational(R: RationalCoeffs, L: SPDOperator, v):
    """``R_k(L) v`` through ``k`` independent shifted solves."""
    v = np.asarray(v, dtype=float)
    acc = np.zeros_like(v)
    # fixed summation order keeps the result reproducible
    for g, e in zip(R.gamma, R.eta):
        acc += g * shifted_solve(L, e, v)
    return L.matvec(acc)


def resolvent_partial_fractions(R: RationalCoeffs, a: float, b: float):
    """Partial fractions of ``1 / (a + b R_k(z))`` for ``a, b > 0``.

    Returns ``(d, zeta, c)`` with ``1/(a + b R_k(z)) = d + sum_i c_i / (z + zeta_i)``.
    The denominator ``a Q_k(z) + b z P_{k-1}(z)`` has exactly one root in
    each of ``(-eta_min, 0)`` and the gaps between consecutive ``-eta_j``,
    because ``R_k`` increases monotonically between its poles; hence all
    ``zeta_i`` and ``c_i`` are positive.
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"need a > 0 and b > 0, got a={a}, b={b}")
    gamma, eta = R.gamma, R.eta
    order = np.argsort(eta)
    gamma, eta = gamma[order], eta[order]

    def h(z):
        return a - b * z * np.sum(gamma / (eta - z))

    edges = np.concatenate(([0.0], eta))
    zeta = np.empty(R.k)
    for i in range(R.k):
        lo, hi = edges[i], edges[i + 1]
        width = hi - lo
        delta = 1e-12 * width
        # shrink the endpoint offset until the sign change is bracketed
        while True:
            left = lo if i == 0 else lo + delta
            right = hi - delta
            if h(left) > 0 and h(right) < 0:
                break
            delta *= 1e-3
            if delta < 1e-300:
                raise NumericalError(
                    "could not bracket resolvent root", interval=(lo, hi), a=a, b=b
                )
        zeta[i] = brentq(h, left, right, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    deriv = b * np.array([np.sum(gamma * eta / (eta - z) ** 2) for z in zeta])
    c = 1.0 / deriv
    d = 1.0 / (a + b * np.sum(gamma))
    return d, zeta, c


class RationalOperator:
    """``R_k(L)`` applied through cached banded Cholesky factors.

    Besides products it solves ``(a I + b R_k(L)) x = y`` exactly via
    :func:`resolvent_partial_fractions`; this is the implicit stage of a
    one-step method applied to ``u' = -c R_k(L) u + f``.
    """

    def __init__(self, R: RationalCoeffs, L: SPDOperator):
        self.coeffs = R
        self.L = L
        self._factors = {}
        self._resolvents = {}

    @property
    def n(self):
        return self.L.n

    def _factor(self, shift):
        fac = self._factors.get(shift)
        if fac is None:
            fac = self._factors[shift] = ShiftedCholesky(self.L, shift)
        return fac

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        acc = np.zeros_like(v)
        for g, e in zip(self.coeffs.gamma, self.coeffs.eta):
            acc += g * self._factor(e).solve(v)
        return self.L.matvec(acc)

    def solve(self, a, b, y):
        key = (float(a), float(b))
        pf = self._resolvents.get(key)
        if pf is None:
            if len(self._resolvents) > 16:
                self._resolvents.clear()
            pf = self._resolvents[key] = resolvent_partial_fractions(self.coeffs, a, b)
            # retire factors of shifts no longer referenced
            keep = set(self.coeffs.eta) | {z for _, zs, _ in self._resolvents.values() for z in zs}
            self._factors = {s: f for s, f in self._factors.items() if s in keep}
        d, zeta, c = pf
        y = np.asarray(y, dtype=float)
        x = d * y
        for ci, zi in zip(c, zeta):
            x += ci * self._factor(zi).solve(y)
        return x


@dataclass(frozen=True)
class FactorizedPower:
    """Banded pair with ``M^{-1} K = R_k(L)``.

    ``M`` and ``K`` are ``None`` when the factors would be dense
    (partial-fraction-only mode); :meth:`apply` then falls back to
    :func:`apply_rational`.
    """

    M: BandedMatrix | None
    K: BandedMatrix | None
    coeffs: RationalCoeffs
    source: SPDOperator

    @property
    def banded(self):
        return self.M is not None

    @cached_property
    def _m_lu(self):
        return spla.splu(self.M.to_sparse("csc"))

    def apply(self, v):
        if not self.banded:
            return apply_rational(self.coeffs, self.source, v)
        return self._m_lu.solve(self.K.matvec(v))

    def dense(self):
        """Dense ``M^{-1} K`` (small problems only)."""
        return np.linalg.solve(self.M.to_dense(), self.K.to_dense())


def assemble_mk(R: RationalCoeffs, L: SPDOperator) -> FactorizedPower:
    """Form ``M = prod_j (eta_j I + L)`` and ``K = L sum_j gamma_j prod_{i != j} (eta_i I + L)``.

    The numerator is accumulated from products of shifted factors rather
    than from monomial coefficients, which would be badly conditioned.
    """
    A = L.banded
    if R.k * A.upper >= A.n:
        warnings.warn(
            f"k={R.k} factors of bandwidth {A.upper} exceed the dimension {A.n}; "
            "using the partial-fraction form only",
            BandwidthWarning,
            stacklevel=2,
        )
        return FactorizedPower(None, None, R, L)

    factors = [A.shifted(e) for e in R.eta]
    k = R.k
    # prefix[j] = F_0 ... F_{j-1}, suffix[j] = F_j ... F_{k-1}
    prefix = [BandedMatrix.identity(A.n)]
    for f in factors:
        prefix.append(banded_multiply(prefix[-1], f))
    suffix = [BandedMatrix.identity(A.n)] * (k + 1)
    for j in range(k - 1, -1, -1):
        suffix[j] = banded_multiply(factors[j], suffix[j + 1])

    M = prefix[k]
    P = None
    for j in range(k):
        term = banded_multiply(prefix[j], suffix[j + 1]).scaled(R.gamma[j])
        P = term if P is None else P + term
    K = banded_multiply(A, P)
    return FactorizedPower(M, K, R, L)


def convergence_factor(kappa: float) -> float:
    """``((kappa**0.25 - 1) / (kappa**0.25 + 1))**2``, equal to ``rho_M**-2``."""
    if kappa < 1:
        raise DomainError(f"condition number must be >= 1, got {kappa}")
    q = kappa ** 0.25
    return ((q - 1.0) / (q + 1.0)) ** 2


def error_bound(k: int, beta: float, kappa: float, norm_A: float, tau: float) -> float:
    """A-priori bound on ``||A**beta - R_k(A)||_2`` at the optimal ``tau``.

    ``16 e ||A|| tau**beta (rho+1) / ((rho-1)(rho-g)) * k / rho**(2k)``
    with ``g = pole_distance(kappa)`` and ``rho = ellipse_radius(kappa)``.
    The constant comes from bounding the best polynomial approximation of
    the integrand on a Bernstein ellipse and is not sharp; the bound is
    meant for ``k`` past a small threshold.
    """
    if k < 1:
        raise DomainError(f"k must be positive, got {k}")
    if kappa < 1:
        raise DomainError(f"condition number must be >= 1, got {kappa}")
    if kappa == 1:
        return 0.0
    g = pole_distance(kappa)
    rho = ellipse_radius(kappa)
    # log form: rho**(2k) overflows for small kappa and large k
    log_b = (
        math.log(BOUND_CONSTANT * norm_A * tau ** beta * (rho + 1.0)
                 / ((rho - 1.0) * (rho - g)) * k)
        - 2.0 * k * math.log(rho)
    )
    return math.exp(log_b)


def remark_estimate(N: int) -> float:
    """The heuristic ``1 + 2 pi / N`` for ``rho_M**2`` of an ``N``-point Laplacian."""
    return 1.0 + 2.0 * math.pi / N


def epsilon_k(R: RationalCoeffs, lambda_min: float, beta: float | None = None) -> float:
    """Scalar error ``|R_k(lambda_min) - lambda_min**beta|`` at the slowest mode."""
    beta = R.beta if beta is None else beta
    return abs(eval_scalar(R, lambda_min) - lambda_min ** beta)


def select_k(L: SPDOperator, beta: float, tol: float, k_max: int = 64) -> int:
    """Smallest ``k <= k_max`` with ``epsilon_k <= tol`` at ``tau_opt``.

    Emits :class:`KSelectionWarning` and returns ``k_max`` when the
    tolerance is not reached.
    """
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    tau = tau_opt(L.lambda_min, L.lambda_max)
    for k in range(1, k_max + 1):
        if epsilon_k(build_coeffs(k, beta, tau), L.lambda_min, beta) <= tol:
            return k
    warnings.warn(
        f"epsilon_k stayed above {tol:g} up to k={k_max}", KSelectionWarning, stacklevel=2
    )
    return k_max


def write_coeffs_csv(R: RationalCoeffs, path) -> None:
    """Coefficient table ``j, node, weight, gamma, eta`` with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# k={R.k} beta={R.beta:.17g} tau={R.tau:.17g}\n")
        writer = csv.writer(fh)
        writer.writerow(["j", "node", "weight", "gamma", "eta"])
        for j in range(R.k):
            writer.writerow([
                j + 1,
                f"{R.rule.nodes[j]:.17g}",
                f"{R.rule.weights[j]:.17g}",
                f"{R.gamma[j]:.17g}",
                f"{R.eta[j]:.17g}",
            ])
