"""Gauss-Jacobi quadrature via the Golub-Welsch eigenvalue construction.

The rules are for the weight ``(1 - t)**a * (1 + t)**b`` on ``[-1, 1]``.
The rational approximation of fractional powers uses ``a = beta - 1`` and
``b = -beta``, so both exponents are negative and ``a + b = -1``; the
recurrence below treats the first two coefficients separately because the
generic formula degenerates to ``0/0`` there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import DomainError, NumericalError

__all__ = [
    "JacobiWeight",
    "QuadratureRule",
    "jacobi_recurrence",
    "zeroth_moment",
    "gauss_jacobi",
    "fractional_weight",
    "write_rule",
    "read_rule",
]


@dataclass(frozen=True)
class JacobiWeight:
    """Exponents of the Jacobi weight ``(1 - t)**a * (1 + t)**b``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > -1.0 and self.b > -1.0):
            raise DomainError(
                f"Jacobi exponents must exceed -1, got a={self.a}, b={self.b}"
            )

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 - t) ** self.a * (1.0 + t) ** self.b


def fractional_weight(beta: float) -> JacobiWeight:
    """Weight ``(1 - t)**(beta - 1) * (1 + t)**(-beta)`` for ``0 < beta < 1``."""
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    return JacobiWeight(beta - 1.0, -beta)


@dataclass(frozen=True)
class QuadratureRule:
    """A ``k``-point rule: increasing nodes in (-1, 1) and positive weights."""

    nodes: np.ndarray
    weights: np.ndarray
    weight: JacobiWeight | None = None

    @property
    def k(self) -> int:
        return len(self.nodes)

    def integrate(self, f):
        """Apply the rule to a vectorised integrand ``f(t)``."""
        return np.dot(self.weights, f(self.nodes))


def zeroth_moment(weight: JacobiWeight) -> float:
    """Integral of the weight over ``[-1, 1]``.

    Evaluated as ``2**(a+b+1) B(a+1, b+1)`` through log-Gamma. For the
    fractional weight this equals ``pi / sin(beta*pi)``.
    """
    a, b = weight.a, weight.b
    log_mu = (
        (a + b + 1.0) * math.log(2.0)
        + math.lgamma(a + 1.0)
        + math.lgamma(b + 1.0)
        - math.lgamma(a + b + 2.0)
    )
    return math.exp(log_mu)


def jacobi_recurrence(weight: JacobiWeight, k: int):
    """Three-term recurrence coefficients of the monic Jacobi polynomials.

    Returns arrays ``(alpha, beta)`` of length ``k`` such that
    ``p_{i+1}(t) = (t - alpha_i) p_i(t) - beta_i p_{i-1}(t)``, with
    ``beta_0`` set to the zeroth moment of the weight.
    """
    if k < 1:
        raise DomainError(f"k must be a positive integer, got {k}")
    a, b = weight.a, weight.b
    ab = a + b
    alpha = np.empty(k)
    beta = np.empty(k)

    alpha[0] = (b - a) / (ab + 2.0)
    beta[0] = zeroth_moment(weight)
    if k > 1:
        beta[1] = 4.0 * (a + 1.0) * (b + 1.0) / ((ab + 2.0) ** 2 * (ab + 3.0))

    n = np.arange(1, k, dtype=float)
    nab = 2.0 * n + ab
    alpha[1:] = (b * b - a * a) / (nab * (nab + 2.0))

    n = np.arange(2, k, dtype=float)
    nab = 2.0 * n + ab
    beta[2:] = (
        4.0 * n * (n + a) * (n + b) * (n + ab)
        / (nab ** 2 * (nab + 1.0) * (nab - 1.0))
    )
    return alpha, beta


def gauss_jacobi(weight: JacobiWeight, k: int) -> QuadratureRule:
    """``k``-point Gauss-Jacobi rule (Golub-Welsch).

    The nodes are the eigenvalues of the symmetric Jacobi matrix; each
    weight is ``mu_0`` times the squared first component of the matching
    normalised eigenvector. The rule is exact for polynomials of degree
    up to ``2k - 1``.
    """
    alpha, beta = jacobi_recurrence(weight, k)
    off = np.sqrt(beta[1:])
    try:
        nodes, vecs = eigh_tridiagonal(alpha, off, lapack_driver="stev")
    except LinAlgError as exc:
        raise NumericalError(
            f"tridiagonal eigensolve failed for k={k}", k=k, weight=weight
        ) from exc
    weights = beta[0] * vecs[0, :] ** 2
    order = np.argsort(nodes)
    return QuadratureRule(nodes[order], weights[order], weight)


def write_rule(rule: QuadratureRule, path) -> None:
    """Write ``node weight`` lines with 17 significant digits."""
    with open(path, "w") as fh:
        for t, w in zip(rule.nodes, rule.weights):
            fh.write(f"{t:.17g} {w:.17g}\n")


def read_rule(path) -> QuadratureRule:
    data = np.loadtxt(path, ndmin=2)
    return QuadratureRule(data[:, 0].copy(), data[:, 1].copy())
