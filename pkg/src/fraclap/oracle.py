"""Dense reference paths: exact spectral calculus of the discrete Laplacian
and closed-form or series solutions of the benchmark problems.

The eigenvectors of the Dirichlet Laplacian on a uniform grid are discrete
sine vectors, so ``L**beta`` is available exactly (up to rounding) without
any eigensolver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .operators import DiscreteLaplacian

__all__ = [
    "SpectralDecomposition",
    "sine_matrix",
    "spectral_decomposition",
    "dense_frac_power_apply",
    "dense_frac_power_matrix",
    "exact_solution_example1",
    "example1_tail_bound",
    "exact_solution_example3",
    "exact_solution_example4",
    "example4_modes",
]


def sine_matrix(N: int) -> np.ndarray:
    """Orthonormal DST-I matrix ``sqrt(2/(N+1)) sin(s i pi / (N+1))`` (symmetric, involutory)."""
    idx = np.arange(1, N + 1)
    return math.sqrt(2.0 / (N + 1)) * np.sin(np.outer(idx, idx) * math.pi / (N + 1))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a 1-D or 2-D discrete Laplacian, eigenvalues ascending.

    The basis is kept implicitly as the 1-D sine matrix; 2-D eigenvectors
    are tensor products. ``order`` maps sorted positions to the natural
    tensor index ``p * N + q``.
    """

    dimension: int
    N: int
    eigenvalues: np.ndarray
    order: np.ndarray
    sines: np.ndarray

    @property
    def n(self):
        return self.N ** self.dimension

    def coefficients(self, v):
        """Inner products ``<v, phi_s>`` in ascending-eigenvalue order."""
        v = np.asarray(v, dtype=float)
        S = self.sines
        if self.dimension == 1:
            c = S @ v
        else:
            V = v.reshape((self.N, self.N) + v.shape[1:])
            c = np.einsum("pi,ij...,qj->pq...", S, V, S).reshape(v.shape)
        return c[self.order]

    def synthesize(self, c):
        """Inverse of :meth:`coefficients`."""
        c = np.asarray(c, dtype=float)
        natural = np.empty_like(c)
        natural[self.order] = c
        S = self.sines
        if self.dimension == 1:
            return S @ natural
        C = natural.reshape((self.N, self.N) + c.shape[1:])
        return np.einsum("ip,pq...,jq->ij...", S, C, S).reshape(c.shape)

    def apply_function(self, fun, v):
        """``g(L) v`` for a scalar function ``g`` of the eigenvalues."""
        c = self.coefficients(v)
        g = fun(self.eigenvalues)
        if c.ndim > 1:
            g = g.reshape((-1,) + (1,) * (c.ndim - 1))
        return self.synthesize(g * c)

    def basis_vector(self, s):
        """Normalised eigenvector of the ``s``-th smallest eigenvalue (0-based)."""
        e = np.zeros(self.n)
        e[s] = 1.0
        return self.synthesize(e)


def spectral_decomposition(L: DiscreteLaplacian) -> SpectralDecomposition:
    lam1 = L.eigenvalues_1d()
    if L.dimension == 1:
        lam = lam1
    elif L.dimension == 2:
        lam = (lam1[:, None] + lam1[None, :]).ravel()
    else:
        raise DomainError(f"unsupported dimension {L.dimension}")
    order = np.argsort(lam, kind="stable")
    return SpectralDecomposition(L.dimension, L.N, lam[order], order, sine_matrix(L.N))


def dense_frac_power_apply(L: DiscreteLaplacian, beta: float, v):
    """``L**beta v`` by exact spectral calculus."""
    if not 0 < beta < 1:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    v = np.asarray(v, dtype=float)
    if v.shape[0] != L.n:
        raise DomainError(f"vector of length {v.shape[0]} for operator of size {L.n}")
    return spectral_decomposition(L).apply_function(lambda lam: lam ** beta, v)


def dense_frac_power_matrix(L: DiscreteLaplacian, beta: float) -> np.ndarray:
    """The dense matrix ``L**beta`` (symmetric), as used by the matrix transfer path."""
    if not 0 < beta < 1:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    S = sine_matrix(L.N)
    lam1 = L.eigenvalues_1d()
    if L.dimension == 1:
        A = (S * lam1 ** beta) @ S
    else:
        Q = np.kron(S, S)
        lam = (lam1[:, None] + lam1[None, :]).ravel()
        A = (Q * lam ** beta) @ Q
    return 0.5 * (A + A.T)


def example1_tail_bound(terms: int) -> float:
    """Bound on the truncated part of the example-1 series at any ``t >= 0``.

    Coefficients are at most ``12 / n**3`` in magnitude, so the tail after
    ``terms`` terms is below ``12 * sum_{n > terms} n**-3 <= 6 / terms**2``.
    """
    return 6.0 / terms ** 2


def exact_solution_example1(x, t, alpha, kappa, terms=10_000):
    """Sine series solution on ``(0, pi)`` for ``u0 = x**2 (pi - x)``, no forcing."""
    x = np.asarray(x, dtype=float)
    n = np.arange(1, terms + 1, dtype=float)
    coef = (8.0 * (-1.0) ** (n + 1) - 4.0) / n ** 3 * np.exp(-kappa * n ** alpha * t)
    flat = x.reshape(-1)
    acc = np.zeros(flat.shape)
    # chunk over n to bound memory on large meshes
    for start in range(0, terms, 2048):
        sl = slice(start, start + 2048)
        acc += np.sin(np.outer(flat, n[sl])) @ coef[sl]
    out = acc.reshape(x.shape)
    return out if out.ndim else float(out)


def exact_solution_example3(x, t, alpha):
    """``t**alpha x**2 (1 - x)**2``."""
    x = np.asarray(x, dtype=float)
    out = t ** alpha * x ** 2 * (1.0 - x) ** 2
    return out if out.ndim else float(out)


def example4_modes(x, y):
    """The four sine products and their continuous eigenvalues.

    Returns ``[(v_j, mu_j)]`` with ``sin^3(pi x) sin^3(pi y) = (1/16) sum_j v_j``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = np.sin(np.pi * x), np.sin(np.pi * y)
    s3x, s3y = np.sin(3 * np.pi * x), np.sin(3 * np.pi * y)
    pi2 = np.pi ** 2
    return [
        (9.0 * sx * sy, 2.0 * pi2),
        (-3.0 * sx * s3y, 10.0 * pi2),
        (-3.0 * s3x * sy, 10.0 * pi2),
        (s3x * s3y, 18.0 * pi2),
    ]


def exact_solution_example4(x, y, t, alpha):
    """``t**alpha sin^3(pi x) sin^3(pi y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = t ** alpha * np.sin(np.pi * x) ** 3 * np.sin(np.pi * y) ** 3
    return out if out.ndim else float(out)
