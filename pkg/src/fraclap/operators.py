"""Finite-difference Laplacians and the banded linear algebra built on them.

Band storage is diagonal-major: ``data[lower + d, i] == A[i, i + d]`` for
``-lower <= d <= upper``; slots whose column falls outside the matrix are
kept at zero. This layout makes the bandwidth bookkeeping of products
exact, which is what the assembly of the rational factors relies on.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .errors import DomainError, NumericalError

__all__ = [
    "BandedMatrix",
    "SPDOperator",
    "DiscreteLaplacian",
    "laplacian_1d",
    "laplacian_2d",
    "identity_operator",
    "shifted_solve",
    "ShiftedCholesky",
    "banded_multiply",
    "write_matrix_market",
]


class BandedMatrix:
    """Square banded matrix in diagonal-major storage.

    Parameters
    ----------
    data : ndarray, shape (lower + upper + 1, n)
        ``data[lower + d, i]`` holds ``A[i, i + d]``.
    lower, upper : int
        Number of sub- and super-diagonals.
    """

    def __init__(self, data, lower, upper):
        data = np.array(data, dtype=float)
        if data.ndim != 2 or data.shape[0] != lower + upper + 1:
            raise DomainError(
                f"band data of shape {data.shape} does not match bandwidths ({lower}, {upper})"
            )
        self.data = data
        self.lower = int(lower)
        self.upper = int(upper)
        self.n = data.shape[1]
        self._clear_outside()
        self.data.setflags(write=False)

    def _clear_outside(self):
        n = self.n
        for d in range(-self.lower, self.upper + 1):
            row = self.data[self.lower + d]
            if d > 0:
                row[max(n - d, 0):] = 0.0
            elif d < 0:
                row[: min(-d, n)] = 0.0

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def bandwidths(self):
        return (self.lower, self.upper)

    def diagonal(self, d=0):
        """The ``d``-th diagonal as a vector of length ``n - |d|``."""
        if d < -self.lower or d > self.upper:
            return np.zeros(max(self.n - abs(d), 0))
        row = self.data[self.lower + d]
        return row[: self.n - d].copy() if d >= 0 else row[-d:].copy()

    @classmethod
    def identity(cls, n):
        return cls(np.ones((1, n)), 0, 0)

    @classmethod
    def from_diagonals(cls, diagonals, n):
        """Build from ``{offset: values}``; values are scalars or vectors of length ``n - |d|``."""
        lower = max([-d for d in diagonals if d < 0], default=0)
        upper = max([d for d in diagonals if d > 0], default=0)
        data = np.zeros((lower + upper + 1, n))
        for d, vals in diagonals.items():
            m = n - abs(d)
            vals = np.broadcast_to(np.asarray(vals, dtype=float), (m,))
            if d >= 0:
                data[lower + d, :m] = vals
            else:
                data[lower + d, -d:] = vals
        return cls(data, lower, upper)

    @classmethod
    def from_dense(cls, A, lower, upper):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        return cls.from_diagonals(
            {d: np.diagonal(A, d) for d in range(-lower, upper + 1)}, n
        )

    def shifted(self, eta):
        """``eta * I + self``."""
        data = self.data.copy()
        data[self.lower] += eta
        return BandedMatrix(data, self.lower, self.upper)

    def scaled(self, c):
        return BandedMatrix(c * self.data, self.lower, self.upper)

    def __add__(self, other):
        if other.n != self.n:
            raise DomainError(f"dimension mismatch: {self.n} vs {other.n}")
        lo, up = max(self.lower, other.lower), max(self.upper, other.upper)
        data = np.zeros((lo + up + 1, self.n))
        data[lo - self.lower: lo + self.upper + 1] += self.data
        data[lo - other.lower: lo + other.upper + 1] += other.data
        return BandedMatrix(data, lo, up)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise DomainError(f"vector of length {x.shape[0]} for matrix of size {self.n}")
        y = np.zeros(x.shape)
        n = self.n
        for d in range(-self.lower, self.upper + 1):
            lo, hi = max(0, -d), min(n, n - d)
            if lo >= hi:
                continue
            coef = self.data[self.lower + d, lo:hi].reshape((-1,) + (1,) * (x.ndim - 1))
            y[lo:hi] += coef * x[lo + d: hi + d]
        return y

    def __matmul__(self, other):
        if isinstance(other, BandedMatrix):
            return banded_multiply(self, other)
        return self.matvec(other)

    def to_dense(self):
        A = np.zeros((self.n, self.n))
        for d in range(-self.lower, self.upper + 1):
            if abs(d) < self.n:
                idx = np.arange(max(0, -d), min(self.n, self.n - d))
                A[idx, idx + d] = self.data[self.lower + d, idx]
        return A

    def to_sparse(self, fmt="csr"):
        offsets, diags = [], []
        for d in range(-self.lower, self.upper + 1):
            if abs(d) >= self.n:
                continue
            vals = self.diagonal(d)
            if np.any(vals):
                offsets.append(d)
                diags.append(vals)
        if not offsets:
            return sp.csr_matrix((self.n, self.n)).asformat(fmt)
        return sp.diags(diags, offsets, shape=(self.n, self.n), format=fmt)

    def upper_ab(self):
        """Upper-triangle LAPACK band layout for symmetric matrices."""
        u = self.upper
        ab = np.zeros((u + 1, self.n))
        for d in range(0, u + 1):
            # ab[u - d, j] = A[j - d, j] = data[lower + d, j - d]
            if d < self.n:
                ab[u - d, d:] = self.data[self.lower + d, : self.n - d]
        return ab

    def is_symmetric(self):
        if self.lower != self.upper:
            return False
        return all(
            np.array_equal(self.diagonal(d), self.diagonal(-d))
            for d in range(1, self.upper + 1)
        )


def banded_multiply(A: BandedMatrix, B: BandedMatrix) -> BandedMatrix:
    """Exact product of two banded matrices; bandwidths add."""
    if A.n != B.n:
        raise DomainError(f"dimension mismatch: {A.n} vs {B.n}")
    n = A.n
    lo, up = A.lower + B.lower, A.upper + B.upper
    data = np.zeros((lo + up + 1, n))
    # zero diagonals are common for 2-D operators stored with bandwidth N
    a_diags = [d for d in range(-A.lower, A.upper + 1) if np.any(A.data[A.lower + d])]
    b_diags = [d for d in range(-B.lower, B.upper + 1) if np.any(B.data[B.lower + d])]
    for d1 in a_diags:
        lo_i, hi_i = max(0, -d1), min(n, n - d1)
        if lo_i >= hi_i:
            continue
        a = A.data[A.lower + d1, lo_i:hi_i]
        for d2 in b_diags:
            # C[i, i+d1+d2] += A[i, i+d1] * B[i+d1, i+d1+d2]
            b = B.data[B.lower + d2, lo_i + d1: hi_i + d1]
            data[lo + d1 + d2, lo_i:hi_i] += a * b
    return BandedMatrix(data, lo, up)


class SPDOperator:
    """Symmetric positive definite banded operator with known spectral bounds."""

    dimension = 0

    def __init__(self, banded: BandedMatrix, lambda_min: float, lambda_max: float):
        if not banded.is_symmetric():
            raise DomainError("operator must be symmetric")
        if not 0 < lambda_min <= lambda_max:
            raise DomainError(f"invalid spectral bounds [{lambda_min}, {lambda_max}]")
        self.banded = banded
        self.lambda_min = float(lambda_min)
        self.lambda_max = float(lambda_max)

    @property
    def n(self):
        return self.banded.n

    @property
    def condition_number(self):
        return self.lambda_max / self.lambda_min

    def matvec(self, v):
        return self.banded.matvec(v)

    def __matmul__(self, v):
        return self.matvec(v)

    def to_dense(self):
        return self.banded.to_dense()

    def to_sparse(self, fmt="csr"):
        return self.banded.to_sparse(fmt)


def identity_operator(n: int) -> SPDOperator:
    return SPDOperator(BandedMatrix.identity(n), 1.0, 1.0)


class DiscreteLaplacian(SPDOperator):
    """Central-difference Dirichlet Laplacian (unscaled, i.e. ``h**2`` times -Delta).

    Attributes
    ----------
    dimension : int
        1 or 2.
    N : int
        Interior points per direction; the matrix has size ``N**dimension``.
    h : float
        Mesh width.
    """

    def __init__(self, dimension, N, h, banded, lambda_min, lambda_max):
        super().__init__(banded, lambda_min, lambda_max)
        self.dimension = dimension
        self.N = N
        self.h = h
        self._t = None
        if dimension == 2:
            self._t = laplacian_1d(N).banded

    def eigenvalues_1d(self):
        s = np.arange(1, self.N + 1)
        return 2.0 - 2.0 * np.cos(s * np.pi / (self.N + 1))

    def eigenvalues(self):
        """All eigenvalues from the closed form, ascending."""
        lam = self.eigenvalues_1d()
        if self.dimension == 2:
            lam = (lam[:, None] + lam[None, :]).ravel()
        return np.sort(lam)

    def matvec(self, v):
        if self.dimension == 1:
            return self.banded.matvec(v)
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise DomainError(f"vector of length {v.shape[0]} for operator of size {self.n}")
        # (I kron T + T kron I) v  ==  V T^T + T V  with V = v.reshape(N, N)
        N = self.N
        V = v.reshape((N, N) + v.shape[1:])
        TV = self._t.matvec(V)
        VT = np.swapaxes(self._t.matvec(np.swapaxes(V, 0, 1)), 0, 1)
        return (TV + VT).reshape(v.shape)

    def __repr__(self):
        return f"DiscreteLaplacian(dimension={self.dimension}, N={self.N}, h={self.h:.6g})"


def laplacian_1d(N: int, domain_length: float = 1.0) -> DiscreteLaplacian:
    """``tridiag(-1, 2, -1)`` of size ``N`` on ``(0, domain_length)``."""
    if N < 2:
        raise DomainError(f"N must be at least 2, got {N}")
    if domain_length <= 0:
        raise DomainError(f"domain length must be positive, got {domain_length}")
    banded = BandedMatrix.from_diagonals({-1: -1.0, 0: 2.0, 1: -1.0}, N)
    c = np.pi / (N + 1)
    return DiscreteLaplacian(
        1, N, domain_length / (N + 1), banded,
        2.0 - 2.0 * np.cos(c), 2.0 - 2.0 * np.cos(N * c),
    )


def laplacian_2d(N: int) -> DiscreteLaplacian:
    """Five-point Laplacian ``tridiag(-I, B, -I)`` of size ``N**2`` on the unit square."""
    if N < 2:
        raise DomainError(f"N must be at least 2, got {N}")
    n = N * N
    off1 = np.full(n - 1, -1.0)
    off1[N - 1:: N] = 0.0
    banded = BandedMatrix.from_diagonals(
        {-N: -1.0, -1: off1, 0: 4.0, 1: off1, N: -1.0}, n
    )
    c = np.pi / (N + 1)
    return DiscreteLaplacian(
        2, N, 1.0 / (N + 1), banded,
        2.0 * (2.0 - 2.0 * np.cos(c)), 2.0 * (2.0 - 2.0 * np.cos(N * c)),
    )


class ShiftedCholesky:
    """Banded Cholesky factor of ``eta I + L``, reusable across right-hand sides."""

    def __init__(self, L: SPDOperator, eta: float):
        if eta < 0:
            raise DomainError(f"shift must be non-negative, got {eta}")
        self.eta = eta
        self.n = L.n
        try:
            self._cb = cholesky_banded(L.banded.shifted(eta).upper_ab(), check_finite=False)
        except LinAlgError as exc:
            raise NumericalError(
                f"Cholesky breakdown for shift eta={eta}", eta=eta
            ) from exc

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise DomainError(f"rhs of length {rhs.shape[0]} for operator of size {self.n}")
        return cho_solve_banded((self._cb, False), rhs, check_finite=False)


def shifted_solve(L: SPDOperator, eta: float, rhs):
    """Solve ``(eta I + L) x = rhs`` by banded Cholesky."""
    if eta <= 0:
        raise DomainError(f"shift must be positive, got {eta}")
    return ShiftedCholesky(L, eta).solve(rhs)


def write_matrix_market(op, path, comment=""):
    """Write an operator (or BandedMatrix) in Matrix Market coordinate format."""
    A = op.to_sparse("coo")
    scipy.io.mmwrite(str(path), A, comment=comment, precision=17)
