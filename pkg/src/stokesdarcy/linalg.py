"""Sparse storage helpers, the saddle-point system and its LU solver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

PIVOT_RTOL = 1e-14
# threshold partial pivoting: prefer the diagonal unless it is 100x smaller
PIVOT_THRESHOLD = 0.01


class SingularMatrixError(ArithmeticError):
    """Raised when a pivot falls below ``PIVOT_RTOL * max|A|``.

    ``row`` is the index of the offending row in the caller's ordering, or
    ``None`` when it cannot be attributed.
    """

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR: summed duplicates, sorted column indices."""
    C = sp.csr_matrix(A, dtype=float)
    C.sum_duplicates()
    C.sort_indices()
    return C


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: matrix {A.shape} times vector {x.shape}")
    return np.asarray(A @ x).ravel()


@dataclass(eq=False)
class LUFactorization:
    """LU factors of ``A[perm][:, perm]``; ``solve`` works in the original ordering."""

    lu: object
    perm: np.ndarray
    shape: tuple

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"right-hand side of length {b.shape[0]} for a {self.shape} system")
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm])
        return x


def factorize(A) -> LUFactorization:
    """Sparse LU with reverse Cuthill-McKee ordering and threshold partial pivoting.

    Raises
    ------
    SingularMatrixError
        If a pivot is (numerically) zero.
    """
    A = as_csr(A)
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {A.shape}")
    scale = np.abs(A.data).max(initial=0.0)
    if scale == 0.0:
        raise SingularMatrixError("zero matrix", row=0)
    pattern = (abs(A) + abs(A).T).tocsr()
    perm = np.asarray(reverse_cuthill_mckee(pattern, symmetric_mode=True))
    Ap = A[perm][:, perm].tocsc()
    try:
        # RCM alone fills in badly on the saddle-point graph; SuperLU's minimum
        # degree column ordering on top of it keeps the factors ~10x sparser
        lu = splu(Ap, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=PIVOT_THRESHOLD)
    except RuntimeError as exc:
        row = None
        if n <= 2000:
            # SuperLU does not say where; the dense elimination does
            try:
                dense_solve(A, np.zeros(n))
            except SingularMatrixError as dense_exc:
                row = dense_exc.row
        raise SingularMatrixError(f"exactly singular matrix: {exc}", row=row) from None
    piv = np.abs(lu.U.diagonal())
    k = int(np.argmin(piv))
    if piv[k] < PIVOT_RTOL * scale:
        # U row k was produced from permuted row perm_r^{-1}[k]
        src = int(np.flatnonzero(lu.perm_r == k)[0])
        row = int(perm[src])
        raise SingularMatrixError(
            f"pivot {piv[k]:.3e} below {PIVOT_RTOL:g} * max|A| at row {row}", row=row)
    return LUFactorization(lu, perm, A.shape)


def solve(factorization: LUFactorization, b) -> np.ndarray:
    return factorization.solve(b)


def dense_solve(A, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting, written out (reference oracle)."""
    A = np.array(A.toarray() if sp.issparse(A) else A, dtype=float)
    x = np.array(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or x.shape[0] != n:
        raise ValueError("dense_solve needs a square matrix and a matching right-hand side")
    if n > 2000:
        raise ValueError(f"dense oracle limited to 2000 unknowns, got {n}")
    scale = np.abs(A).max(initial=0.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) <= PIVOT_RTOL * scale or scale == 0.0:
            raise SingularMatrixError(f"zero pivot in column {k}", row=k)
        if p != k:
            A[[k, p]] = A[[p, k]]
            x[[k, p]] = x[[p, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        x[k + 1:] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x


def relative_residual(A, x, b) -> float:
    r = spmv(A, x) - np.asarray(b, dtype=float)
    return float(np.linalg.norm(r) / (1.0 + np.linalg.norm(b)))


@dataclass(eq=False)
class BlockSystem:
    """Saddle-point matrix of one implicit step.

    ``[[M + c (B + C_I), c Bdiv^T, 0], [Bdiv, 0, m], [0, m^T, 0]]`` with
    Dirichlet rows of the ``w`` block replaced by identity. The last row and
    column are dropped when the mean constraint is off.
    """

    matrix: sp.csr_matrix
    leading: sp.csr_matrix
    c: float
    nw: int
    np_: int
    has_mean: bool

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def build_block_system(ops, c: float) -> BlockSystem:
    """Assemble the step matrix for weight ``c`` (``2 sigma / 3`` for BDF2, ``sigma`` for Euler)."""
    if not c > 0:
        raise ValueError(f"step weight must be positive, got {c}")
    spaces = ops.spaces
    nw, npr = spaces.nw, spaces.np_
    K = (ops.M + c * (ops.B + ops.CI)).tocsr()
    D = spaces.w_dirichlet
    keep = np.ones(nw)
    keep[D] = 0.0
    P = sp.diags(keep)
    Kc = P @ K @ P + sp.diags(1.0 - keep)
    BT = P @ (c * ops.Bdiv.T)
    Bd = ops.Bdiv @ P
    blocks = [[Kc, BT], [Bd, None]]
    if spaces.zero_mean_pressure:
        m = sp.csr_matrix(ops.mean.reshape(-1, 1))
        blocks = [[Kc, BT, None], [Bd, None, m], [None, m.T, None]]
    A = sp.bmat(blocks, format="csr")
    return BlockSystem(as_csr(A), K, c, nw, npr, spaces.zero_mean_pressure)
