"""Cross norms of order-2 tensors over finite-dimensional Hilbert spaces.

With orthonormal bases in both factors an order-2 tensor is exactly a
matrix of coefficients, and the projective, Hilbert, and injective cross
norms are the nuclear, Frobenius, and spectral matrix norms. The
singular value decomposition is the single computational primitive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import svdvals

__all__ = [
    "Tensor2",
    "projective_norm",
    "injective_norm",
    "hilbert_norm",
    "operator_tensor_apply",
    "dual_pair",
]


@dataclass(frozen=True)
class Tensor2:
    """Dense coefficient matrix of a tensor u = sum_k phi_k (x) psi_k."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2:
            raise ValueError(f"entries must be a matrix, got ndim={e.ndim}")
        if not np.all(np.isfinite(e)):
            raise ValueError("entries must be finite")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


def projective_norm(x: Tensor2) -> float:
    """Nuclear norm: the sum of singular values."""
    return float(np.sum(svdvals(x.entries)))


def injective_norm(x: Tensor2) -> float:
    """Spectral norm: the largest singular value."""
    s = svdvals(x.entries)
    return float(s[0]) if s.size else 0.0


def hilbert_norm(x: Tensor2) -> float:
    """Frobenius norm: square root of the sum of squared entries."""
    return float(np.linalg.norm(x.entries, "fro"))


def operator_tensor_apply(S: np.ndarray, T: np.ndarray, x: Tensor2) -> Tensor2:
    """Apply S (x) T, which maps u (x) v to (S u) (x) (T v).

    In coefficients this is S @ entries @ T^t.
    """
    S = np.asarray(S, dtype=float)
    T = np.asarray(T, dtype=float)
    if S.ndim != 2 or S.shape[1] != x.rows:
        raise ValueError(f"left factor shape {S.shape} incompatible with {x.rows} rows")
    if T.ndim != 2 or T.shape[1] != x.cols:
        raise ValueError(f"right factor shape {T.shape} incompatible with {x.cols} cols")
    return Tensor2(S @ x.entries @ T.T)


def dual_pair(x: Tensor2, y: Tensor2) -> float:
    """Frobenius pairing between dual realizations of the cross norms.

    The supremum of dual_pair(x, y) over injective_norm(y) <= 1 equals
    projective_norm(x), attained at y = U V^t from the SVD of x.
    """
    if x.entries.shape != y.entries.shape:
        raise ValueError(f"shape mismatch: {x.entries.shape} vs {y.entries.shape}")
    return float(np.sum(x.entries * y.entries))
