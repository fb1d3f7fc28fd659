"""Structural matrix operators shared by the THP and transceiver solvers."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when matrix shapes are not conformable."""


class PermutationError(ValueError):
    """Raised for an order that is not a permutation."""


def _require_square(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {X.shape}")
    return X


def vec_lt(X: np.ndarray) -> np.ndarray:
    """Stack the strictly-lower entries of a square matrix column by column.

    The order is ``X[1,0], ..., X[n-1,0], X[2,1], ..., X[n-1,n-2]``.

    >>> vec_lt(np.array([[1, 2, 3], [4, 5, 6], [7, 8, 9]]))
    array([4, 7, 8])
    """
    X = _require_square(X)
    # row-major upper-triangle pairs, read transposed, give column-major lower order
    cols, rows = np.triu_indices(X.shape[0], k=1)
    return X[rows, cols]


def strict_lower(X: np.ndarray) -> np.ndarray:
    """Zero everything on and above the diagonal."""
    X = _require_square(X)
    return np.tril(X, k=-1)


def phase_project(b: complex, previous: complex | None = None) -> complex:
    """Closest unit-modulus point to ``b``.

    For ``b == 0`` every phase is optimal; ``previous`` is returned so the
    caller's state is left untouched. Without ``previous`` a zero input raises.
    """
    mag = abs(b)
    if mag == 0.0:
        if previous is None:
            raise ValueError("phase of a zero coefficient is undefined")
        return previous
    return b / mag


def unit_modulus(X: np.ndarray) -> np.ndarray:
    """Element-wise ``exp(j*angle(X))``; exact unit modulus by construction."""
    return np.exp(1j * np.angle(X))


def permutation_from_order(order: Sequence[int], one_based: bool = False) -> np.ndarray:
    """Permutation matrix ``L`` with ``(L @ s)[k] == s[order[k]]``.

    Indices are zero-based unless ``one_based`` is set.
    """
    idx = np.asarray(order, dtype=int).ravel()
    if one_based:
        idx = idx - 1
    D = idx.size
    if D == 0 or sorted(idx.tolist()) != list(range(D)):
        raise PermutationError(f"not a permutation of {D} indices: {list(order)}")
    L = np.zeros((D, D))
    L[np.arange(D), idx] = 1.0
    return L


def fro2(X: np.ndarray) -> float:
    """Squared Frobenius norm."""
    X = np.asarray(X)
    return float(np.vdot(X, X).real)


def hermitian(X: np.ndarray) -> np.ndarray:
    return np.conj(X).T
