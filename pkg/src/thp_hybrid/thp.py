"""QAM alphabet, modulo arithmetic, THP encoding/decoding and user ordering."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import DimensionError, fro2, permutation_from_order, strict_lower


@dataclass(frozen=True)
class QamConstellation:
    """Unit-energy square ``Q``-QAM.

    Each real dimension takes values in ``{+-d, +-3d, ..., +-(sqrt(Q)-1)d}``
    with ``d = sqrt(3 / (2(Q-1)))``. The modulo half-period ``a_mod`` equals
    ``sqrt(Q) * d`` so the alphabet tiles the line under shifts of ``2*a_mod``.
    """

    Q: int = 16

    def __post_init__(self):
        root = math.isqrt(self.Q)
        if root * root != self.Q or self.Q < 4:
            raise ValueError(f"Q={self.Q} is not a square QAM order")

    @property
    def levels_per_dim(self) -> int:
        return math.isqrt(self.Q)

    @property
    def d(self) -> float:
        return math.sqrt(3.0 / (2.0 * (self.Q - 1)))

    @property
    def a_mod(self) -> float:
        return math.sqrt(3.0 * self.Q / (2.0 * (self.Q - 1)))

    @cached_property
    def levels(self) -> np.ndarray:
        k = self.levels_per_dim
        return (2 * np.arange(k) - (k - 1)) * self.d

    @cached_property
    def points(self) -> np.ndarray:
        lv = self.levels
        return (lv[:, None] + 1j * lv[None, :]).ravel()

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        k = self.levels_per_dim
        re = self.levels[rng.integers(0, k, size=shape)]
        im = self.levels[rng.integers(0, k, size=shape)]
        return re + 1j * im

    def slice(self, y: np.ndarray) -> np.ndarray:
        """Nearest alphabet point per real dimension (clipped at the edges)."""
        return self._slice_real(np.real(y)) + 1j * self._slice_real(np.imag(y))

    def _slice_real(self, y: np.ndarray) -> np.ndarray:
        k = self.levels_per_dim
        idx = np.clip(np.floor(y / (2 * self.d) + k / 2), 0, k - 1).astype(int)
        return self.levels[idx]


def _mod_real(x: np.ndarray, a: float) -> np.ndarray:
    return x - 2 * a * np.floor((x + a) / (2 * a))


def modulo(x, Q: int):
    """Reduce ``x`` into ``[-a_mod, a_mod)`` per real dimension.

    Returns ``(value, e)`` with ``value = x + e`` and ``e`` a multiple of
    ``2*a_mod`` in each real dimension.
    """
    a = QamConstellation(Q).a_mod
    x = np.asarray(x)
    if np.iscomplexobj(x):
        value = _mod_real(x.real, a) + 1j * _mod_real(x.imag, a)
    else:
        value = _mod_real(x, a)
    e = value - x
    if value.ndim == 0:
        return value.item(), e.item()
    return value, e


def thp_encode(s: np.ndarray, C: np.ndarray, Q: int):
    """Successive THP encoding.

    ``s`` has shape ``(D,)`` or ``(D, n)`` (one column per symbol vector);
    ``C`` is the strictly lower feedback matrix. Returns ``(x, v)`` where
    ``v = s + e`` and ``(I + C) @ x == v`` up to rounding.
    """
    s = np.asarray(s, dtype=complex)
    C = np.asarray(C)
    D = s.shape[0]
    if C.shape != (D, D):
        raise DimensionError(f"feedback {C.shape} does not match {D} streams")
    a = QamConstellation(Q).a_mod
    x = np.empty_like(s)
    e = np.empty_like(s)
    for k in range(D):
        pre = s[k] - C[k, :k] @ x[:k] if k else s[k]
        x[k] = _mod_real(pre.real, a) + 1j * _mod_real(pre.imag, a)
        e[k] = x[k] - pre
    return x, s + e


def thp_decode(v_hat: np.ndarray, Q: int) -> np.ndarray:
    """Modulo reduction followed by per-dimension slicing."""
    value, _ = modulo(np.asarray(v_hat, dtype=complex), Q)
    return QamConstellation(Q).slice(value)


def user_order(norms_sq: Sequence[float]) -> list[int]:
    """Users sorted by ascending squared channel norm (stable in user index).

    Placing stronger users later maximises ``sum_i i * ||H_(i)||^2``.
    """
    return [int(i) for i in np.argsort(np.asarray(norms_sq, dtype=float), kind="stable")]


def stream_order(users: Sequence[int], streams_per_user: Sequence[int]) -> list[int]:
    offsets = np.concatenate([[0], np.cumsum(streams_per_user)]).astype(int)
    order: list[int] = []
    for m in users:
        order.extend(range(offsets[m], offsets[m + 1]))
    return order


def order_users(norms_sq: Sequence[float], streams_per_user: Sequence[int] | None = None) -> np.ndarray:
    """Stream-level cancellation ordering matrix ``L`` from user channel norms.

    Streams of one user stay contiguous and in natural order.
    """
    if streams_per_user is None:
        streams_per_user = [1] * len(norms_sq)
    return permutation_from_order(stream_order(user_order(norms_sq), streams_per_user))


def ordering_score(norms_sq: Sequence[float], users: Sequence[int]) -> float:
    """``sum_i i * norms_sq[users[i-1]]`` for a user order."""
    return float(sum((i + 1) * norms_sq[m] for i, m in enumerate(users)))


def stacked_receive(P: Sequence[np.ndarray], F: Sequence[np.ndarray], H: Sequence[np.ndarray]) -> np.ndarray:
    """Rows ``P_m F_m H_m`` stacked over users (``D x N_s``)."""
    return np.vstack([p @ f @ h for p, f, h in zip(P, F, H)])


def thp_gain(P, F, T, W, L, H_hat) -> float:
    """MSE change obtained by optimal feedback: ``-||Delta(L A T W~ L^T)||^2``.

    ``W~ = W L``; ``A`` stacks ``P_m F_m H_m``. Non-positive by construction.
    """
    A = stacked_receive(P, F, H_hat)
    W_tilde = W @ L
    X = L @ A @ T @ W_tilde @ L.T
    if X.shape[0] != X.shape[1]:
        raise DimensionError(f"effective matrix {X.shape} is not square")
    return -fro2(strict_lower(X))
