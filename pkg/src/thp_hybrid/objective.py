"""Robust MSE, its noise-scaled counterpart, power rescaling and KKT residuals."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, fro2, strict_lower


@dataclass
class TransceiverState:
    """All design variables of the THP hybrid transceiver.

    ``P[m]`` is ``D_m x R_d,m``, ``F[m]`` is ``R_d,m x N_d,m``, ``T`` is
    ``N_s x R_s``, ``W`` is ``R_s x D``, ``U = I + C`` is ``D x D`` unit lower
    triangular and ``L`` the ``D x D`` ordering permutation.  ``nonlinear``
    tells the receiver chain whether to apply the modulo before slicing.
    """

    P: list
    F: list
    T: np.ndarray
    W: np.ndarray
    U: np.ndarray
    L: np.ndarray
    nonlinear: bool = True

    @property
    def M(self) -> int:
        return len(self.P)

    @property
    def D(self) -> int:
        return self.U.shape[0]

    @property
    def C(self) -> np.ndarray:
        return strict_lower(self.U)

    def stream_slices(self) -> list[slice]:
        out, start = [], 0
        for p in self.P:
            out.append(slice(start, start + p.shape[0]))
            start += p.shape[0]
        return out

    def targets(self) -> list[np.ndarray]:
        """Per-user desired rows ``A_m L^T U``."""
        Y = self.L.T @ self.U
        return [Y[sl] for sl in self.stream_slices()]

    def copy(self) -> "TransceiverState":
        return TransceiverState(
            P=[p.copy() for p in self.P],
            F=[f.copy() for f in self.F],
            T=self.T.copy(),
            W=self.W.copy(),
            U=self.U.copy(),
            L=self.L.copy(),
            nonlinear=self.nonlinear,
        )

    def with_linear(self) -> "TransceiverState":
        """Same linear parts with the feedback removed (``U = I``)."""
        s = self.copy()
        s.U = np.eye(self.D, dtype=complex)
        s.nonlinear = False
        return s

    def max_modulus_error(self) -> float:
        mats = [self.T, *self.F]
        return max(float(np.max(np.abs(np.abs(m) - 1.0))) for m in mats)


def _check(state: TransceiverState, H: Sequence[np.ndarray]) -> None:
    if len(H) != state.M:
        raise DimensionError(f"{len(H)} channels for {state.M} users")
    for m, (p, f, h) in enumerate(zip(state.P, state.F, H)):
        if p.shape[1] != f.shape[0] or f.shape[1] != h.shape[0] or h.shape[1] != state.T.shape[0]:
            raise DimensionError(f"user {m}: P{p.shape} F{f.shape} H{h.shape} T{state.T.shape}")
    if state.W.shape != (state.T.shape[1], state.D):
        raise DimensionError(f"W{state.W.shape} does not fit T{state.T.shape} and D={state.D}")


def _core_terms(state, H):
    """Per-user ``(P F H T W - A L^T U, ||P F||^2)`` and ``||T W||^2``."""
    _check(state, H)
    TW = state.T @ state.W
    errs, pf2 = [], []
    for p, f, h, y in zip(state.P, state.F, H, state.targets()):
        pf = p @ f
        errs.append(pf @ h @ TW - y)
        pf2.append(fro2(pf))
    return errs, np.array(pf2), fro2(TW)


def mse(state: TransceiverState, cs, sigma=None, sigma_e=None) -> float:
    """Robust sum MSE averaged analytically over CSI errors and noise.

    Uses the estimated channels ``cs.H_bar``.  Identical to expanding
    ``sum_m tr(...) + tr(U U^H)`` term by term.
    """
    sigma = cs.sigma if sigma is None else np.broadcast_to(sigma, (state.M,))
    sigma_e = cs.sigma_e if sigma_e is None else np.broadcast_to(sigma_e, (state.M,))
    errs, pf2, tw2 = _core_terms(state, cs.H_bar)
    total = sum(fro2(e) for e in errs)
    return float(total + np.sum((np.asarray(sigma_e) ** 2 * tw2 + np.asarray(sigma) ** 2) * pf2))


def mse_sigma(state: TransceiverState, cs, P_t: float) -> float:
    """Noise-scaled objective: the power constraint is replaced by a ``1/P_t`` penalty."""
    errs, pf2, tw2 = _core_terms(state, cs.H_hat)
    total = sum(fro2(e) for e in errs)
    return float(total + np.sum((np.asarray(cs.sigma_e_hat) ** 2 + 1.0 / P_t) * tw2 * pf2))


class DegeneratePrecoderError(ValueError):
    pass


def theorem1_scale(state: TransceiverState, P_t: float, sigma) -> TransceiverState:
    """Map a solution of the scaled problem to one meeting ``||T W||^2 = P_t``.

    ``W`` is multiplied by ``a = sqrt(P_t)/||T W||`` and each ``P_m`` divided
    by ``a * sigma_m``, which keeps every MSE term unchanged.
    """
    norm = np.sqrt(fro2(state.T @ state.W))
    if norm == 0:
        raise DegeneratePrecoderError("T W is zero; no power scaling exists")
    a = np.sqrt(P_t) / norm
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (state.M,))
    out = state.copy()
    out.W = a * state.W
    out.P = [p / (a * s) for p, s in zip(state.P, sigma)]
    return out


def mse_gradients(state: TransceiverState, cs, sigma=None, sigma_e=None) -> dict:
    """Conjugate (Wirtinger) gradients of :func:`mse` for every block.

    Returns a dict with keys ``P``, ``F`` (lists), ``T``, ``W`` and ``U``.
    ``U`` is the full-matrix gradient; only its strictly lower part is free.
    """
    sigma = np.asarray(cs.sigma if sigma is None else np.broadcast_to(sigma, (state.M,)))
    sigma_e = np.asarray(cs.sigma_e if sigma_e is None else np.broadcast_to(sigma_e, (state.M,)))
    errs, pf2, tw2 = _core_terms(state, cs.H_bar)
    T, W = state.T, state.W
    TW = T @ W
    gP, gF = [], []
    gT = np.zeros_like(T, dtype=complex)
    gW = np.zeros_like(W, dtype=complex)
    for m, (p, f, h, e) in enumerate(zip(state.P, state.F, cs.H_bar, errs)):
        c = sigma_e[m] ** 2 * tw2 + sigma[m] ** 2
        htw = h @ TW
        gP.append(e @ (f @ htw).conj().T + c * p @ f @ f.conj().T)
        gF.append(p.conj().T @ e @ htw.conj().T + c * p.conj().T @ p @ f)
        back = (p @ f @ h).conj().T @ e            # H^H F^H P^H E
        gT += back @ W.conj().T + sigma_e[m] ** 2 * pf2[m] * TW @ W.conj().T
        gW += T.conj().T @ back + sigma_e[m] ** 2 * pf2[m] * T.conj().T @ TW
    X = np.vstack([p @ f @ h @ TW for p, f, h in zip(state.P, state.F, cs.H_bar)])
    gU = state.U - state.L @ X
    return {"P": gP, "F": gF, "T": gT, "W": gW, "U": gU}


def tangent(G: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Remove the component of ``G`` parallel to each unit-modulus entry of ``X``.

    Real element-wise multipliers on ``|X_ij| = 1`` absorb exactly this radial part.
    """
    return G - np.real(G * np.conj(X)) * X


@dataclass
class KktReport:
    """First-order residuals of the power-constrained problem at a scaled point."""

    residual: dict
    scale: dict
    power_slack: float
    lam: float
    lam_fit: float
    modulus_error: float

    @property
    def scaled(self) -> dict:
        return {k: self.residual[k] / (1.0 + self.scale[k]) for k in self.residual}

    def max_scaled(self) -> float:
        return max(self.scaled.values())


def power_multiplier(state: TransceiverState, sigma, P_t: float) -> float:
    """``sum_m sigma_m^2 ||P_m F_m||^2 / P_t`` at a power-scaled point."""
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (state.M,))
    return float(sum(s**2 * fro2(p @ f) for p, f, s in zip(state.P, state.F, sigma)) / P_t)


def kkt_residual(state: TransceiverState, cs, P_t: float, analog: bool = True) -> KktReport:
    """Stationarity residuals of the original problem.

    The power multiplier is taken from the closed-form identity; ``lam_fit``
    is the least-squares multiplier implied by the ``W`` condition alone, so
    comparing the two checks that identity.  ``analog=False`` skips the
    unit-modulus blocks (fully digital or frozen analog designs).
    """
    g = mse_gradients(state, cs)
    lam = power_multiplier(state, cs.sigma, P_t)
    T, W = state.T, state.W
    dpow_W = T.conj().T @ T @ W
    dpow_T = T @ W @ W.conj().T
    denom = fro2(dpow_W)
    lam_fit = -float(np.real(np.vdot(dpow_W, g["W"]))) / denom if denom > 0 else 0.0

    res = {
        "P": np.sqrt(sum(fro2(x) for x in g["P"])),
        "U": np.sqrt(fro2(strict_lower(g["U"]))),
        "W": np.sqrt(fro2(g["W"] + lam * dpow_W)),
    }
    # cross-term magnitudes give each block a natural scale
    cross_W = np.zeros_like(W, dtype=complex)
    cross_T = np.zeros_like(T, dtype=complex)
    cross_P, cross_F = 0.0, 0.0
    for p, f, h, y in zip(state.P, state.F, cs.H_bar, state.targets()):
        ftw = f @ h @ T @ W
        cross_P += fro2(y @ ftw.conj().T)
        cross_F += fro2(p.conj().T @ y @ (h @ T @ W).conj().T)
        cross_W += (p @ f @ h @ T).conj().T @ y
        cross_T += (p @ f @ h).conj().T @ y @ W.conj().T
    scale = {"P": np.sqrt(cross_P), "U": np.sqrt(fro2(strict_lower(state.U))), "W": np.sqrt(fro2(cross_W))}
    if analog:
        res["F"] = np.sqrt(sum(fro2(tangent(gf, f)) for gf, f in zip(g["F"], state.F)))
        res["T"] = np.sqrt(fro2(tangent(g["T"] + lam * dpow_T, T)))
        scale["F"] = np.sqrt(cross_F)
        scale["T"] = np.sqrt(fro2(cross_T))
    return KktReport(
        residual={k: float(v) for k, v in res.items()},
        scale={k: float(v) for k, v in scale.items()},
        power_slack=abs(fro2(T @ W) - P_t),
        lam=lam,
        lam_fit=lam_fit,
        modulus_error=state.max_modulus_error() if analog else 0.0,
    )
