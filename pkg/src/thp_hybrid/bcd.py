"""Five-block coordinate descent on the noise-scaled objective.

Each iteration updates, in order, the digital receivers ``P_m``, the THP
feedback ``U``, the analog combiners ``F_m``, the analog precoder ``T`` and the
digital precoder ``W``.  Every block update is an exact block minimiser, so
the objective never increases.  The digital blocks only need the effective
channels ``F_m H_m T`` and two Gram matrices; :class:`DigitalProblem` holds
those so the same code serves the two-timescale short solve.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .core import fro2, strict_lower, unit_modulus
from .objective import TransceiverState, mse_sigma, theorem1_scale
from .thp import order_users

BLOCKS = ("P", "U", "F", "T", "W")


def solve_hpd(A: np.ndarray, B: np.ndarray, eps: float = 1e-10):
    """Solve ``A X = B`` for Hermitian PSD ``A``.

    Falls back to Tikhonov regularisation ``eps * trace(A)/n`` (or ``eps``
    when the trace vanishes) if ``A`` is numerically singular.  Returns
    ``(X, regularised)``.
    """
    n = A.shape[0]
    scale = max(float(np.trace(A).real) / n, 0.0)
    if scale > 0:
        try:
            chol = np.linalg.cholesky(A)
            if np.min(np.abs(np.diag(chol))) ** 2 > 1e-13 * scale:
                return np.linalg.solve(A, B), False
        except np.linalg.LinAlgError:
            pass
    reg = eps * scale if scale > 0 else eps
    return np.linalg.solve(A + reg * np.eye(n), B), True


@dataclass
class DigitalProblem:
    """Noise-scaled objective seen by the digital blocks for fixed analog parts.

    ``H_eff[m] = F_m H_hat_m T``; ``gram_F[m] = F_m F_m^H``; ``gram_T = T^H T``.
    """

    H_eff: list
    gram_F: list
    gram_T: np.ndarray
    sigma_e_hat: np.ndarray
    P_t: float
    L: np.ndarray

    @classmethod
    def from_state(cls, state: TransceiverState, cs, P_t: float) -> "DigitalProblem":
        T = state.T
        return cls(
            H_eff=[f @ h @ T for f, h in zip(state.F, cs.H_hat)],
            gram_F=[f @ f.conj().T for f in state.F],
            gram_T=T.conj().T @ T,
            sigma_e_hat=np.asarray(cs.sigma_e_hat, dtype=float),
            P_t=P_t,
            L=state.L,
        )

    @property
    def M(self) -> int:
        return len(self.H_eff)

    def penalty(self) -> np.ndarray:
        """Per-user ``sigma_e_hat^2 + 1/P_t``."""
        return self.sigma_e_hat**2 + 1.0 / self.P_t

    def tw2(self, W) -> float:
        return float(np.vdot(W, self.gram_T @ W).real)

    def pf2(self, P) -> np.ndarray:
        return np.array([np.vdot(p, p @ g).real for p, g in zip(P, self.gram_F)])

    def targets(self, U, slices) -> list:
        Y = self.L.T @ U
        return [Y[sl] for sl in slices]

    def objective(self, P, U, W, slices) -> float:
        total = sum(fro2(p @ h @ W - y) for p, h, y in zip(P, self.H_eff, self.targets(U, slices)))
        return float(total + np.sum(self.penalty() * self.tw2(W) * self.pf2(P)))

    def update_p(self, U, W, slices):
        tw2 = self.tw2(W)
        out, flagged = [], False
        for h, g, y, c in zip(self.H_eff, self.gram_F, self.targets(U, slices), self.penalty()):
            hw = h @ W
            A = hw @ hw.conj().T + c * tw2 * g
            X, reg = solve_hpd(A, (y @ hw.conj().T).conj().T)
            out.append(X.conj().T)
            flagged |= reg
        return out, flagged

    def feedback_input(self, P, W) -> np.ndarray:
        """``L * stack_m(P_m H_eff_m W)``; its strictly lower part is the optimal ``C``."""
        return self.L @ np.vstack([p @ h @ W for p, h in zip(P, self.H_eff)])

    def update_u(self, P, W) -> np.ndarray:
        G = self.feedback_input(P, W)
        return np.eye(G.shape[0], dtype=complex) + strict_lower(G)

    def update_w(self, P, U, slices):
        pf2 = self.pf2(P)
        R = self.gram_T.shape[0]
        A = np.zeros((R, R), dtype=complex)
        B = np.zeros((R, U.shape[0]), dtype=complex)
        for p, h, y, c, pf in zip(P, self.H_eff, self.targets(U, slices), self.penalty(), pf2):
            ph = p @ h
            A += ph.conj().T @ ph + c * pf * self.gram_T
            B += ph.conj().T @ y
        return solve_hpd(A, B)


def phase_sweep(X: np.ndarray, A: np.ndarray, C: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-major sweep of exact unit-modulus entry updates.

    Minimises ``tr(X^H A X C) - 2 Re tr(X^H B)`` one entry at a time.  The
    product ``A X C`` is kept current with rank-one corrections instead of
    being recomputed.  Entries whose coefficient vanishes are left unchanged.
    """
    X = X.copy()
    Q = A @ X @ C
    dA = np.real(np.diag(A))
    dC = np.real(np.diag(C))
    rows, cols = X.shape
    for i in range(rows):
        for j in range(cols):
            b = dA[i] * X[i, j] * dC[j] - Q[i, j] + B[i, j]
            mag = abs(b)
            if mag == 0.0:
                continue
            x = b / mag
            delta = x - X[i, j]
            if delta != 0:
                Q += delta * np.outer(A[:, i], C[j, :])
                X[i, j] = x
    return X


def f_coefficients(state: TransceiverState, cs, P_t: float, m: int):
    """``(A_F, C_F, B_F)`` of the user-``m`` combiner subproblem."""
    TW = state.T @ state.W
    htw = cs.H_hat[m] @ TW
    c = cs.sigma_e_hat[m] ** 2 + 1.0 / P_t
    p = state.P[m]
    y = state.targets()[m]
    A = p.conj().T @ p
    C = htw @ htw.conj().T + c * fro2(TW) * np.eye(htw.shape[0])
    B = p.conj().T @ y @ htw.conj().T
    return A, C, B


def t_coefficients(state: TransceiverState, cs, P_t: float):
    """``(A_T, C_T, B_T)`` of the analog precoder subproblem."""
    N_s = state.T.shape[0]
    A = np.zeros((N_s, N_s), dtype=complex)
    B = np.zeros(state.T.shape, dtype=complex)
    ridge = 0.0
    for p, f, h, y, se in zip(state.P, state.F, cs.H_hat, state.targets(), cs.sigma_e_hat):
        pfh = p @ f @ h
        A += pfh.conj().T @ pfh
        B += pfh.conj().T @ y @ state.W.conj().T
        ridge += (se**2 + 1.0 / P_t) * fro2(p @ f)
    A += ridge * np.eye(N_s)
    C = state.W @ state.W.conj().T
    return A, C, B


def update_p(state: TransceiverState, cs, P_t: float):
    """Closed-form receivers; returns ``(P list, regularised flag)``."""
    dp = DigitalProblem.from_state(state, cs, P_t)
    return dp.update_p(state.U, state.W, state.stream_slices())


def update_u(state: TransceiverState, cs) -> np.ndarray:
    dp = DigitalProblem.from_state(state, cs, 1.0)
    return dp.update_u(state.P, state.W)


def update_f_block(state: TransceiverState, cs, P_t: float, m: int) -> np.ndarray:
    return phase_sweep(state.F[m], *f_coefficients(state, cs, P_t, m))


def update_t(state: TransceiverState, cs, P_t: float) -> np.ndarray:
    return phase_sweep(state.T, *t_coefficients(state, cs, P_t))


def update_w(state: TransceiverState, cs, P_t: float):
    """Closed-form digital precoder; returns ``(W, regularised flag)``."""
    dp = DigitalProblem.from_state(state, cs, P_t)
    return dp.update_w(state.P, state.U, state.stream_slices())


def _phase_normalise(V: np.ndarray) -> np.ndarray:
    """Rotate each column so its first nonzero entry is real and positive."""
    V = V.copy()
    for k in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, k]) > 1e-14)
        if nz.size:
            V[:, k] *= np.exp(-1j * np.angle(V[nz[0], k]))
    return V


def channel_match_analog(cs, cfg):
    """Unit-modulus analog matrices from dominant singular-vector phases.

    ``T`` takes the phases of the top ``R_s`` right singular vectors of the
    stacked scaled channel; ``F_m`` the conjugated phases of the top
    ``R_d,m`` left singular vectors of each user's scaled channel.
    """
    stacked = np.vstack(cs.H_hat)
    _, _, Vh = np.linalg.svd(stacked)
    T = unit_modulus(_phase_normalise(Vh.conj().T[:, : cfg.R_s]))
    F = []
    for h, r in zip(cs.H_hat, cfg.R_d):
        Um, _, _ = np.linalg.svd(h)
        F.append(unit_modulus(_phase_normalise(Um[:, :r]).conj().T))
    return T, F


def initial_state(cfg, cs, L=None, analog: str = "channel-match") -> TransceiverState:
    """Feasible starting point; ``P`` is left at zero for the caller to fill.

    ``analog`` is ``"channel-match"`` or ``"identity"`` (fully digital).
    """
    if L is None:
        L = order_users([fro2(h) for h in cs.H_hat], cfg.D_m)
    if analog == "identity":
        T = np.eye(cfg.N_s, dtype=complex)
        F = [np.eye(n, dtype=complex) for n in cfg.N_d]
    elif analog == "channel-match":
        T, F = channel_match_analog(cs, cfg)
    else:
        raise ValueError(f"unknown analog initialisation {analog!r}")
    D, R_s = cfg.D, T.shape[1]
    W = np.zeros((R_s, D), dtype=complex)
    W[:D, :D] = np.eye(D)
    W *= np.sqrt(cfg.P_t / fro2(T @ W))
    P = [np.zeros((d, f.shape[0]), dtype=complex) for d, f in zip(cfg.D_m, F)]
    return TransceiverState(P=P, F=F, T=T, W=W, U=np.eye(D, dtype=complex), L=np.asarray(L, float))


@dataclass(frozen=True)
class BcdSettings:
    """Stopping rule and which blocks are free.

    ``optimize_analog=False`` freezes ``T`` and ``F_m``; ``nonlinear=False``
    pins ``U`` to the identity (linear precoding).
    """

    tol: float = 1e-6
    max_iter: int = 500
    optimize_analog: bool = True
    nonlinear: bool = True
    init: str = "channel-match"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("need at least one iteration")


@dataclass
class BcdTrace:
    """Objective history of one solve.

    ``objective[0]`` is the value at the starting point (after the first
    receiver update); ``objective[k]`` the value after iteration ``k``.
    ``block_objective[k-1]`` holds the value after each of the five blocks
    of iteration ``k`` and ``block_seconds`` their run times.
    """

    objective: list = field(default_factory=list)
    block_objective: list = field(default_factory=list)
    block_seconds: list = field(default_factory=list)
    iterations: int = 0
    exit_reason: str = ""
    regularised: list = field(default_factory=list)
    wall_seconds: float = 0.0

    def max_relative_increase(self) -> float:
        """Largest relative rise between consecutive block updates."""
        seq = [self.objective[0]]
        for row in self.block_objective:
            seq.extend(row)
        seq = np.asarray(seq)
        if seq.size < 2:
            return 0.0
        rise = (seq[1:] - seq[:-1]) / np.maximum(np.abs(seq[:-1]), 1e-300)
        return float(max(rise.max(), 0.0))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "non_increasing", *[f"after_{b}" for b in BLOCKS],
                        *[f"{b}_ms" for b in BLOCKS]])
            w.writerow([0, repr(self.objective[0]), 1, *[""] * 10])
            prev = self.objective[0]
            for k, (obj, blk, sec) in enumerate(
                    zip(self.objective[1:], self.block_objective, self.block_seconds), start=1):
                ok = all(b <= a + 1e-10 * abs(a) for a, b in zip([prev, *blk[:-1]], blk))
                w.writerow([k, repr(obj), int(ok), *map(repr, blk), *(f"{1e3 * s:.3f}" for s in sec)])
                prev = obj


def solve(cfg, cs, L=None, settings: BcdSettings | None = None,
          init: TransceiverState | None = None):
    """Run the coordinate descent to tolerance and rescale to the power budget.

    Returns ``(state, trace)`` where ``state`` meets ``||T W||^2 = P_t`` and
    its :func:`~thp_hybrid.objective.mse` equals the final traced value.
    """
    settings = settings or BcdSettings()
    P_t = cfg.P_t
    state = init.copy() if init is not None else initial_state(cfg, cs, L, settings.init)
    if L is not None:
        state.L = np.asarray(L, float)
    if not settings.nonlinear:
        state.U = np.eye(state.D, dtype=complex)
    state.nonlinear = settings.nonlinear
    slices = state.stream_slices()
    trace = BcdTrace()
    start = time.perf_counter()

    dp = DigitalProblem.from_state(state, cs, P_t)
    state.P, flag = dp.update_p(state.U, state.W, slices)
    if flag:
        trace.regularised.append((0, "P"))
    prev = dp.objective(state.P, state.U, state.W, slices)
    trace.objective.append(prev)

    for it in range(1, settings.max_iter + 1):
        objs, secs = [], []

        t0 = time.perf_counter()
        state.P, flag = dp.update_p(state.U, state.W, slices)
        if flag:
            trace.regularised.append((it, "P"))
        secs.append(time.perf_counter() - t0)
        objs.append(dp.objective(state.P, state.U, state.W, slices))

        t0 = time.perf_counter()
        if settings.nonlinear:
            state.U = dp.update_u(state.P, state.W)
        secs.append(time.perf_counter() - t0)
        objs.append(dp.objective(state.P, state.U, state.W, slices))

        t0 = time.perf_counter()
        if settings.optimize_analog:
            for m in range(state.M):
                state.F[m] = update_f_block(state, cs, P_t, m)
        secs.append(time.perf_counter() - t0)
        objs.append(mse_sigma(state, cs, P_t))

        t0 = time.perf_counter()
        if settings.optimize_analog:
            state.T = update_t(state, cs, P_t)
            dp = DigitalProblem.from_state(state, cs, P_t)
        secs.append(time.perf_counter() - t0)
        objs.append(dp.objective(state.P, state.U, state.W, slices))

        t0 = time.perf_counter()
        state.W, flag = dp.update_w(state.P, state.U, slices)
        if flag:
            trace.regularised.append((it, "W"))
        secs.append(time.perf_counter() - t0)
        cur = dp.objective(state.P, state.U, state.W, slices)
        objs.append(cur)

        trace.block_objective.append(objs)
        trace.block_seconds.append(secs)
        trace.objective.append(cur)
        trace.iterations = it
        if abs(prev - cur) < settings.tol:
            trace.exit_reason = "converged"
            break
        prev = cur
    else:
        trace.exit_reason = "max_iter"

    trace.wall_seconds = time.perf_counter() - start
    return theorem1_scale(state, P_t, cs.sigma), trace


def optimal_feedback(state: TransceiverState, cs) -> np.ndarray:
    """``U`` minimising the objective for the current linear parts of a scaled state."""
    X = np.vstack([p @ f @ h @ state.T @ state.W for p, f, h in zip(state.P, state.F, cs.H_bar)])
    G = state.L @ X
    return np.eye(G.shape[0], dtype=complex) + strict_lower(G)


__all__ = [
    "BcdSettings", "BcdTrace", "DigitalProblem", "channel_match_analog", "f_coefficients",
    "initial_state", "optimal_feedback", "phase_sweep", "solve", "solve_hpd", "t_coefficients",
    "update_f_block", "update_p", "update_t", "update_u", "update_w",
]
