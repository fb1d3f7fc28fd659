"""Independent oracles for the closed-form block updates."""

import numpy as np

from thp_hybrid.core import fro2

from conftest import random_channels, random_state, small_config

GRID = np.exp(2j * np.pi * np.arange(4096) / 4096)


def instance(seed):
    rng = np.random.default_rng(seed)
    cfg = small_config(rng)
    return rng, cfg, random_channels(rng, cfg), random_state(rng, cfg)


def lstsq_receivers(state, cs, P_t):
    """Each P_m solves a ridge problem; stack it as ordinary least squares."""
    TW2 = fro2(state.T @ state.W)
    out = []
    for m, (f, h, y) in enumerate(zip(state.F, cs.H_hat, state.targets())):
        A = f @ h @ state.T @ state.W
        c = (cs.sigma_e_hat[m] ** 2 + 1 / P_t) * TW2
        lhs = np.hstack([A, np.sqrt(c) * f]).conj().T
        rhs = np.hstack([y, np.zeros((y.shape[0], f.shape[1]))]).conj().T
        out.append(np.linalg.lstsq(lhs, rhs, rcond=None)[0].conj().T)
    return out


def lstsq_precoder(state, cs, P_t):
    ridge = sum((cs.sigma_e_hat[m] ** 2 + 1 / P_t) * fro2(p @ f) for m, (p, f) in enumerate(zip(state.P, state.F)))
    rows = [p @ f @ h @ state.T for p, f, h in zip(state.P, state.F, cs.H_hat)]
    lhs = np.vstack(rows + [np.sqrt(ridge) * state.T])
    rhs = np.vstack(state.targets() + [np.zeros((state.T.shape[0], state.D))])
    return np.linalg.lstsq(lhs, rhs, rcond=None)[0]


def lstsq_feedback(state, cs, P_t):
    """Least squares over the strictly lower entries of U only."""
    D = state.D
    idx = [(i, j) for j in range(D) for i in range(j + 1, D)]

    def objective_residual(U):
        # mse_sigma depends on U through sum_m ||X_m - (L^T U)_m||^2 = ||L X - U||^2
        X = np.vstack([p @ f @ h @ state.T @ state.W for p, f, h in zip(state.P, state.F, cs.H_hat)])
        return (state.L @ X - U).ravel()

    base = objective_residual(np.eye(D))
    cols = []
    for i, j in idx:
        E = np.zeros((D, D), complex)
        E[i, j] = 1
        cols.append(objective_residual(np.eye(D) + E) - base)
    U = np.eye(D, dtype=complex)
    if idx:
        coef = np.linalg.lstsq(np.array(cols).T, -base, rcond=None)[0]
        for (i, j), c in zip(idx, coef):
            U[i, j] = c
    return U



def sweep_oracle_check(X0, X1, A, C, B):
    """Each entry of the sweep output must beat every phase on a 4096-point grid."""
    obj = lambda X: (np.trace(X.conj().T @ A @ X @ C) - 2 * np.trace(X.conj().T @ B)).real
    rows, cols = X0.shape
    checked = 0
    for k in range(rows * cols):
        i, j = divmod(k, cols)
        mix = X1.copy().ravel()
        mix[k:] = X0.ravel()[k:]
        mix = mix.reshape(rows, cols)
        vals = []
        for g in GRID:
            mix[i, j] = g
            vals.append(obj(mix))
        best = GRID[int(np.argmin(vals))]
        mix[i, j] = X1[i, j]
        gap = abs(np.angle(X1[i, j] * np.conj(best)))
        assert gap <= np.pi / 4096 + 1e-9
        assert obj(mix) <= min(vals) + 1e-9 * max(1.0, abs(min(vals)))
        checked += 1
    return checked
