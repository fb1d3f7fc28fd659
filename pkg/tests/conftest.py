"""Shared builders for small random instances."""

import numpy as np
import pytest

from thp_hybrid.channel import make_channel_set
from thp_hybrid.config import SystemConfig
from thp_hybrid.core import permutation_from_order, unit_modulus
from thp_hybrid.objective import TransceiverState


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def small_config(rng, **overrides):
    """Random dimensions, all at most 4."""
    M = int(overrides.pop("M", rng.integers(1, 3)))
    N_s = int(rng.integers(2, 5))
    N_d = int(rng.integers(2, 5))
    R_d = int(rng.integers(1, N_d + 1))
    D_m = int(rng.integers(1, min(R_d, 4 // M) + 1))
    R_s = int(rng.integers(M * D_m, 5))
    if "D_m" in overrides:
        D_m = overrides.pop("D_m")
    if "R_s" in overrides:
        R_s = overrides.pop("R_s")
    base = dict(M=M, N_s=max(N_s, R_s), R_s=R_s, N_d=N_d, R_d=R_d, D_m=D_m,
                P_t=float(rng.uniform(1, 50)), sigma=float(rng.uniform(0.5, 2.0)),
                sigma_e=float(rng.uniform(0.0, 0.3)))
    base.update(overrides)
    return SystemConfig(**base)


def random_channels(rng, cfg):
    H = [crandn(rng, nd, cfg.N_s) for nd in cfg.N_d]
    dH = [crandn(rng, nd, cfg.N_s) for nd in cfg.N_d]
    return make_channel_set(H, dH, cfg.sigma, cfg.sigma_e)


def random_state(rng, cfg, nonlinear=True):
    """Feasible-shaped state with unit-modulus analog parts and a random order."""
    D = cfg.D
    U = np.eye(D, dtype=complex)
    if nonlinear:
        U += np.tril(crandn(rng, D, D), -1)
    return TransceiverState(
        P=[crandn(rng, d, r) for d, r in zip(cfg.D_m, cfg.R_d)],
        F=[unit_modulus(crandn(rng, r, n)) for r, n in zip(cfg.R_d, cfg.N_d)],
        T=unit_modulus(crandn(rng, cfg.N_s, cfg.R_s)),
        W=crandn(rng, cfg.R_s, D),
        U=U,
        L=permutation_from_order(rng.permutation(D)),
        nonlinear=nonlinear,
    )


def scalar_instance(P=1.0, sigma_e=0.0, sigma=1.0):
    """Every dimension one and every variable one, except ``P``."""
    cfg = SystemConfig(M=1, N_s=1, R_s=1, N_d=1, R_d=1, D_m=1, P_t=1.0, sigma=sigma, sigma_e=sigma_e)
    one = np.ones((1, 1), dtype=complex)
    cs = make_channel_set([one.copy()], [np.zeros((1, 1))], [sigma], [sigma_e])
    state = TransceiverState(P=[P * one], F=[one.copy()], T=one.copy(), W=one.copy(),
                             U=one.copy(), L=np.ones((1, 1)))
    return cfg, cs, state


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
