"""Reference designs: fully digital THP, linear hybrid, separate analog design and ZF."""

from __future__ import annotations

import enum
import warnings

import numpy as np

from .bcd import BcdSettings, DigitalProblem, channel_match_analog, initial_state, solve
from .core import fro2
from .objective import TransceiverState, theorem1_scale


class BaselineKind(str, enum.Enum):
    FD_NONLINEAR = "fd-nonlinear"
    LINEAR_JOINT = "linear-joint"
    LINEAR_SEPARATE = "linear-separate"
    NONLINEAR_SEPARATE = "nonlinear-separate"
    ZF = "zf"


class RankDeficiencyWarning(RuntimeWarning):
    pass


def fd_solve(cfg, cs, L=None, settings: BcdSettings | None = None):
    """Fully digital THP design: identity analog parts kept fixed, one RF chain per antenna."""
    settings = settings or BcdSettings()
    fd_cfg = cfg.fully_digital()
    init = initial_state(fd_cfg, cs, L, analog="identity")
    return solve(fd_cfg, cs, L, BcdSettings(tol=settings.tol, max_iter=settings.max_iter,
                                            optimize_analog=False, nonlinear=settings.nonlinear),
                 init=init)


def separate_solve(cfg, cs, L=None, settings: BcdSettings | None = None, nonlinear: bool = True):
    """Channel-matched analog parts held fixed; only the digital blocks are optimised."""
    settings = settings or BcdSettings()
    return solve(cfg, cs, L, BcdSettings(tol=settings.tol, max_iter=settings.max_iter,
                                         optimize_analog=False, nonlinear=nonlinear))


def linear_solve(cfg, cs, settings: BcdSettings | None = None, analog_mode: str = "joint", L=None):
    """Hybrid design with the THP feedback disabled (``U = I``).

    ``analog_mode="joint"`` optimises the analog parts too; ``"separate"``
    keeps the channel-matched analog matrices.
    """
    settings = settings or BcdSettings()
    if analog_mode == "separate":
        return separate_solve(cfg, cs, L, settings, nonlinear=False)
    if analog_mode != "joint":
        raise ValueError(f"unknown analog mode {analog_mode!r}")
    return solve(cfg, cs, L, BcdSettings(tol=settings.tol, max_iter=settings.max_iter,
                                         optimize_analog=settings.optimize_analog, nonlinear=False))


def _zf_precoder(A: np.ndarray) -> np.ndarray:
    """Right pseudo-inverse ``A^H (A A^H)^{-1}``, warning when ``A`` lacks full row rank."""
    rank = np.linalg.matrix_rank(A)
    if rank < A.shape[0]:
        warnings.warn(f"effective channel has rank {rank} < {A.shape[0]} streams; using pseudo-inverse",
                      RankDeficiencyWarning, stacklevel=3)
        return np.linalg.pinv(A)
    return A.conj().T @ np.linalg.inv(A @ A.conj().T)


def zf_receivers(H_eff, streams):
    """Dominant-mode combiners: top ``D_m`` left singular vectors of each effective channel."""
    P = []
    for h, d in zip(H_eff, streams):
        Uh, _, _ = np.linalg.svd(h)
        P.append(Uh[:, :d].conj().T)
    return P


def zf_solve(cfg, cs, mmse_receivers: bool = True) -> TransceiverState:
    """Channel-matched analog parts with zero-forcing digital precoding.

    Each user first combines along its dominant effective-channel modes;
    ``W`` inverts the resulting stacked ``D x R_s`` channel and is scaled to
    the power budget.  With ``mmse_receivers`` the receivers are then
    replaced by their MMSE counterparts for that ``W``.
    """
    state = initial_state(cfg, cs, np.eye(cfg.D), analog="channel-match")
    state.U = np.eye(cfg.D, dtype=complex)
    state.nonlinear = False
    dp = DigitalProblem.from_state(state, cs, cfg.P_t)
    P0 = zf_receivers(dp.H_eff, cfg.D_m)
    A = np.vstack([p @ h for p, h in zip(P0, dp.H_eff)])
    W = _zf_precoder(A)
    state.W = W * np.sqrt(cfg.P_t / fro2(state.T @ W))
    state.P = P0
    if mmse_receivers:
        state.P, _ = dp.update_p(state.U, state.W, state.stream_slices())
    # power already meets the budget, so this only undoes the noise scaling of the receivers
    return theorem1_scale(state, cfg.P_t, cs.sigma)


__all__ = ["BaselineKind", "RankDeficiencyWarning", "channel_match_analog", "fd_solve",
           "linear_solve", "separate_solve", "zf_receivers", "zf_solve"]
