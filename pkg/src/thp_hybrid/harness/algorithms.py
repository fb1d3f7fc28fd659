"""Named transceiver designs that the experiments can run on one channel draw."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from ..baselines import fd_solve, linear_solve, separate_solve, zf_solve
from ..bcd import BcdSettings, solve
from ..core import permutation_from_order
from ..thp import stream_order


def random_order(cfg, seed) -> np.ndarray:
    """Uniformly random user cancellation order, reproducible per seed."""
    users = np.random.default_rng([seed, 4242]).permutation(cfg.M)
    return permutation_from_order(stream_order(users.tolist(), cfg.D_m))


def _nl_joint(cfg, cs, seed, settings):
    return solve(cfg, cs, settings=settings)


def _nl_random(cfg, cs, seed, settings):
    return solve(cfg, cs, random_order(cfg, seed), settings)


def _nl_nonrobust(cfg, cs, seed, settings):
    # the optimiser believes the estimate is exact; evaluation still uses the true error level
    return solve(cfg, cs.assume_sigma_e(0.0), settings=settings)


def _nl_separate(cfg, cs, seed, settings):
    return separate_solve(cfg, cs, settings=settings)


def _fd(cfg, cs, seed, settings):
    return fd_solve(cfg, cs, settings=settings)


def _l_joint(cfg, cs, seed, settings):
    return linear_solve(cfg, cs, settings, "joint")


def _l_separate(cfg, cs, seed, settings):
    return linear_solve(cfg, cs, settings, "separate")


def _zf(cfg, cs, seed, settings):
    return zf_solve(cfg, cs), None


ALGORITHMS: dict[str, Callable] = {
    "fd": _fd,
    "nl-joint": _nl_joint,
    "nl-joint-random-order": _nl_random,
    "nl-joint-nonrobust": _nl_nonrobust,
    "nl-separate": _nl_separate,
    "l-joint": _l_joint,
    "l-separate": _l_separate,
    "zf": _zf,
}


def run_algorithm(name: str, cfg, cs, seed, settings: BcdSettings | None = None):
    """Return ``(state, iterations)``; iterations is 0 for closed-form designs."""
    try:
        fn = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    state, trace = fn(cfg, cs, seed, settings or BcdSettings())
    return state, (trace.iterations if trace is not None else 0)
