"""Fast invariant and oracle checks run by ``thp-hybrid check``."""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np

from ..bcd import BcdSettings, solve
from ..channel import sample_channel
from ..config import SystemConfig
from ..core import fro2, permutation_from_order, strict_lower, vec_lt
from ..objective import kkt_residual, mse, mse_gradients
from ..thp import QamConstellation, modulo, order_users, ordering_score, thp_encode, thp_gain
from ..tosca import Timeline
from .link import simulate_ser
from .overhead import delay_ratio, feedback_overhead

CHECKS: list[tuple[str, Callable[[], None]]] = []


def check(fn):
    CHECKS.append((fn.__name__.removeprefix("check_").replace("_", "-"), fn))
    return fn


@check
def check_structural_operators():
    X = np.arange(1, 10).reshape(3, 3)
    assert vec_lt(X).tolist() == [4, 7, 8]
    assert fro2(strict_lower(np.ones((3, 3)))) == 3
    L = permutation_from_order([2, 1], one_based=True)
    assert np.array_equal(L, [[0, 1], [1, 0]])


@check
def check_modulo_lattice():
    qam = QamConstellation(16)
    x = np.linspace(-10, 10, 2001)
    v, e = modulo(x, 16)
    assert np.all((v >= -qam.a_mod) & (v < qam.a_mod))
    k = e / (2 * qam.a_mod)
    assert np.allclose(k, np.round(k))
    assert np.allclose(modulo(v, 16)[0], v)


@check
def check_thp_round_trip():
    rng = np.random.default_rng(0)
    qam = QamConstellation(16)
    s = qam.sample(rng, (4, 500))
    C = strict_lower(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    x, v = thp_encode(s, C, 16)
    assert np.allclose((np.eye(4) + C) @ x, v)
    lattice = (v - s) / (2 * qam.a_mod)
    assert np.allclose(lattice, np.round(lattice.real) + 1j * np.round(lattice.imag))


@check
def check_ordering_brute_force():
    import itertools
    norms = [5.0, 2.0, 9.0, 1.0]
    best = max(itertools.permutations(range(4)), key=lambda p: ordering_score(norms, p))
    L = order_users(norms)
    chosen = [int(np.argmax(row)) for row in L]
    assert math.isclose(ordering_score(norms, chosen), ordering_score(norms, best))


@check
def check_closed_form_arithmetic():
    from fractions import Fraction
    paper = SystemConfig.paper()
    assert delay_ratio(paper) == Fraction(16)
    tl = Timeline(T_f=1000, T_s=10)
    assert feedback_overhead(tl, paper, "single") == 10_240_000
    assert feedback_overhead(tl, paper, "two-timescale") == 1_600_000


@check
def check_bcd_monotone_and_kkt():
    cfg = SystemConfig.desk(20.0)
    for seed in range(2):
        _, cs = sample_channel(cfg, seed)
        state, trace = solve(cfg, cs, settings=BcdSettings())
        assert trace.max_relative_increase() <= 1e-10
        assert abs(fro2(state.T @ state.W) - cfg.P_t) < 1e-9
        assert kkt_residual(state, cs, cfg.P_t).max_scaled() <= 1e-3
        assert math.isclose(mse(state, cs), trace.objective[-1], rel_tol=1e-9)


@check
def check_gradients_finite_difference():
    cfg = SystemConfig.desk(10.0)
    _, cs = sample_channel(cfg, 3)
    state, _ = solve(cfg, cs, settings=BcdSettings(max_iter=3))
    g = mse_gradients(state, cs)["T"]
    h = 1e-6
    i, j = 1, 2
    for direction, part in ((1.0, np.real), (1j, np.imag)):
        up, dn = state.copy(), state.copy()
        up.T[i, j] += h * direction
        dn.T[i, j] -= h * direction
        fd = (mse(up, cs) - mse(dn, cs)) / (2 * h)
        assert math.isclose(fd, 2 * part(g[i, j]), rel_tol=1e-5, abs_tol=1e-9)


@check
def check_thp_gain_identity():
    cfg = SystemConfig.desk(20.0)
    _, cs = sample_channel(cfg, 1)
    state, _ = solve(cfg, cs)
    from ..bcd import optimal_feedback
    nl = state.copy()
    nl.U = optimal_feedback(state, cs)
    gain = thp_gain(nl.P, nl.F, nl.T, nl.W, nl.L, cs.H_bar)
    assert gain <= 0
    assert math.isclose(mse(nl, cs) - mse(nl.with_linear(), cs), gain, abs_tol=1e-8)


@check
def check_noiseless_link():
    cfg = SystemConfig.desk(100.0, sigma_e=0.0)
    _, cs = sample_channel(cfg, 0)
    from ..baselines import fd_solve
    state, _ = fd_solve(cfg, cs)
    assert simulate_ser(state, cs, cfg.Q, 5000, 0).ser == 0.0


def run_checks(stream=print) -> int:
    """Run every check, report one line each and return the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # a failing check must not stop the others
            failures += 1
            stream(f"FAIL {name}: {type(exc).__name__} {exc}")
        else:
            stream(f"PASS {name}")
    return failures
