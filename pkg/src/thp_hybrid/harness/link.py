"""Monte-Carlo symbol error rate of the full THP hybrid signal chain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..channel import complex_gaussian
from ..thp import QamConstellation, thp_encode, modulo

_BATCH = 25_000


@dataclass(frozen=True)
class SerEstimate:
    """Error rate with the 95 % normal-approximation binomial half-width."""

    ser: float
    ci: float
    errors: int
    symbols: int


def binomial_ci(p: float, n: int) -> float:
    return 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else float("nan")


def simulate_ser(state, cs, Q: int, n_symbols: int, seed) -> SerEstimate:
    """Transmit ``n_symbols`` random symbol vectors through the true channels ``cs.H``.

    Symbols are drawn per user, permuted into cancellation order, THP encoded
    (plain pass-through when ``state.nonlinear`` is false), precoded, sent
    through ``cs.H`` with fresh ``CN(0, sigma_m^2)`` noise, combined and
    sliced (after the modulo for nonlinear states).  Every one of the ``D``
    symbols per vector counts toward the error rate.
    """
    if n_symbols < 1:
        raise ValueError("need at least one symbol vector")
    qam = QamConstellation(Q)
    rng = np.random.default_rng(seed)
    TW = state.T @ state.W
    C = state.C
    receive = [p @ f for p, f in zip(state.P, state.F)]
    slices = state.stream_slices()
    errors = 0
    done = 0
    while done < n_symbols:
        n = min(_BATCH, n_symbols - done)
        s_user = qam.sample(rng, (state.D, n))
        s = state.L @ s_user
        x = thp_encode(s, C, Q)[0] if state.nonlinear else s
        tx = TW @ x
        for m, (pf, h, sl) in enumerate(zip(receive, cs.H, slices)):
            y = h @ tx + cs.sigma[m] * complex_gaussian(rng, (h.shape[0], n))
            v_hat = pf @ y
            if state.nonlinear:
                v_hat = modulo(v_hat, Q)[0]
            errors += int(np.count_nonzero(qam.slice(v_hat) != s_user[sl]))
        done += n
    total = n_symbols * state.D
    ser = errors / total
    return SerEstimate(ser=ser, ci=binomial_ci(ser, total), errors=errors, symbols=total)


def modulo_awgn_ser(Q: int, noise_var: float, wraps: int = 8) -> float:
    """Exact SER of ``modulo + slice`` for ``v_hat = s + n``, ``n ~ CN(0, noise_var)``.

    The modulo folds the line onto a circle of circumference ``2 a_mod``, so
    every level has two neighbours and a real dimension is correct exactly
    when the folded noise stays inside ``[-d, d)``.
    """
    qam = QamConstellation(Q)
    if noise_var == 0:
        return 0.0
    sd = math.sqrt(noise_var / 2.0)
    period = 2 * qam.a_mod
    # cover at least eight standard deviations on each side
    wraps = max(wraps, math.ceil(8 * sd / period) + 1)

    def cdf(z):
        return 0.5 * math.erfc(-z / math.sqrt(2.0))

    correct = sum(cdf((qam.d + k * period) / sd) - cdf((-qam.d + k * period) / sd)
                  for k in range(-wraps, wraps + 1))
    p_dim = 1.0 - correct
    return 1.0 - (1.0 - p_dim) ** 2
