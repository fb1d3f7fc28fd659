"""Two-timescale design: per-slot digital updates, per-frame stochastic analog updates.

The analog phases follow a recursively averaged quadratic surrogate of the
long-term MSE: accumulated objective and phase-gradient samples define
``f + g^T (theta - theta_t) + tau ||theta - theta_t||^2`` whose minimiser is
blended into the current phases with a diminishing step.  The digital blocks
are re-solved every slot from low-dimensional effective CSI.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .bcd import BcdSettings, DigitalProblem, channel_match_analog
from .core import fro2
from .objective import TransceiverState, mse, mse_gradients
from .thp import order_users


@dataclass(frozen=True)
class Timeline:
    """Super-frame layout and CSI delays (seconds)."""

    T_f: int = 500
    T_s: int = 1
    slot_s: float = 1e-4
    tau_full: float = 0.0
    tau_tts: float = 0.0

    def __post_init__(self):
        if self.T_f < 1 or self.T_s < 1:
            raise ValueError("need at least one frame and one slot per frame")
        if self.tau_full < 0 or self.tau_tts < 0 or self.slot_s <= 0:
            raise ValueError("delays must be non-negative and slots positive")

    def slot_time(self, frame: int, slot: int) -> float:
        """Start time of ``slot`` (0-based) in ``frame`` (1-based)."""
        return ((frame - 1) * self.T_s + slot) * self.slot_s

    def frame_end(self, frame: int) -> float:
        return frame * self.T_s * self.slot_s


@dataclass(frozen=True)
class TtsSettings:
    tau_prox: float = 0.01
    rho_exp: float = 0.6
    gamma_exp: float = 0.9
    digital: BcdSettings = BcdSettings(tol=1e-6, max_iter=200)
    nonlinear: bool = True


@dataclass
class TwoTimescaleState:
    """Analog phases, surrogate accumulators and the frame counter ``t`` (1-based)."""

    theta_T: np.ndarray
    theta_F: list
    f: float = 0.0
    f_T: np.ndarray | None = None
    f_F: list | None = None
    t: int = 1
    tau_prox: float = 1.0

    def __post_init__(self):
        if self.f_T is None:
            self.f_T = np.zeros_like(self.theta_T)
        if self.f_F is None:
            self.f_F = [np.zeros_like(th) for th in self.theta_F]

    @classmethod
    def from_analog(cls, T, F, tau_prox: float = 1.0) -> "TwoTimescaleState":
        return cls(theta_T=np.angle(T), theta_F=[np.angle(f) for f in F], tau_prox=tau_prox)

    @property
    def T(self) -> np.ndarray:
        return np.exp(1j * self.theta_T)

    @property
    def F(self) -> list:
        return [np.exp(1j * th) for th in self.theta_F]


def step_schedules(t: int, rho_exp: float = 0.6, gamma_exp: float = 0.9):
    """``(rho_t, gamma_t) = (t^-rho_exp, t^-gamma_exp)``."""
    if t < 1:
        raise ValueError("frame index starts at 1")
    return float(t) ** -rho_exp, float(t) ** -gamma_exp


@dataclass
class DigitalSolution:
    """Power-scaled digital blocks plus the unscaled ones for warm starts."""

    P: list
    W: np.ndarray
    U: np.ndarray
    iterations: int
    objective: float
    P_raw: list
    W_raw: np.ndarray


def short_timescale_solve(dp: DigitalProblem, sigma, streams, settings: BcdSettings | None = None,
                          warm: DigitalSolution | None = None, nonlinear: bool = True) -> DigitalSolution:
    """Coordinate descent over ``P``, ``U`` and ``W`` on effective CSI, then power scaling.

    ``dp`` carries the effective channels ``F_m H_hat_m T`` and the Gram
    matrices of the frozen analog parts.
    """
    settings = settings or BcdSettings(max_iter=200)
    edges = np.concatenate([[0], np.cumsum(streams)]).astype(int)
    slices = [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
    D = int(edges[-1])
    R_s = dp.gram_T.shape[0]
    U = np.eye(D, dtype=complex)
    if warm is not None:
        W = warm.W_raw.copy()
        if nonlinear:
            U = warm.U.copy()
    else:
        W = np.zeros((R_s, D), dtype=complex)
        W[:D, :D] = np.eye(D)
        W *= np.sqrt(dp.P_t / dp.tw2(W))
    P, _ = dp.update_p(U, W, slices)
    prev = dp.objective(P, U, W, slices)
    it = 0
    for it in range(1, settings.max_iter + 1):
        P, _ = dp.update_p(U, W, slices)
        if nonlinear:
            U = dp.update_u(P, W)
        W, _ = dp.update_w(P, U, slices)
        cur = dp.objective(P, U, W, slices)
        if abs(prev - cur) < settings.tol:
            break
        prev = cur
    a = np.sqrt(dp.P_t / dp.tw2(W))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (len(P),))
    return DigitalSolution(
        P=[p / (a * s) for p, s in zip(P, sigma)],
        W=a * W,
        U=U,
        iterations=it,
        objective=dp.objective(P, U, W, slices),
        P_raw=P,
        W_raw=W,
    )


def gradients_analog(state: TransceiverState, cs, sigma=None, sigma_e=None):
    """Conjugate gradients of the robust MSE w.r.t. ``T`` and each ``F_m`` (estimated channels)."""
    g = mse_gradients(state, cs, sigma, sigma_e)
    return g["T"], g["F"]


def _phase_gradient(G: np.ndarray, X: np.ndarray) -> np.ndarray:
    # dg/dtheta = G^* (j X) + G (j X)^* = 2 Im(G conj(X)), real by construction
    return 2.0 * np.imag(G * np.conj(X))


def gradients_phase(state: TransceiverState, grad_T, grad_F):
    """Chain rule from conjugate gradients to real phase gradients of ``T = exp(j theta_T)``."""
    return _phase_gradient(grad_T, state.T), [_phase_gradient(g, f) for g, f in zip(grad_F, state.F)]


def surrogate_update(tts: TwoTimescaleState, value: float, grad_T, grad_F, rho: float) -> TwoTimescaleState:
    """Recursive averaging of the objective and phase-gradient samples."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    return replace(
        tts,
        f=(1 - rho) * tts.f + rho * value,
        f_T=(1 - rho) * tts.f_T + rho * grad_T,
        f_F=[(1 - rho) * a + rho * g for a, g in zip(tts.f_F, grad_F)],
    )


def long_timescale_step(tts: TwoTimescaleState, gamma: float) -> TwoTimescaleState:
    """Move toward the surrogate minimiser ``theta - f_grad / (2 tau)`` by ``gamma``; advance ``t``."""
    two_tau = 2.0 * tts.tau_prox
    bar_T = tts.theta_T - tts.f_T / two_tau
    bar_F = [th - g / two_tau for th, g in zip(tts.theta_F, tts.f_F)]
    return replace(
        tts,
        theta_T=(1 - gamma) * tts.theta_T + gamma * bar_T,
        theta_F=[(1 - gamma) * th + gamma * b for th, b in zip(tts.theta_F, bar_F)],
        t=tts.t + 1,
    )


def surrogate_value(tts: TwoTimescaleState, theta_T, theta_F) -> float:
    """Quadratic surrogate evaluated at arbitrary phases (for oracle checks)."""
    dT = theta_T - tts.theta_T
    val = tts.f + float(np.sum(tts.f_T * dT)) + tts.tau_prox * float(np.sum(dT**2))
    for th, th0, g in zip(theta_F, tts.theta_F, tts.f_F):
        d = th - th0
        val += float(np.sum(g * d)) + tts.tau_prox * float(np.sum(d**2))
    return val


def assemble_state(tts: TwoTimescaleState, sol: DigitalSolution, L, nonlinear: bool = True) -> TransceiverState:
    return TransceiverState(P=sol.P, F=tts.F, T=tts.T, W=sol.W, U=sol.U, L=L, nonlinear=nonlinear)


@dataclass
class FrameRecord:
    frame: int
    objective: float
    ser: float | None = None


@dataclass
class TtsReport:
    """Per-frame averaged MSE (and optional SER) of one super-frame run."""

    frames: list = field(default_factory=list)
    tts: TwoTimescaleState | None = None
    last: DigitalSolution | None = None
    L: np.ndarray | None = None
    analog_updates: int = 0

    @property
    def objective(self) -> np.ndarray:
        return np.array([r.objective for r in self.frames])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "objective", "ser"])
            for r in self.frames:
                w.writerow([r.frame, repr(r.objective), "" if r.ser is None else repr(r.ser)])


def plateau_frame(objective, window: int = 50, rel: float = 0.01) -> int | None:
    """First frame index at which the mean over the last ``window`` frames
    differs from the mean over the preceding ``window`` by less than ``rel``."""
    obj = np.asarray(objective, dtype=float)
    for end in range(2 * window, obj.size + 1):
        cur = obj[end - window:end].mean()
        prev = obj[end - 2 * window:end - window].mean()
        if abs(cur - prev) <= rel * abs(prev):
            return end
    return None


def effective_problem(tts: TwoTimescaleState, cs, P_t: float, L) -> DigitalProblem:
    """Digital subproblem for the analog parts held in ``tts``."""
    T = tts.T
    F = tts.F
    return DigitalProblem(
        H_eff=[f @ h @ T for f, h in zip(F, cs.H_hat)],
        gram_F=[f @ f.conj().T for f in F],
        gram_T=T.conj().T @ T,
        sigma_e_hat=np.asarray(cs.sigma_e_hat, dtype=float),
        P_t=P_t,
        L=L,
    )


def run_super_frame(cfg, timeline: Timeline, process, settings: TtsSettings | None = None,
                    tts: TwoTimescaleState | None = None, L=None, ser_symbols: int = 0,
                    ser_seed: int = 0) -> TtsReport:
    """Run every frame of a super-frame on a :class:`~thp_hybrid.channel.ChannelProcess`.

    Slots use effective CSI estimated ``timeline.tau_tts`` seconds earlier;
    each frame end draws one channel sample (``timeline.tau_full`` old),
    re-solves the digital blocks on it, refreshes the surrogate and moves the
    analog phases.  The frame objective is the mean robust MSE over its slots.
    ``ser_symbols > 0`` also simulates the SER on the true channel per slot.
    """
    from .harness.link import simulate_ser  # the link simulator lives with the harness

    settings = settings or TtsSettings()
    if tts is None or L is None:
        cs0 = process.observe(0.0, key=(2, 0))
        if tts is None:
            T0, F0 = channel_match_analog(cs0, cfg)
            tts = TwoTimescaleState.from_analog(T0, F0, settings.tau_prox)
        if L is None:
            L = order_users([fro2(h) for h in cs0.H_hat], cfg.D_m)
    report = TtsReport(L=L)
    warm = None
    for frame in range(1, timeline.T_f + 1):
        values, sers = [], []
        for slot in range(timeline.T_s):
            now = timeline.slot_time(frame, slot)
            cs = process.observe(now, lag=timeline.tau_tts, key=(0, (frame - 1) * timeline.T_s + slot))
            dp = effective_problem(tts, cs, cfg.P_t, L)
            warm = short_timescale_solve(dp, cs.sigma, cfg.D_m, settings.digital, warm, settings.nonlinear)
            state = assemble_state(tts, warm, L, settings.nonlinear)
            values.append(mse(state, cs))
            if ser_symbols:
                truth = process.truth_set(now)
                sers.append(simulate_ser(state, truth, cfg.Q, ser_symbols,
                                         [ser_seed, frame, slot]).ser)
        report.frames.append(FrameRecord(frame, float(np.mean(values)),
                                         float(np.mean(sers)) if sers else None))

        cs_end = process.observe(timeline.frame_end(frame), lag=timeline.tau_full, key=(1, frame))
        dp = effective_problem(tts, cs_end, cfg.P_t, L)
        sol = short_timescale_solve(dp, cs_end.sigma, cfg.D_m, settings.digital, warm, settings.nonlinear)
        state = assemble_state(tts, sol, L, settings.nonlinear)
        g_T, g_F = gradients_phase(state, *gradients_analog(state, cs_end))
        rho, gamma = step_schedules(tts.t, settings.rho_exp, settings.gamma_exp)
        tts = surrogate_update(tts, mse(state, cs_end), g_T, g_F, rho)
        tts = long_timescale_step(tts, gamma)
        report.analog_updates += 1
    report.tts = tts
    report.last = warm
    return report
