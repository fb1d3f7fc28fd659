"""CSI delay ratio and feedback overhead of single- versus two-timescale designs."""

from __future__ import annotations

from fractions import Fraction


def delay_ratio(cfg) -> Fraction:
    """``tau / tau_TTS = N_s sum N_d / (R_s sum R_d)``, exact.

    Full CSI has ``N_s sum N_d`` entries while effective CSI has ``R_s sum R_d``;
    with delay proportional to the amount of CSI the ratio of delays follows.
    """
    return Fraction(cfg.N_s * sum(cfg.N_d), cfg.R_s * sum(cfg.R_d))


def tts_delay(tau: float, cfg) -> float:
    """Effective-CSI delay corresponding to full-CSI delay ``tau``."""
    ratio = delay_ratio(cfg)
    return tau * ratio.denominator / ratio.numerator


def feedback_overhead(timeline, cfg, mode: str) -> int:
    """CSI entries fed back over one super-frame (one bit per entry).

    ``single`` sends full CSI every slot; ``two-timescale`` sends full CSI
    once per frame and effective CSI in the remaining ``T_s - 1`` slots.
    """
    full = cfg.N_s * sum(cfg.N_d)
    effective = cfg.R_s * sum(cfg.R_d)
    if mode == "single":
        return timeline.T_f * timeline.T_s * full
    if mode == "two-timescale":
        return timeline.T_f * full + timeline.T_f * (timeline.T_s - 1) * effective
    raise ValueError(f"unknown feedback mode {mode!r}")
