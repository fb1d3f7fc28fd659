"""Clustered narrowband mmWave channels on uniform linear arrays.

A user's channel is a sum of per-ray dyads ``a_r(arrival) a_t(departure)^H``
weighted by the cluster gain and a per-ray phase that advances with the
Doppler shift.  Estimated channels follow ``H = H_bar + sigma_e * dH``.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .config import SystemConfig
from .core import DimensionError


def array_response(theta, N: int, kappa: float = math.pi) -> np.ndarray:
    """Unit-norm ULA steering vector(s).

    ``theta`` may be an array; the result then has shape ``theta.shape + (N,)``.
    ``kappa`` is the per-element phase factor (``pi`` for half-wavelength
    spacing).
    """
    if N < 1:
        raise DimensionError("array needs at least one element")
    theta = np.asarray(theta, dtype=float)
    n = np.arange(N)
    return np.exp(1j * kappa * np.multiply.outer(np.sin(theta), n)) / math.sqrt(N)


@dataclass(frozen=True)
class RayParameters:
    """Ray-level description of one user's channel.

    Cluster-level arrays have shape ``(n_clusters,)``; ray-level arrays
    ``(n_clusters, n_rays)``.  ``phase`` is the running Doppler phase of each
    ray in radians.
    """

    gain: np.ndarray
    theta_t: np.ndarray
    theta_r: np.ndarray
    psi_t: np.ndarray
    psi_r: np.ndarray
    phase: np.ndarray

    @property
    def n_clusters(self) -> int:
        return self.gain.shape[0]

    @property
    def n_rays(self) -> int:
        return self.psi_t.shape[1]

    def departure(self) -> np.ndarray:
        return self.theta_t[:, None] + self.psi_t

    def arrival(self) -> np.ndarray:
        return self.theta_r[:, None] + self.psi_r

    def channel(self, N_d: int, N_s: int, kappa: float = math.pi) -> np.ndarray:
        """Assemble the ``N_d x N_s`` matrix."""
        a_r = array_response(self.arrival(), N_d, kappa)   # (cl, p, N_d)
        a_t = array_response(self.departure(), N_s, kappa)  # (cl, p, N_s)
        w = self.gain[:, None] * np.exp(1j * self.phase) / math.sqrt(self.n_rays)
        return np.einsum("cp,cpi,cpj->ij", w, a_r, np.conj(a_t))


def sample_rays(cfg: SystemConfig, rng: np.random.Generator) -> RayParameters:
    ncl, npr = cfg.n_clusters, cfg.n_rays
    gain = (rng.standard_normal(ncl) + 1j * rng.standard_normal(ncl)) / math.sqrt(2)
    theta_t = rng.uniform(-cfg.angle_range, cfg.angle_range, ncl)
    theta_r = rng.uniform(-cfg.angle_range, cfg.angle_range, ncl)
    # Laplacian with standard deviation equal to the configured spread
    scale = math.radians(cfg.ray_spread_deg) / math.sqrt(2)
    psi_t = rng.laplace(0.0, scale, (ncl, npr))
    psi_r = rng.laplace(0.0, scale, (ncl, npr))
    phase = rng.uniform(0.0, 2 * math.pi, (ncl, npr))
    return RayParameters(gain, theta_t, theta_r, psi_t, psi_r, phase)


def evolve_channel(params: RayParameters, dt: float, f_d: float) -> RayParameters:
    """Advance every ray phase by ``2 pi f_d dt cos(arrival angle)``."""
    if dt < 0:
        raise ValueError("time step must be non-negative")
    if dt == 0 or f_d == 0:
        return params
    phase = params.phase + 2 * math.pi * f_d * dt * np.cos(params.arrival())
    return replace(params, phase=phase)


@dataclass
class ChannelSet:
    """True, estimated and scaled channels of all users.

    ``H[m] == H_bar[m] + sigma_e[m] * dH[m]`` holds exactly for the stored
    arrays.  ``H_hat`` and ``sigma_e_hat`` are the noise-scaled versions used
    by the transformed objective.
    """

    H: list
    H_bar: list
    dH: list
    sigma: np.ndarray
    sigma_e: np.ndarray
    H_hat: list = field(default_factory=list)
    sigma_e_hat: np.ndarray | None = None

    @property
    def M(self) -> int:
        return len(self.H)

    def assume_sigma_e(self, sigma_e) -> "ChannelSet":
        """Copy whose optimizer-facing error level is ``sigma_e`` (0 gives a non-robust design).

        Only ``sigma_e_hat`` changes; the stored channels and true error level stay put.
        """
        sigma_e = np.broadcast_to(np.asarray(sigma_e, dtype=float), (self.M,))
        return replace(self, sigma_e_hat=sigma_e / self.sigma)


def make_channel_set(H_true: Sequence[np.ndarray], dH: Sequence[np.ndarray], sigma, sigma_e) -> ChannelSet:
    sigma = np.asarray(sigma, dtype=float)
    sigma_e = np.asarray(sigma_e, dtype=float)
    H_bar = [h - se * d for h, se, d in zip(H_true, sigma_e, dH)]
    # recompute the true channel from the stored parts so the identity is exact
    H = [hb + se * d for hb, se, d in zip(H_bar, sigma_e, dH)]
    cs = ChannelSet(H=H, H_bar=H_bar, dH=list(dH), sigma=sigma, sigma_e=sigma_e)
    return scale_channels(cs, sigma)


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def sample_channel(cfg: SystemConfig, seed) -> tuple[list[RayParameters], ChannelSet]:
    """Draw ray parameters and CSI for every user from one seed."""
    rng = np.random.default_rng(seed)
    rays = [sample_rays(cfg, rng) for _ in range(cfg.M)]
    H = [r.channel(nd, cfg.N_s, cfg.kappa) for r, nd in zip(rays, cfg.N_d)]
    dH = [complex_gaussian(rng, (nd, cfg.N_s)) for nd in cfg.N_d]
    return rays, make_channel_set(H, dH, cfg.sigma, cfg.sigma_e)


def scale_channels(cs: ChannelSet, sigma) -> ChannelSet:
    """Attach ``H_hat = H_bar / sigma`` and ``sigma_e_hat = sigma_e / sigma``."""
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (cs.M,)).copy()
    if np.any(sigma <= 0):
        raise ValueError("noise levels must be positive")
    return replace(
        cs,
        sigma=sigma,
        H_hat=[hb / s for hb, s in zip(cs.H_bar, sigma)],
        sigma_e_hat=np.asarray(cs.sigma_e, dtype=float) / sigma,
    )


def effective_csi(H_hat: Sequence[np.ndarray], F: Sequence[np.ndarray], T: np.ndarray) -> list[np.ndarray]:
    """Low-dimensional channels ``F_m H_hat_m T``."""
    out = []
    for h, f in zip(H_hat, F):
        if f.shape[1] != h.shape[0] or h.shape[1] != T.shape[0]:
            raise DimensionError(f"cannot form F{f.shape} H{h.shape} T{T.shape}")
        out.append(f @ h @ T)
    return out


def write_rays_csv(rays: Sequence[RayParameters], path) -> None:
    """One row per ray for reproducibility audits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "cluster", "ray", "gain_re", "gain_im", "theta_t", "theta_r",
                    "psi_t", "psi_r", "phase"])
        for m, r in enumerate(rays):
            for c in range(r.n_clusters):
                for p in range(r.n_rays):
                    w.writerow([m, c, p, repr(float(r.gain[c].real)), repr(float(r.gain[c].imag)),
                                repr(float(r.theta_t[c])), repr(float(r.theta_r[c])),
                                repr(float(r.psi_t[c, p])), repr(float(r.psi_r[c, p])),
                                repr(float(r.phase[c, p]))])


class ChannelProcess:
    """Time-varying channels of all users for the delay and two-timescale studies.

    Ray geometry and gains are fixed; ray phases evolve with ``f_d``.
    Estimation errors are drawn from a generator keyed by ``(seed, key)``
    so that repeated requests with the same key see the same error.
    """

    def __init__(self, cfg: SystemConfig, seed: int, f_d: float = 0.0):
        self.cfg = cfg
        self.seed = seed
        self.f_d = f_d
        self.rays, _ = sample_channel(cfg, seed)

    def true_channels(self, t: float) -> list[np.ndarray]:
        return [evolve_channel(r, t, self.f_d).channel(nd, self.cfg.N_s, self.cfg.kappa)
                for r, nd in zip(self.rays, self.cfg.N_d)]

    def truth_set(self, t: float) -> ChannelSet:
        """Channels in force at ``t`` packaged as an error-free set (for link simulation)."""
        H = self.true_channels(t)
        return make_channel_set(H, [np.zeros_like(h) for h in H], self.cfg.sigma, np.zeros(len(H)))

    def observe(self, t: float, lag: float = 0.0, key=0) -> ChannelSet:
        """CSI estimated at ``t - lag`` (clamped at 0) with fresh estimation errors.

        The returned set is self-consistent at the observation time; use
        :meth:`true_channels` for the channel actually in force at ``t``.
        """
        t_obs = max(t - lag, 0.0)
        rng = np.random.default_rng([self.seed, 7919, *np.atleast_1d(key)])
        H = self.true_channels(t_obs)
        dH = [complex_gaussian(rng, h.shape) for h in H]
        return make_channel_set(H, dH, self.cfg.sigma, self.cfg.sigma_e)
