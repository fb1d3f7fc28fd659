"""Scenario dimensions and scalars."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    pass


def _tuple(value, n: int, name: str) -> tuple:
    if np.isscalar(value):
        return (value,) * n
    value = tuple(value)
    if len(value) != n:
        raise ConfigError(f"{name} needs {n} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class SystemConfig:
    """One downlink scenario.

    Per-user quantities accept a scalar (broadcast to every user) or a
    sequence of length ``M``. ``P_t`` is the transmit power budget; with
    ``sigma == 1`` it equals the linear SNR.
    """

    M: int = 2
    N_s: int = 16
    R_s: int = 4
    N_d: tuple = 4
    R_d: tuple = 2
    D_m: tuple = 1
    Q: int = 16
    P_t: float = 100.0
    sigma: tuple = 1.0
    sigma_e: tuple = 0.1
    # channel generator
    n_clusters: int = 3
    n_rays: int = 5
    angle_range: float = math.pi / 8
    ray_spread_deg: float = 5.0
    kappa: float = math.pi

    def __post_init__(self):
        M = self.M
        for name in ("N_d", "R_d", "D_m"):
            object.__setattr__(self, name, tuple(int(v) for v in _tuple(getattr(self, name), M, name)))
        for name in ("sigma", "sigma_e"):
            object.__setattr__(self, name, tuple(float(v) for v in _tuple(getattr(self, name), M, name)))
        self.validate()

    def validate(self) -> None:
        if self.M < 1:
            raise ConfigError("need at least one user")
        if self.R_s > self.N_s:
            raise ConfigError("R_s must not exceed N_s")
        if any(r > n for r, n in zip(self.R_d, self.N_d)):
            raise ConfigError("R_d,m must not exceed N_d,m")
        if any(d > r for d, r in zip(self.D_m, self.R_d)):
            raise ConfigError("D_m must not exceed R_d,m")
        if self.D > self.R_s:
            raise ConfigError("total stream count D must not exceed R_s")
        if min(self.D_m) < 1:
            raise ConfigError("every user needs at least one stream")
        root = math.isqrt(self.Q)
        if self.Q < 4 or root * root != self.Q or (root & (root - 1)):
            raise ConfigError(f"Q={self.Q} is not a square QAM order")
        if self.P_t <= 0 or min(self.sigma) <= 0 or min(self.sigma_e) < 0:
            raise ConfigError("P_t and sigma must be positive, sigma_e non-negative")
        if self.n_clusters < 1 or self.n_rays < 1:
            raise ConfigError("channel needs at least one cluster and one ray")

    @property
    def D(self) -> int:
        return sum(self.D_m)

    @property
    def snr_db(self) -> float:
        return 10 * math.log10(self.P_t / self.sigma[0] ** 2)

    def stream_slices(self) -> list[slice]:
        """Row ranges of each user's streams in the stacked stream vector."""
        edges = np.concatenate([[0], np.cumsum(self.D_m)]).astype(int)
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_snr(self, snr_db: float) -> "SystemConfig":
        """Set ``P_t`` so that ``P_t / sigma_1^2`` matches ``snr_db``."""
        return self.replace(P_t=self.sigma[0] ** 2 * 10 ** (snr_db / 10))

    def fully_digital(self) -> "SystemConfig":
        return self.replace(R_s=self.N_s, R_d=self.N_d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def desk(cls, snr_db: float = 20.0, **overrides) -> "SystemConfig":
        return cls(**overrides).with_snr(snr_db)

    @classmethod
    def paper(cls, snr_db: float = 20.0, **overrides) -> "SystemConfig":
        base = dict(M=4, N_s=32, R_s=8, N_d=8, R_d=2, D_m=2, Q=16)
        base.update(overrides)
        return cls(**base).with_snr(snr_db)
