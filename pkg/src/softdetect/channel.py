"""Complex AWGN channel and SNR bookkeeping.

SNR is taken as E_s / sigma^2 with unit symbol energy, sigma^2 being the
total variance of the circularly-symmetric complex noise (sigma^2/2 per
component).
"""

from __future__ import annotations

import math

import numpy as np


def snr_db_to_sigma2(snr_db: float) -> float:
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    return 10.0 ** (-snr_db / 10.0)


class AwgnChannel:
    """y = x + w with w ~ CN(0, sigma2).

    ``rng_seed`` may be an int or a :class:`numpy.random.SeedSequence`; the
    same seed always yields the same noise realization.
    """

    def __init__(self, sigma2: float, rng_seed=None):
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        self.sigma2 = float(sigma2)
        self.rng_seed = rng_seed
        self._seed_seq = (
            rng_seed
            if isinstance(rng_seed, np.random.SeedSequence)
            else np.random.SeedSequence(rng_seed)
        )
        self.rng = np.random.default_rng(self._seed_seq)

    @classmethod
    def from_snr_db(cls, snr_db: float, rng_seed=None) -> "AwgnChannel":
        return cls(snr_db_to_sigma2(snr_db), rng_seed)

    def __repr__(self):
        return f"AwgnChannel(sigma2={self.sigma2!r}, rng_seed={self.rng_seed!r})"

    def spawn(self, n: int) -> list["AwgnChannel"]:
        """Independent channels with the same sigma2, for parallel workers."""
        return [AwgnChannel(self.sigma2, s) for s in self._seed_seq.spawn(n)]

    def transmit(self, x):
        x = np.asarray(x, dtype=np.complex128)
        scale = math.sqrt(self.sigma2 / 2.0)
        w = scale * (
            self.rng.standard_normal(x.shape) + 1j * self.rng.standard_normal(x.shape)
        )
        y = x + w
        return complex(y) if y.ndim == 0 else y

    def log_likelihood(self, y, x):
        """log p(y|x) = -log(pi sigma2) - |y - x|^2 / sigma2 (broadcasting)."""
        d = np.asarray(y) - np.asarray(x)
        return -math.log(math.pi * self.sigma2) - (d.real**2 + d.imag**2) / self.sigma2
