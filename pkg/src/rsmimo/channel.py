"""Channel, estimate and conditional-sample generation.

The true channel of user k is an M x Q matrix with i.i.d. CN(0, sigma_k^2)
entries.  The transmitter sees an estimate Hhat = H - Htilde with the error
Htilde i.i.d. CN(0, sigma_e,k^2), sigma_e,k^2 = sigma_k^2 * Pt^-alpha, and the
optimizer works with N conditional samples H^(n) = Hhat + Htilde^(n).

All arrays are complex128.  Channels are stacked per user: shape (K, M, Q).
Randomness flows through an explicit counter-based generator (Philox) so
per-realization streams can be split deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig

RandomSource = np.random.Generator


def make_rng(seed: int | np.random.SeedSequence) -> RandomSource:
    """Counter-based generator; spawn children for parallel realizations."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, n: int) -> list[RandomSource]:
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


def complex_gaussian(rng: RandomSource, shape, variance: float) -> np.ndarray:
    """CN(0, variance) entries: two real normals of variance/2 each."""
    if variance == 0.0:
        return np.zeros(shape, dtype=np.complex128)
    scale = np.sqrt(variance / 2.0)
    return rng.normal(0.0, scale, shape) + 1j * rng.normal(0.0, scale, shape)


@dataclass(frozen=True)
class ChannelEstimate:
    """Transmitter-side channel estimate plus its per-user error power."""

    Hhat: np.ndarray                  # (K, M, Q)
    error_power: tuple[float, ...]    # sigma_e,k^2 per user

    @property
    def K(self) -> int:
        return self.Hhat.shape[0]

    def stacked(self) -> np.ndarray:
        """M x (Q*K) concatenation [Hhat_1, ..., Hhat_K]."""
        return np.concatenate(list(self.Hhat), axis=1)


@dataclass(frozen=True)
class SampleSet:
    """N conditional channel realizations sharing one estimate."""

    H: np.ndarray                     # (N, K, M, Q)
    estimate: ChannelEstimate = field(repr=False)

    @property
    def n_samples(self) -> int:
        return self.H.shape[0]

    def user(self, k: int) -> np.ndarray:
        """(N, M, Q) slice for user k."""
        return self.H[:, k]


def draw_channel(config: SystemConfig, rng: RandomSource) -> np.ndarray:
    """True channel, shape (K, M, Q), user k entries CN(0, sigma_k^2)."""
    H = np.empty((config.K, config.M, config.Q), dtype=np.complex128)
    for k, var in enumerate(config.sigma_k2):
        H[k] = complex_gaussian(rng, (config.M, config.Q), var)
    return H


def make_estimate(H: np.ndarray, config: SystemConfig,
                  rng: RandomSource) -> ChannelEstimate:
    """Estimate Hhat = H - Htilde with Htilde ~ CN(0, sigma_e,k^2).

    Under PERFECT CSIT the estimate equals the channel exactly.
    """
    err = config.error_powers()
    if config.perfect_csit:
        return ChannelEstimate(Hhat=H.copy(), error_power=err)
    Hhat = np.empty_like(H)
    for k, var in enumerate(err):
        Hhat[k] = H[k] - complex_gaussian(rng, H[k].shape, var)
    return ChannelEstimate(Hhat=Hhat, error_power=err)


def make_saa_samples(est: ChannelEstimate, config: SystemConfig,
                     rng: RandomSource) -> SampleSet:
    """N i.i.d. conditional samples H^(n) = Hhat + Htilde^(n).

    PERFECT CSIT is represented as a single exact sample equal to the
    estimate, so downstream sample averages degenerate to instantaneous
    quantities.
    """
    if config.perfect_csit:
        return SampleSet(H=est.Hhat[None].copy(), estimate=est)
    if config.N < 1:
        raise ValueError("need N >= 1 samples under imperfect CSIT")
    K, M, Q = est.Hhat.shape
    H = np.empty((config.N, K, M, Q), dtype=np.complex128)
    for k, var in enumerate(est.error_power):
        H[:, k] = est.Hhat[k] + complex_gaussian(rng, (config.N, M, Q), var)
    return SampleSet(H=H, estimate=est)


def draw_scene(config: SystemConfig, rng: RandomSource):
    """One realization: (true channel, estimate, SAA sample set)."""
    H = draw_channel(config, rng)
    est = make_estimate(H, config, rng)
    samples = make_saa_samples(est, config, rng)
    return H, est, samples
