"""Rate algebra: interference covariances, MMSE filters and (average) rates.

Conventions
-----------
Received signal y_k = H_k^H x + n_k, so for a precoder column p the effective
receive vector is H_k^H p.  Rates are bits per channel use.  Everything here
is a pure function of its inputs; channel arguments accept leading batch
dimensions, i.e. shape (..., M, Q).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import SystemConfig

LN2 = float(np.log(2.0))


# -- linear algebra helpers -------------------------------------------------

def hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def logdet_hermitian(A: np.ndarray) -> np.ndarray:
    """ln det of Hermitian positive definite matrices (batched).

    Cholesky first; eigendecomposition with a floor if conditioning breaks it.
    """
    A = hermitize(A)
    try:
        L = np.linalg.cholesky(A)
        diag = np.einsum("...ii->...i", L).real
        return 2.0 * np.sum(np.log(diag), axis=-1)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(A)
        return np.sum(np.log(np.clip(w, 1e-300, None)), axis=-1)


def solve_hermitian(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A^-1 B via a linear solve (never an explicit inverse)."""
    return np.linalg.solve(hermitize(A), B)


# -- precoders ---------------------------------------------------------------

@dataclass(frozen=True)
class PrecoderSet:
    """Common precoder (M x Qc) plus one private precoder (M x Q_k) per user."""

    Pc: np.ndarray
    Pk: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "Pc", np.asarray(self.Pc, dtype=np.complex128))
        object.__setattr__(
            self, "Pk",
            tuple(np.asarray(P, dtype=np.complex128) for P in self.Pk))

    @property
    def M(self) -> int:
        return self.Pc.shape[0]

    @property
    def K(self) -> int:
        return len(self.Pk)

    def total_power(self) -> float:
        return float(sum(np.sum(np.abs(P) ** 2) for P in (self.Pc, *self.Pk)))

    def scaled(self, c: float) -> "PrecoderSet":
        return PrecoderSet(Pc=c * self.Pc, Pk=tuple(c * P for P in self.Pk))

    def with_common(self, Pc: np.ndarray) -> "PrecoderSet":
        return replace(self, Pc=np.asarray(Pc, dtype=np.complex128))

    def check(self, config: SystemConfig, tol: float = 1e-6) -> None:
        if self.Pc.shape != (config.M, config.Qc):
            raise ValueError(f"Pc shape {self.Pc.shape} != {(config.M, config.Qc)}")
        for k, P in enumerate(self.Pk):
            if P.shape != (config.M, config.Qk[k]):
                raise ValueError(
                    f"P_{k} shape {P.shape} != {(config.M, config.Qk[k])}")
        if self.total_power() > config.Pt * (1.0 + tol):
            raise ValueError("precoders exceed the power budget")


def zero_precoders(config: SystemConfig) -> PrecoderSet:
    M = config.M
    return PrecoderSet(
        Pc=np.zeros((M, config.Qc), dtype=np.complex128),
        Pk=tuple(np.zeros((M, q), dtype=np.complex128) for q in config.Qk))


# -- covariances and rates ----------------------------------------------------

def rx_streams(Hk: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Effective receive matrix H_k^H P, shape (..., Q, cols)."""
    return np.einsum("...mq,mc->...qc", np.conj(Hk), P)


def _gram(T: np.ndarray) -> np.ndarray:
    return np.einsum("...qc,...rc->...qr", T, np.conj(T))


def interference_covariances(Hk: np.ndarray, P: PrecoderSet, k: int,
                             sigma_n2: float = 1.0):
    """Noise-plus-interference covariances for user k's common/private stages.

    Rc includes every private stream; Rp excludes user k's own.  Both are
    Q x Q Hermitian with eigenvalues >= sigma_n2.
    """
    Q = Hk.shape[-1]
    eye = sigma_n2 * np.eye(Q, dtype=np.complex128)
    Rc = np.broadcast_to(eye, Hk.shape[:-2] + (Q, Q)).copy()
    Rp = None
    for i, Pi in enumerate(P.Pk):
        if Pi.shape[1] == 0:
            continue
        G = _gram(rx_streams(Hk, Pi))
        Rc = Rc + G
        if i == k:
            Rp = G
    if Rp is None:
        Rp = np.zeros_like(Rc)
    return hermitize(Rc), hermitize(Rc - Rp)


def _rate_bits(T: np.ndarray, R: np.ndarray) -> np.ndarray:
    """log2 det(I + T^H R^-1 T) for effective streams T against covariance R."""
    if T.shape[-1] == 0:
        return np.zeros(T.shape[:-2])
    X = solve_hermitian(R, T)
    A = np.eye(T.shape[-1]) + np.einsum("...qc,...qd->...cd", np.conj(T), X)
    return logdet_hermitian(A) / LN2


def instantaneous_rates(Hk: np.ndarray, P: PrecoderSet, k: int,
                        sigma_n2: float = 1.0):
    """(R_c,k, R_p,k) in bits per channel use for one realization (batched)."""
    if not np.all(np.isfinite(Hk)):
        raise ValueError("channel contains non-finite entries")
    Rc, Rp = interference_covariances(Hk, P, k, sigma_n2)
    rc = _rate_bits(rx_streams(Hk, P.Pc), Rc)
    rp = _rate_bits(rx_streams(Hk, P.Pk[k]), Rp)
    return rc, rp


def mmse_equalizers(Hk: np.ndarray, P: PrecoderSet, k: int,
                    sigma_n2: float = 1.0):
    """MMSE receive filters (G_c: Qc x Q, G_p: Q_k x Q) for user k."""
    Rc, Rp = interference_covariances(Hk, P, k, sigma_n2)

    def filt(T, R):
        if T.shape[-1] == 0:
            return np.zeros(T.shape[:-2] + (0, T.shape[-2]), dtype=np.complex128)
        GH = solve_hermitian(_gram(T) + R, T)          # (..., Q, cols)
        return np.conj(np.swapaxes(GH, -1, -2))

    return filt(rx_streams(Hk, P.Pc), Rc), filt(rx_streams(Hk, P.Pk[k]), Rp)


def mmse_matrices(Hk: np.ndarray, P: PrecoderSet, k: int,
                  sigma_n2: float = 1.0):
    """MMSE error matrices E = (I + P^H H R^-1 H^H P)^-1, common and private."""
    Rc, Rp = interference_covariances(Hk, P, k, sigma_n2)

    def emat(T, R):
        c = T.shape[-1]
        if c == 0:
            return np.zeros(T.shape[:-2] + (0, 0), dtype=np.complex128)
        X = solve_hermitian(R, T)
        A = np.eye(c) + np.einsum("...qc,...qd->...cd", np.conj(T), X)
        return np.linalg.inv(hermitize(A))

    return emat(rx_streams(Hk, P.Pc), Rc), emat(rx_streams(Hk, P.Pk[k]), Rp)


def mse_matrix(Hk: np.ndarray, P: PrecoderSet, k: int, G: np.ndarray,
               stream: str, sigma_n2: float = 1.0) -> np.ndarray:
    """MSE matrix E(G) for an arbitrary receive filter G.

    ``stream`` selects the common ('c') or private ('p') stage; the private
    stage assumes the common streams were already removed by SIC.
    """
    Rc, Rp = interference_covariances(Hk, P, k, sigma_n2)
    if stream == "c":
        T, R = rx_streams(Hk, P.Pc), Rc
    elif stream == "p":
        T, R = rx_streams(Hk, P.Pk[k]), Rp
    else:
        raise ValueError("stream must be 'c' or 'p'")
    c = T.shape[-1]
    GT = np.einsum("...cq,...qd->...cd", G, T)
    cov = _gram(T) + R - sigma_n2 * np.eye(T.shape[-2])
    E = (np.eye(c) - GT - np.conj(np.swapaxes(GT, -1, -2))
         + np.einsum("...cq,...qr,...dr->...cd", G, cov, np.conj(G))
         + sigma_n2 * np.einsum("...cq,...dq->...cd", G, np.conj(G)))
    return hermitize(E)


# -- sample averages ----------------------------------------------------------

@dataclass
class AverageRates:
    """Per-user sample-average (SAF) rates, optionally with common shares."""

    common: np.ndarray            # (K,) per-user common-stream AR, bits
    private: np.ndarray           # (K,)
    shares: np.ndarray | None = None   # (K,) common-rate split C_k

    @property
    def common_min(self) -> float:
        """Decodable common rate: the worst user limits it."""
        return float(np.min(self.common)) if self.common.size else 0.0

    def with_shares(self, shares: np.ndarray, tol: float = 1e-9) -> "AverageRates":
        shares = np.asarray(shares, dtype=float)
        if np.any(shares < -tol):
            raise ValueError("common-rate shares must be nonnegative")
        if shares.sum() > self.common_min + max(tol, 1e-6):
            raise ValueError("common-rate shares exceed the common rate")
        return AverageRates(self.common, self.private, np.maximum(shares, 0.0))

    @property
    def totals(self) -> np.ndarray:
        shares = self.shares if self.shares is not None else 0.0
        return self.private + shares

    def weighted_sum(self, mu: np.ndarray) -> float:
        return float(np.dot(np.asarray(mu, dtype=float), self.totals))


def average_rates(samples, P: PrecoderSet, sigma_n2: float = 1.0) -> AverageRates:
    """SAF rates (1/N) sum_n R_{z,k}(H^(n)) per user; shares left unset."""
    if samples.n_samples < 1:
        raise ValueError("sample set is empty")
    K = samples.H.shape[1]
    common = np.empty(K)
    private = np.empty(K)
    for k in range(K):
        rc, rp = instantaneous_rates(samples.user(k), P, k, sigma_n2)
        common[k] = np.mean(rc)
        private[k] = np.mean(rp)
    return AverageRates(common=common, private=private)
