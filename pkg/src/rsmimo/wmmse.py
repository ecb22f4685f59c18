"""Rate-WMMSE machinery: augmented weighted MSEs and STEP-1 sample averages.

The augmented weighted MSE of a stream vector is

    xi = tr(U E) - ln det(U),

with the natural logarithm throughout this module: that is the convention in
which the optimum weight U = E^-1 is the exact stationary point and
min xi = dim - ln det(E^-1) holds with no stray constants.  Rates elsewhere
are bits, so identities read xi* = dim - R_bits * ln 2.

STEP 1 of the alternating optimization fixes the precoders, computes the
per-sample MMSE filters and weights, and accumulates the sample-average
coefficient blocks that make the precoder subproblem a deterministic QCQP.
Only M x M cores are stored; the Kronecker expansion to each consumer's
column count happens at assembly time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rates import (PrecoderSet, hermitize, logdet_hermitian, rx_streams,
                    _gram, solve_hermitian)

WEIGHT_EIG_CAP = 1e12   # keeps the QCQP well-scaled when rates saturate


def awmse(U: np.ndarray, E: np.ndarray) -> float:
    """Augmented weighted MSE tr(U E) - ln det(U) for one stream vector."""
    U = np.asarray(U, dtype=np.complex128)
    E = np.asarray(E, dtype=np.complex128)
    if U.shape[0] == 0:
        return 0.0
    try:
        np.linalg.cholesky(hermitize(U))
    except np.linalg.LinAlgError:
        raise ValueError("AWMSE weight must be Hermitian positive definite")
    return float(np.trace(U @ E).real - logdet_hermitian(U))


def optimal_weights(E: np.ndarray) -> np.ndarray:
    """Optimum MMSE weight U = E^-1, hermitized, eigenvalues capped."""
    E = np.asarray(E, dtype=np.complex128)
    if E.shape[-1] == 0:
        return E.copy()
    U = hermitize(np.linalg.inv(hermitize(E)))
    return clamp_weights(U)


def clamp_weights(U: np.ndarray, cap: float = WEIGHT_EIG_CAP) -> np.ndarray:
    """Cap weight eigenvalues; only touches matrices that actually exceed it."""
    if U.shape[-1] == 0:
        return U
    # Frobenius norm upper-bounds the spectral radius; cheap screen.
    big = np.linalg.norm(U, axis=(-2, -1)) > cap
    if not np.any(big):
        return U
    U = U.copy()
    w, V = np.linalg.eigh(U[big])
    w = np.minimum(w, cap)
    U[big] = np.einsum("...ij,...j,...kj->...ik", V, w, np.conj(V))
    return hermitize(U)


@dataclass
class SafBlocks:
    """Sample-averaged QCQP coefficients.

    ``common_core`` / ``private_core`` are the M x M means of
    H G^H U G H^H; quadratic blocks for a precoder with c columns are
    kron(I_c, core).  ``a_*`` are the means of vec(H G^H U) and ``phi_*``
    the scalar constants sigma_n^2 tr(U G G^H) + tr(U) - ln det(U).
    """

    M: int
    Qc: int
    Qk: tuple[int, ...]
    sigma_n2: float
    common_core: np.ndarray          # (K, M, M)
    private_core: np.ndarray         # (K, M, M)
    a_common: np.ndarray             # (K, M*Qc)
    a_private: tuple[np.ndarray, ...]  # per user, (M*Q_k,)
    phi_common: np.ndarray           # (K,)
    phi_private: np.ndarray          # (K,)

    @property
    def K(self) -> int:
        return len(self.Qk)

    def A_common_prime(self, k: int) -> np.ndarray:
        """Block applied to vec(Pc) in user k's common-rate constraint."""
        return np.kron(np.eye(self.Qc), self.common_core[k])

    def A_common(self, k: int, cols: int) -> np.ndarray:
        """Block applied to a private precoder's vec inside constraint k."""
        return np.kron(np.eye(cols), self.common_core[k])

    def A_private(self, k: int, cols: int) -> np.ndarray:
        return np.kron(np.eye(cols), self.private_core[k])


def _vec_batch(A: np.ndarray) -> np.ndarray:
    """Column-major vec of a batch of matrices: (..., m, c) -> (..., m*c)."""
    return np.swapaxes(A, -1, -2).reshape(A.shape[:-2] + (-1,))


def _stage_terms(Hk: np.ndarray, T: np.ndarray, R: np.ndarray, sigma_n2: float):
    """Per-sample core, linear vector and constant for one stream stage.

    Hk: (B, M, Q); T = Hk^H P: (B, Q, c); R: interference covariance.
    Returns (core (B,M,M), a (B,M*c), phi (B,), rate_nats (B,)).
    """
    B, M, _ = Hk.shape
    c = T.shape[-1]
    if c == 0:
        z = np.zeros((B, M, M), dtype=np.complex128)
        return z, np.zeros((B, 0), dtype=np.complex128), np.zeros(B), np.zeros(B)
    Th = np.conj(np.swapaxes(T, -1, -2))
    U = hermitize(np.eye(c) + Th @ solve_hermitian(R, T))   # = E^-1
    U = clamp_weights(U)
    Gh = solve_hermitian(_gram(T) + R, T)                   # (B, Q, c) = G^H
    G = np.conj(np.swapaxes(Gh, -1, -2))                    # (B, c, Q)
    W = G @ np.conj(np.swapaxes(Hk, -1, -2))                # G H^H, (B, c, M)
    lin = np.conj(np.swapaxes(W, -1, -2)) @ U               # H G^H U, (B, M, c)
    core = lin @ W                                          # H G^H U G H^H
    logdet = logdet_hermitian(U)
    phi = (sigma_n2 * np.einsum("bcd,bdq,bcq->b", U, G, np.conj(G)).real
           + np.einsum("bcc->b", U).real - logdet)
    return core, _vec_batch(lin), phi, logdet


def step1_update(P: PrecoderSet, samples, sigma_n2: float = 1.0,
                 chunk: int = 256) -> SafBlocks:
    """Fix the precoders, update per-sample (G, U) and average the coefficients.

    Samples are processed in fixed-size chunks with numpy's pairwise
    summation inside each chunk, so the result is deterministic and the peak
    memory does not grow with N.
    """
    N, K = samples.H.shape[:2]
    M = P.M
    Qc = P.Pc.shape[1]
    Qk = tuple(Pi.shape[1] for Pi in P.Pk)
    cc = np.zeros((K, M, M), dtype=np.complex128)
    pc = np.zeros((K, M, M), dtype=np.complex128)
    ac = np.zeros((K, M * Qc), dtype=np.complex128)
    ap = [np.zeros(M * q, dtype=np.complex128) for q in Qk]
    fc = np.zeros(K)
    fp = np.zeros(K)
    for k in range(K):
        Hk_all = samples.user(k)
        for lo in range(0, N, chunk):
            Hk = Hk_all[lo:lo + chunk]
            T = [rx_streams(Hk, Pi) for Pi in P.Pk]
            S = sigma_n2 * np.eye(Hk.shape[-1], dtype=np.complex128)
            S = S + sum(_gram(Ti) for Ti in T)
            Rc = hermitize(S)
            Rp = hermitize(S - _gram(T[k])) if Qk[k] else Rc
            core, a, phi, _ = _stage_terms(Hk, rx_streams(Hk, P.Pc), Rc, sigma_n2)
            cc[k] += core.sum(axis=0)
            ac[k] += a.sum(axis=0)
            fc[k] += phi.sum()
            core, a, phi, _ = _stage_terms(Hk, T[k], Rp, sigma_n2)
            pc[k] += core.sum(axis=0)
            ap[k] += a.sum(axis=0)
            fp[k] += phi.sum()
    return SafBlocks(
        M=M, Qc=Qc, Qk=Qk, sigma_n2=sigma_n2,
        common_core=hermitize(cc / N), private_core=hermitize(pc / N),
        a_common=ac / N, a_private=tuple(a / N for a in ap),
        phi_common=fc / N, phi_private=fp / N)


def per_sample_filters(P: PrecoderSet, samples, sigma_n2: float = 1.0):
    """MMSE equalizers and weights per user per sample, for diagnostics.

    Returns (G, U): two lists indexed by user, each holding a dict with
    'c' and 'p' arrays of shape (N, cols, Q) and (N, cols, cols).
    """
    from .rates import mmse_equalizers, mmse_matrices

    G, U = [], []
    for k in range(samples.H.shape[1]):
        Hk = samples.user(k)
        Gc, Gp = mmse_equalizers(Hk, P, k, sigma_n2)
        Ec, Ep = mmse_matrices(Hk, P, k, sigma_n2)
        G.append({"c": Gc, "p": Gp})
        U.append({"c": optimal_weights(Ec), "p": optimal_weights(Ep)})
    return G, U


def awmse_quadratic_value(blocks: SafBlocks, P: PrecoderSet, k: int,
                          stream: str) -> float:
    """Evaluate the vectorized quadratic form of one averaged AWMSE.

    Reproduces the trace-form sample mean exactly; used to cross-check the
    assembled QCQP against the expansion it came from.
    """
    pc = P.Pc.flatten(order="F")
    pk = [Pi.flatten(order="F") for Pi in P.Pk]
    if stream == "c":
        val = np.vdot(pc, blocks.A_common_prime(k) @ pc).real
        for i, pi in enumerate(pk):
            if pi.size:
                val += np.vdot(pi, blocks.A_common(k, blocks.Qk[i]) @ pi).real
        val -= 2.0 * np.vdot(blocks.a_common[k], pc).real
        return val + float(blocks.phi_common[k])
    val = 0.0
    for i, pi in enumerate(pk):
        if pi.size:
            val += np.vdot(pi, blocks.A_private(k, blocks.Qk[i]) @ pi).real
    if blocks.Qk[k]:
        # own-stream quadratic already counted in the loop above (i == k)
        val -= 2.0 * np.vdot(blocks.a_private[k], pk[k]).real
    return val + float(blocks.phi_private[k])
