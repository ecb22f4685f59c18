"""Link-level simulation of the ordered interference-nulling SIC receiver.

Each user first detects and decodes every common stream, best post-SINR
first, cancelling streams whose CRC passes; failed streams stay in the
interference covariance.  The user's private streams follow the same
procedure once the common phase is over, with the other users' private
streams always treated as noise.  The receiver has perfect channel
knowledge; the transmitter picks one modulation/coding pair per stream from
the per-stream rates of the same chain run without noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SystemConfig
from .fec import (CRC_BITS, ModCode, amc_select, crc_append, crc_check,
                  qam_constellation, qam_modulate)
from .rates import PrecoderSet, hermitize

SINR_CAP = 1e12      # keeps LLRs finite on noiseless/interference-free streams
DEFAULT_FRAME = 1024


def effective_channel(Hk: np.ndarray, Pc: np.ndarray, l: int) -> np.ndarray:
    """Receive-side signature H_k^H p of one precoder column."""
    return np.conj(Hk).T @ Pc[:, l]


def nulling_filter(h: np.ndarray, cov: np.ndarray):
    """MMSE nulling filter and its MSE for a stream with signature h.

    ``cov`` is the covariance of the filtered signal including the desired
    stream itself: sigma_n^2 I + sum over undetected signatures + private
    interference.  Returns (g, mse) with g = h^H cov^-1 and
    mse = 1 - h^H cov^-1 h in (0, 1].
    """
    cov = hermitize(cov)
    try:
        x = np.linalg.solve(cov, h)
    except np.linalg.LinAlgError:
        x = np.linalg.lstsq(cov, h, rcond=None)[0]
    g = np.conj(x)
    mse = float(np.clip(1.0 - np.real(np.vdot(h, x)), 1.0 / (1.0 + SINR_CAP), 1.0))
    return g, mse


def post_sinr(mse: float) -> float:
    """Post-processing SINR gamma = 1/mse - 1."""
    if not 0.0 < mse <= 1.0:
        raise ValueError("MSE must lie in (0, 1]")
    return min(1.0 / mse - 1.0, SINR_CAP)


def select_next_stream(candidates, sinrs) -> int:
    """Index (into candidates) attaining the best SINR; ties take the lowest
    stream index."""
    candidates = list(candidates)
    best = 0
    for j in range(1, len(candidates)):
        if sinrs[j] > sinrs[best]:
            best = j
    return candidates[best]


def llr(equalized: np.ndarray, gamma: float, order: int) -> np.ndarray:
    """Max-log LLRs of every bit of the equalized symbols.

    lambda = gamma * [min over bit-1 symbols of |u - a|^2 - min over bit-0],
    u = equalized/rho, rho = gamma/(1+gamma).  Positive means bit 0 is more
    likely.  Nonpositive SINR gives all-zero (uninformative) LLRs.
    """
    points, bit_table = qam_constellation(order)
    m = bit_table.shape[1]
    if gamma <= 0.0:
        return np.zeros((equalized.size, m))
    rho = gamma / (1.0 + gamma)
    d2 = np.abs(equalized[:, None] / rho - points[None, :]) ** 2
    out = np.empty((equalized.size, m))
    for i in range(m):
        ones = bit_table[:, i] == 1
        out[:, i] = gamma * (d2[:, ones].min(axis=1) - d2[:, ~ones].min(axis=1))
    return out


# -- stream bookkeeping ---------------------------------------------------------

@dataclass(frozen=True)
class McsAssignments:
    """Per-stream modulation/coding choices plus the common-bit split.

    ``common_fractions[k]`` is user k's share of each common stream's info
    bits (the optimized common-rate split, normalized); ``None`` entries mark
    streams that carry no data.
    """

    common: tuple[ModCode | None, ...]
    private: tuple[tuple[ModCode | None, ...], ...]
    common_fractions: tuple[float, ...]


def assign_mcs(common_rates, private_rates, shares,
               backoff: float = 0.9) -> McsAssignments:
    """AMC selection from per-stream rates and the common-rate shares."""
    shares = np.asarray(shares, dtype=float)
    total = shares.sum()
    frac = shares / total if total > 0 else np.zeros_like(shares)
    return McsAssignments(
        common=tuple(amc_select(r, backoff) for r in common_rates),
        private=tuple(tuple(amc_select(r, backoff) for r in user)
                      for user in private_rates),
        common_fractions=tuple(frac))


@dataclass
class StreamOutcome:
    kind: str              # 'c' or 'p'
    user: int              # owner (-1 for common)
    index: int
    mcs: ModCode | None
    sinr: float
    decoded: bool
    info_bits: int


@dataclass
class LlsReport:
    """Decoded-bit accounting for one link realization."""

    decoded_bits: np.ndarray       # (K,), fractional for shared common parts
    channel_uses: int
    outcomes: list[StreamOutcome] = field(default_factory=list)

    @property
    def throughput(self) -> float:
        return float(self.decoded_bits.sum()) / self.channel_uses


def predicted_efficiency(mcs: McsAssignments) -> float:
    """Sum of selected nominal efficiencies: the transmitter's throughput
    forecast for a candidate precoder set (common streams count once)."""
    tot = sum(mc.efficiency for mc in mcs.common if mc is not None)
    tot += sum(mc.efficiency for user in mcs.private for mc in user
               if mc is not None)
    return tot


def write_records(path: str | Path, rows: list[dict]) -> None:
    """Append-free CSV dump of per-run link records (documented schema)."""
    fields = ["snr_db", "scheme", "realization", "decoded_bits",
              "channel_uses", "throughput"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in fields})


# -- the receiver chain -----------------------------------------------------------

def _signatures(Hk: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Columns H_k^H p for every column p of P, shape (Q, cols)."""
    return np.conj(Hk).T @ P


def _interference(base: np.ndarray, sigs: np.ndarray, active) -> np.ndarray:
    cov = base.copy()
    for i in active:
        h = sigs[:, i]
        cov += np.outer(h, np.conj(h))
    return cov


def _sic_phase(yk, sigs, base_cov, order_pool, frames, codes, rng=None):
    """Detect/decode the streams in ``order_pool`` greedily by post-SINR.

    Returns a list of (stream, sinr, decoded_bits_or_None).  ``frames`` maps
    stream index to (tx_symbols, info_bits); ``codes`` to its ModCode.
    Successfully decoded streams are re-modulated and subtracted from yk in
    place; failures stay in the covariance for later streams.
    """
    results = []
    candidates = [i for i in order_pool if codes[i] is not None]
    uncancelled = set(candidates)
    while candidates:
        cov = _interference(base_cov, sigs, uncancelled)
        try:
            X = np.linalg.solve(hermitize(cov), sigs[:, candidates])
        except np.linalg.LinAlgError:
            X = np.linalg.lstsq(hermitize(cov), sigs[:, candidates],
                                rcond=None)[0]
        mses = [float(np.clip(1.0 - np.real(np.vdot(sigs[:, i], X[:, j])),
                              1.0 / (1.0 + SINR_CAP), 1.0))
                for j, i in enumerate(candidates)]
        sinrs = [post_sinr(e) for e in mses]
        i_star = select_next_stream(candidates, sinrs)
        j = candidates.index(i_star)
        g = np.conj(X[:, j])
        gamma = sinrs[j]
        mc = codes[i_star]
        tx_syms, info = frames[i_star]
        z = g @ yk
        lam = llr(z, gamma, mc.qam_order).reshape(-1)
        # filler positions beyond the repeated code block carry no data;
        # soft-combine the repetition copies
        coded_len = mc.code.coded_length(info.size + CRC_BITS)
        lam = lam[:mc.repetition * coded_len]
        lam = lam.reshape(mc.repetition, coded_len).sum(axis=0)
        dec = mc.code.decode(lam)
        ok = dec.size >= CRC_BITS and crc_check(dec)
        if ok:
            # reconstruct and cancel; CRC passes make this exact w.h.p.
            re_syms = _frame_symbols(dec[:-CRC_BITS], mc, tx_syms.size)
            yk -= np.outer(sigs[:, i_star], re_syms)
            uncancelled.discard(i_star)
        results.append((i_star, gamma, dec[:-CRC_BITS] if ok else None))
        candidates.remove(i_star)
    return results


def _frame_symbols(info: np.ndarray, mc: ModCode, n_symbols: int) -> np.ndarray:
    """Encode info+CRC, repeat, pad the coded bits to the frame, modulate."""
    coded = np.tile(mc.code.encode(crc_append(info)), mc.repetition)
    pad = n_symbols * mc.bits_per_symbol - coded.size
    bits = np.concatenate([coded, np.zeros(pad, dtype=np.uint8)])
    return qam_modulate(bits, mc.qam_order)


def _chain_rates(base: np.ndarray, sigs: np.ndarray, active: list[int],
                 n_total: int) -> np.ndarray:
    """Greedy SIC rates log2(1+gamma) per stream; inactive streams get 0."""
    rates = np.zeros(n_total)
    remaining = list(active)
    while remaining:
        cov = _interference(base, sigs, remaining)
        sinrs = []
        for i in remaining:
            _, mse = nulling_filter(sigs[:, i], cov)
            sinrs.append(post_sinr(mse))
        i_star = select_next_stream(remaining, sinrs)
        rates[i_star] = np.log2(1.0 + sinrs[remaining.index(i_star)])
        remaining.remove(i_star)
    return rates


def per_stream_rates(config: SystemConfig, P: PrecoderSet, H_true: np.ndarray,
                     active_common: list[int] | None = None,
                     active_private: list[list[int]] | None = None):
    """Per-stream achievable rates log2(1+gamma) through the SIC chain.

    Common stream l must be decodable everywhere, so its rate is the minimum
    over users of the rate seen at that user's decode step (assuming every
    earlier cancellation succeeded).  Used by AMC at the transmitter, which
    is assumed to know the instantaneous channel.  Streams outside the
    ``active_*`` sets transmit nothing and are excluded from interference.
    """
    K = config.K
    Qc = P.Pc.shape[1]
    if active_common is None:
        active_common = list(range(Qc))
    if active_private is None:
        active_private = [list(range(P.Pk[k].shape[1])) for k in range(K)]
    common = np.full((K, Qc), np.inf) if Qc else np.zeros((K, 0))
    private = []
    for k in range(K):
        Hk = H_true[k]
        base = config.sigma_n2 * np.eye(config.Q, dtype=np.complex128)
        for j in range(K):
            if j != k and active_private[j]:
                S = _signatures(Hk, P.Pk[j][:, active_private[j]])
                base += S @ np.conj(S).T
        sig_own = _signatures(Hk, P.Pk[k])
        base_c = _interference(base, sig_own, active_private[k])
        if Qc:
            common[k] = _chain_rates(base_c, _signatures(Hk, P.Pc),
                                     list(active_common), Qc)
            common[k, [i for i in range(Qc) if i not in active_common]] = 0.0
        private.append(_chain_rates(base, sig_own, list(active_private[k]),
                                    sig_own.shape[1]))
    return (common.min(axis=0) if Qc else np.zeros(0)), private


def _masked_precoders(P: PrecoderSet, active_c, active_p,
                      budget: float | None) -> PrecoderSet:
    """Zero the dropped columns; optionally rescale the survivors to spend
    the dropped power."""
    Pc = P.Pc.copy()
    for i in range(Pc.shape[1]):
        if i not in active_c:
            Pc[:, i] = 0.0
    Pk = []
    for k, act in enumerate(active_p):
        Pi = P.Pk[k].copy()
        for i in range(Pi.shape[1]):
            if i not in act:
                Pi[:, i] = 0.0
        Pk.append(Pi)
    out = PrecoderSet(Pc=Pc, Pk=tuple(Pk))
    if budget is not None:
        live = out.total_power()
        if 0.0 < live < budget:
            out = out.scaled(np.sqrt(budget / live))
    return out


def assign_mcs_adaptive(config: SystemConfig, P: PrecoderSet,
                        H_true: np.ndarray, shares, backoff: float = 0.9,
                        reallocate_power: bool = True):
    """AMC at a fixed point of stream dropping.

    A stream whose backed-off rate falls below the lowest table entry is
    turned off; the remaining streams' rates are recomputed without its
    interference and selection repeats.  Dropping is one-way, so the loop
    terminates after at most one pass per stream.  With
    ``reallocate_power`` the dropped columns' power moves to the survivors
    (a transmit-side adaptation; the power budget is unchanged).

    Returns (mcs, as-transmitted PrecoderSet).
    """
    active_c = [i for i in range(P.Pc.shape[1])
                if np.linalg.norm(P.Pc[:, i]) > 0]
    active_p = [[i for i in range(P.Pk[k].shape[1])
                 if np.linalg.norm(P.Pk[k][:, i]) > 0]
                for k in range(config.K)]
    budget = min(P.total_power(), config.Pt) if reallocate_power else None
    while True:
        P_tx = _masked_precoders(P, active_c, active_p, budget)
        cr, pr = per_stream_rates(config, P_tx, H_true, active_c, active_p)
        mcs = assign_mcs(cr, pr, shares, backoff)
        new_c = [i for i in active_c if mcs.common[i] is not None]
        new_p = [[i for i in active_p[k] if mcs.private[k][i] is not None]
                 for k in range(config.K)]
        if new_c == active_c and new_p == active_p:
            return mcs, P_tx
        active_c, active_p = new_c, new_p


def simulate_link(config: SystemConfig, P: PrecoderSet, H_true: np.ndarray,
                  mcs: McsAssignments, S: int = DEFAULT_FRAME,
                  rng: np.random.Generator | None = None) -> LlsReport:
    """Transmit S channel uses and run every user's SIC receiver.

    Info bits are credited per user only when the frame's CRC checks out;
    common-stream bits are split across users by ``mcs.common_fractions``.
    """
    if rng is None:
        rng = np.random.default_rng()
    K = config.K
    Qc = P.Pc.shape[1]

    def build_frames(precoder, codes):
        frames = {}
        for i in range(precoder.shape[1]):
            mc = codes[i]
            if mc is None or np.linalg.norm(precoder[:, i]) == 0.0:
                frames[i] = None
                continue
            n_info = mc.info_bits(S)
            info = rng.integers(0, 2, n_info).astype(np.uint8)
            frames[i] = (_frame_symbols(info, mc, S), info)
        return frames

    common_frames = build_frames(P.Pc, mcs.common)
    private_frames = [build_frames(P.Pk[k], mcs.private[k]) for k in range(K)]

    # transmitted block
    X = np.zeros((config.M, S), dtype=np.complex128)
    for i, fr in common_frames.items():
        if fr is not None:
            X += np.outer(P.Pc[:, i], fr[0])
    for k in range(K):
        for i, fr in private_frames[k].items():
            if fr is not None:
                X += np.outer(P.Pk[k][:, i], fr[0])

    decoded = np.zeros(K)
    outcomes: list[StreamOutcome] = []
    for k in range(K):
        Hk = H_true[k]
        noise = (rng.normal(0, np.sqrt(config.sigma_n2 / 2), (config.Q, S))
                 + 1j * rng.normal(0, np.sqrt(config.sigma_n2 / 2), (config.Q, S))
                 ) if config.sigma_n2 > 0 else 0.0
        yk = np.conj(Hk).T @ X + noise

        base = np.zeros((config.Q, config.Q), dtype=np.complex128)
        base += config.sigma_n2 * np.eye(config.Q)
        for j in range(K):
            frames_j = private_frames[j]
            act = [i for i, fr in frames_j.items() if fr is not None]
            if j != k and act:
                Sg = _signatures(Hk, P.Pk[j][:, act])
                base += Sg @ np.conj(Sg).T

        sig_c = _signatures(Hk, P.Pc)
        active_c = [i for i, fr in common_frames.items() if fr is not None]
        own_act = [i for i, fr in private_frames[k].items() if fr is not None]
        sig_own = _signatures(Hk, P.Pk[k])
        base_c = base.copy()
        for i in own_act:
            h = sig_own[:, i]
            base_c += np.outer(h, np.conj(h))

        frac = mcs.common_fractions[k]
        res_c = _sic_phase(yk, sig_c, base_c, active_c,
                           {i: common_frames[i] for i in active_c}, mcs.common)
        failed_common = []
        for i, gamma, dec in res_c:
            ok = dec is not None and np.array_equal(dec, common_frames[i][1])
            if dec is not None and not ok:
                # CRC false pass: cancellation already injected garbage;
                # count nothing for this stream
                ok = False
            if ok:
                decoded[k] += frac * common_frames[i][1].size
            else:
                failed_common.append(i)
            outcomes.append(StreamOutcome("c", k, i, mcs.common[i], gamma,
                                          ok, common_frames[i][1].size))
        base_p = base.copy()
        for i in failed_common:
            h = sig_c[:, i]
            base_p += np.outer(h, np.conj(h))
        res_p = _sic_phase(yk, _signatures(Hk, P.Pk[k]), base_p, own_act,
                           {i: private_frames[k][i] for i in own_act},
                           mcs.private[k])
        for i, gamma, dec in res_p:
            ok = dec is not None and np.array_equal(dec, private_frames[k][i][1])
            if ok:
                decoded[k] += private_frames[k][i][1].size
            outcomes.append(StreamOutcome("p", k, i, mcs.private[k][i], gamma,
                                          ok, private_frames[k][i][1].size))
    return LlsReport(decoded_bits=decoded, channel_uses=S, outcomes=outcomes)
