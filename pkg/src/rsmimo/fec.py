"""Modulation, codingang AMC for the link-level simulator.

QAM mapping convention: for a 2^m-point square constellation, the first m/2
bits select the in-phase level and the last m/2 the quadrature level, each
through a binary-reflected Gray map with all-zero bits on the most positive
level, so 4-QAM maps bits 00 to (+1+1j)/sqrt(2).  All constellations have
unit average symbol energy.

The baseline FEC is a rate-1/2 constraint-length-7 convolutional code
(generators 133/171 octal) punctured to rates 2/3, 3/4 and 5/6, decoded with
a soft-decision Viterbi algorithm.  Frames carry a CRC-16 so the receiver
can tell whether a decode succeeded.  Code choice sits behind the FecCode
interface, so a stronger code can be dropped in.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Protocol

import numpy as np

QAM_ORDERS = (4, 16, 64, 256)
CODE_RATES = (Fraction(1, 2), Fraction(2, 3), Fraction(3, 4), Fraction(5, 6))
CRC_BITS = 16


# -- Gray-mapped square QAM ----------------------------------------------------

def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = 1
    while shift < 16:
        b ^= b >> shift
        shift *= 2
    return b


@lru_cache(maxsize=None)
def qam_constellation(order: int):
    """(points, bit_table) for the documented Gray mapping.

    ``points[i]`` is the unit-energy symbol for the m-bit label ``i`` read
    MSB-first; ``bit_table`` has shape (order, m).
    """
    if order not in QAM_ORDERS:
        raise ValueError(f"unsupported QAM order {order}")
    m = int(np.log2(order))
    half = m // 2
    L = 1 << half
    norm = np.sqrt(2.0 * (L * L - 1) / 3.0)
    labels = np.arange(order)
    bit_table = ((labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.uint8)
    gi = labels >> half
    gq = labels & (L - 1)
    vi = _gray_to_binary(gi)
    vq = _gray_to_binary(gq)
    amp = lambda v: (L - 1 - 2 * v).astype(float)
    points = (amp(vi) + 1j * amp(vq)) / norm
    return points, bit_table


def qam_modulate(bits: np.ndarray, order: int) -> np.ndarray:
    """Map a bit array (length divisible by log2(order)) to symbols."""
    points, _ = qam_constellation(order)
    m = int(np.log2(order))
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} not divisible by {m}")
    labels = bits.reshape(-1, m) @ (1 << np.arange(m - 1, -1, -1))
    return points[labels]


def qam_demodulate_hard(symbols: np.ndarray, order: int) -> np.ndarray:
    """Nearest-point hard decisions back to bits."""
    points, bit_table = qam_constellation(order)
    idx = np.argmin(np.abs(symbols[:, None] - points[None, :]), axis=1)
    return bit_table[idx].reshape(-1)


# -- CRC-16 ---------------------------------------------------------------------

@lru_cache(maxsize=1)
def _crc16_table() -> np.ndarray:
    poly = 0x1021
    table = np.empty(256, dtype=np.uint16)
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ poly if crc & 0x8000 else crc << 1) & 0xFFFF
        table[byte] = crc
    return table


def crc16(bits: np.ndarray) -> np.ndarray:
    """CRC-16/CCITT-FALSE over the bits packed MSB-first (zero-padded)."""
    table = _crc16_table()
    crc = 0xFFFF
    for byte in np.packbits(np.asarray(bits, dtype=np.uint8)):
        crc = ((crc << 8) & 0xFFFF) ^ int(table[(crc >> 8) ^ byte])
    return ((crc >> np.arange(15, -1, -1)) & 1).astype(np.uint8)


def crc_append(bits: np.ndarray) -> np.ndarray:
    return np.concatenate([bits, crc16(bits)])


def crc_check(bits_with_crc: np.ndarray) -> bool:
    body, tail = bits_with_crc[:-CRC_BITS], bits_with_crc[-CRC_BITS:]
    return bool(np.array_equal(crc16(body), tail))


# -- punctured convolutional code -------------------------------------------------

class FecCode(Protocol):
    """Soft-decision FEC: LLRs in, info bits out; positive LLR means bit 0."""

    rate: Fraction

    def encode(self, info: np.ndarray) -> np.ndarray: ...
    def decode(self, llrs: np.ndarray) -> np.ndarray: ...
    def coded_length(self, n_info: int) -> int: ...


_PUNCTURE = {
    Fraction(1, 2): (np.array([1]), np.array([1])),
    Fraction(2, 3): (np.array([1, 1]), np.array([1, 0])),
    Fraction(3, 4): (np.array([1, 0, 1]), np.array([1, 1, 0])),
    Fraction(5, 6): (np.array([1, 0, 1, 0, 1]), np.array([1, 1, 0, 1, 0])),
}
_G = (0b1011011, 0b1111001)     # 133, 171 octal, constraint length 7
_MEM = 6
_NSTATES = 64


@lru_cache(maxsize=1)
def _trellis():
    """Predecessor tables: for each next state, its 2 (prev, in-bit) edges."""
    taps = [np.array([(g >> i) & 1 for i in range(6, -1, -1)]) for g in _G]
    nxt = np.empty((_NSTATES, 2), dtype=np.int64)
    out = np.empty((_NSTATES, 2, 2), dtype=np.int8)
    for s in range(_NSTATES):
        hist = np.array([(s >> i) & 1 for i in range(5, -1, -1)])
        for b in (0, 1):
            reg = np.concatenate([[b], hist])
            nxt[s, b] = (b << 5) | (s >> 1)
            out[s, b] = [int(reg @ t) & 1 for t in taps]
    pred = np.empty((_NSTATES, 2), dtype=np.int64)
    pbit = np.empty((_NSTATES, 2), dtype=np.int64)
    pout = np.empty((_NSTATES, 2, 2), dtype=np.int8)
    fill = np.zeros(_NSTATES, dtype=np.int64)
    for s in range(_NSTATES):
        for b in (0, 1):
            ns = nxt[s, b]
            j = fill[ns]
            pred[ns, j] = s
            pbit[ns, j] = b
            pout[ns, j] = out[s, b]
            fill[ns] += 1
    return taps, pred, pbit, pout


@dataclass(frozen=True)
class ConvolutionalCode:
    """Terminated 133/171 code punctured to one of the standard rates."""

    rate: Fraction = Fraction(1, 2)

    def __post_init__(self):
        if self.rate not in _PUNCTURE:
            raise ValueError(f"unsupported code rate {self.rate}")

    def _keep_mask(self, n_pairs: int) -> np.ndarray:
        pa, pb = _PUNCTURE[self.rate]
        period = pa.size
        reps = -(-n_pairs // period)
        mask = np.stack([np.tile(pa, reps)[:n_pairs],
                         np.tile(pb, reps)[:n_pairs]], axis=1)
        return mask.reshape(-1).astype(bool)

    def coded_length(self, n_info: int) -> int:
        return int(self._keep_mask(n_info + _MEM).sum())

    def max_info_bits(self, n_coded: int) -> int:
        """Largest info length whose punctured output fits in n_coded bits."""
        n = max(int(n_coded * self.rate) - _MEM, 1)
        while self.coded_length(n) > n_coded:
            n -= 1
        while self.coded_length(n + 1) <= n_coded:
            n += 1
        return n

    def encode(self, info: np.ndarray) -> np.ndarray:
        taps, *_ = _trellis()
        bits = np.concatenate([np.asarray(info, dtype=np.uint8),
                               np.zeros(_MEM, dtype=np.uint8)])
        streams = [np.convolve(bits, t) % 2 for t in taps]
        pairs = np.stack([s[:bits.size] for s in streams], axis=1).reshape(-1)
        return pairs[self._keep_mask(bits.size)].astype(np.uint8)

    def decode(self, llrs: np.ndarray) -> np.ndarray:
        """Soft Viterbi over the depunctured trellis; returns info bits."""
        _, pred, pbit, pout = _trellis()
        keep_per_pair = self._keep_mask(1).size  # noqa: F841 (doc aid)
        # invert puncturing: zero LLR at removed positions
        n_coded = llrs.size
        # find n_pairs with kept(n_pairs) == n_coded
        n_pairs = int(np.ceil(n_coded / 2))
        while self._keep_mask(n_pairs).sum() < n_coded:
            n_pairs += 1
        mask = self._keep_mask(n_pairs)
        full = np.zeros(2 * n_pairs)
        full[mask] = llrs
        lam = full.reshape(-1, 2)
        # branch metric: correlation, +llr/2 for an expected 0 bit
        sgn = 1.0 - 2.0 * pout.astype(float)          # (64, 2, 2)
        metrics = np.full(_NSTATES, -1e18)
        metrics[0] = 0.0
        choices = np.empty((n_pairs, _NSTATES), dtype=np.int8)
        for t in range(n_pairs):
            bm = 0.5 * (sgn @ lam[t])                  # (64, 2)
            cand = metrics[pred] + bm
            choices[t] = np.argmax(cand, axis=1)
            metrics = np.take_along_axis(
                cand, choices[t][:, None].astype(np.int64), axis=1)[:, 0]
        state = 0                                      # terminated
        bits = np.empty(n_pairs, dtype=np.uint8)
        for t in range(n_pairs - 1, -1, -1):
            j = choices[t, state]
            bits[t] = pbit[state, j]
            state = pred[state, j]
        return bits[:n_pairs - _MEM]


# -- adaptive modulation and coding ------------------------------------------------

@dataclass(frozen=True)
class ModCode:
    """A QAM order / code rate / repetition triple.

    ``repetition`` block-repeats the coded bits; the receiver soft-combines
    the copies' LLRs.  It extends the scheme set below 1 bit/use, which the
    punctured code alone cannot reach.
    """

    qam_order: int
    code_rate: Fraction
    repetition: int = 1

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.qam_order))

    @property
    def efficiency(self) -> float:
        return float(self.code_rate) * self.bits_per_symbol / self.repetition

    @property
    def code(self) -> ConvolutionalCode:
        return ConvolutionalCode(self.code_rate)

    def info_bits(self, n_symbols: int) -> int:
        """Info payload (CRC excluded) carried by a frame of n_symbols."""
        slots = (n_symbols * self.bits_per_symbol) // self.repetition
        cap = self.code.max_info_bits(slots)
        return max(cap - CRC_BITS, 0)

    def frame_efficiency(self, n_symbols: int) -> float:
        """Net info bits per channel use after CRC and termination overhead."""
        return self.info_bits(n_symbols) / n_symbols


# low-rate extension: repetition of the strongest (mother) code only; the
# punctured rates lose more coding gain than repetition can buy back
_REPEATED = (ModCode(4, Fraction(1, 2), 2), ModCode(4, Fraction(1, 2), 4))

# sorted by nominal efficiency; ties resolved toward the smaller constellation
AMC_TABLE: tuple[ModCode, ...] = tuple(sorted(
    tuple(ModCode(o, r) for o in QAM_ORDERS for r in CODE_RATES) + _REPEATED,
    key=lambda mc: (mc.efficiency, -mc.qam_order, mc.repetition)))


def amc_select(stream_rate: float, backoff: float = 0.9) -> ModCode | None:
    """Highest-efficiency pair with efficiency <= stream_rate * backoff.

    Streams whose backed-off rate sits below the lowest pair are skipped
    (None): transmitting a frame past the code's reliable point only burns
    power and poisons the cancellation chain.
    """
    target = stream_rate * backoff
    best = None
    for mc in AMC_TABLE:
        if mc.efficiency <= target:
            best = mc
    return best
