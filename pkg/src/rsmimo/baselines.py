"""MU-MIMO and two-user MIMO NOMA baselines plus closed-form sum-DoF values.

Both baselines reuse the rate-splitting machinery through its special-case
embeddings: MU-MIMO turns the common stream off, and two-user NOMA with
decoding order (strong -> weak) carries the weak user's whole message on the
common stream (Qc = Q), removes the weak user's private streams, and pins the
strong user's common-rate share to zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ao import OptResult, run_ao, _mrt_columns
from .channel import ChannelEstimate, SampleSet
from .config import PERFECT, SystemConfig, is_perfect
from .rates import PrecoderSet


class UnsupportedRegime(ValueError):
    """Antenna geometry outside the cases the closed forms cover."""


@dataclass(frozen=True)
class DofInputs:
    M: int
    Q: int
    K: int
    Qc: int = 0
    Qp: int | None = None
    alpha: float | str = PERFECT

    @property
    def qp(self) -> int:
        return min(self.M, self.K * self.Q) if self.Qp is None else self.Qp

    @property
    def a(self) -> float:
        # alpha = 1 is the DoF-perspective equivalent of perfect CSIT
        return 1.0 if is_perfect(self.alpha) else float(self.alpha)


def dof_rs(inp: DofInputs) -> float:
    """Sum-DoF of rate splitting: Qc(1-alpha) + Qp*alpha for M in {2Q..KQ},
    M when M <= Q.  Other geometries are not covered by the closed form."""
    if inp.M <= inp.Q:
        return float(inp.M)
    if inp.M % inp.Q == 0 and 2 <= inp.M // inp.Q <= inp.K:
        return inp.Qc * (1.0 - inp.a) + inp.qp * inp.a
    raise UnsupportedRegime(
        f"no closed form for M={inp.M}, Q={inp.Q}, K={inp.K}")


def dof_mu_mimo(inp: DofInputs) -> float:
    """max(min(M,Q), Qp*alpha): single-user fallback vs degraded MU gain."""
    return float(max(min(inp.M, inp.Q), inp.qp * inp.a))


def dof_noma(inp: DofInputs) -> float:
    """min(M,Q): the last-decoded message caps every user, independent of
    CSIT quality."""
    return float(min(inp.M, inp.Q))


# -- water-filling and the NOMA sum-rate bound --------------------------------

def waterfilling(gains, Pt: float) -> np.ndarray:
    """Exact water-filling: p_i = (mu - 1/g_i)^+ with sum p_i = Pt.

    The water level is computed in closed form over sorted gains.  All-zero
    gains fall back to a uniform (zero-capacity) split with a warning.
    """
    g = np.asarray(gains, dtype=float)
    if Pt <= 0:
        raise ValueError("power budget must be positive")
    if np.any(g < 0):
        raise ValueError("gains must be nonnegative")
    if not np.any(g > 0):
        warnings.warn("all channel gains are zero; allocation carries no rate",
                      RuntimeWarning)
        return np.full(g.shape, Pt / g.size)
    p = np.zeros_like(g)
    active = np.flatnonzero(g > 0)
    inv = np.sort(1.0 / g[active])
    for m in range(inv.size, 0, -1):
        mu = (Pt + inv[:m].sum()) / m
        if mu >= inv[m - 1]:
            break
    alloc = np.maximum(mu - 1.0 / g[active], 0.0)
    p[active] = alloc * (Pt / alloc.sum())   # remove roundoff from the budget
    return p


def su_capacity(H1: np.ndarray, Pt: float, sigma_n2: float = 1.0) -> float:
    """Single-user capacity of the channel y = H1^H x at power Pt, bits."""
    g = np.linalg.eigvalsh(np.conj(H1).T @ H1).real
    g = np.clip(g, 0.0, None) / sigma_n2
    if not np.any(g > 0):
        return 0.0
    p = waterfilling(g, Pt)
    return float(np.sum(np.log2(1.0 + g * p)))


def noma_sum_rate_upper_bound(H1: np.ndarray, Pt: float,
                              sigma_n2: float = 1.0) -> float:
    """Sum-rate cap for NOMA with H1 decoded-by-all first in order: the
    single-user water-filling capacity of user-1's channel."""
    return su_capacity(H1, Pt, sigma_n2)


# -- baseline optimizers -------------------------------------------------------

def mu_mimo_optimize(config: SystemConfig, est: ChannelEstimate,
                     samples: SampleSet, mu, **kwargs) -> OptResult:
    """Solve the WASR problem with the common stream turned off."""
    cfg = config.replace(Qc=0)
    return run_ao(cfg, est, samples, mu, **kwargs)


@dataclass
class NomaResult:
    best: OptResult
    order: tuple[int, int]            # (strong, weak): strong decodes both
    per_order: dict


def noma_config(config: SystemConfig, strong: int) -> SystemConfig:
    qk = tuple(config.Q if k == strong else 0 for k in range(config.K))
    return config.replace(Qc=config.Q, Qk=qk)


def _noma_init(cfg: SystemConfig, est: ChannelEstimate,
               strong: int, weak: int) -> PrecoderSet:
    """MRT with uniform power across the two users; the weak user's streams
    ride the common precoder."""
    half = cfg.Pt / 2.0
    Pc = _mrt_columns(est.Hhat[weak], cfg.Qc) * np.sqrt(half / cfg.Qc)
    Pk = []
    for k in range(cfg.K):
        if cfg.Qk[k] == 0:
            Pk.append(np.zeros((cfg.M, 0), dtype=np.complex128))
        else:
            Pk.append(_mrt_columns(est.Hhat[k], cfg.Qk[k])
                      * np.sqrt(half / cfg.Qk[k]))
    return PrecoderSet(Pc=Pc, Pk=tuple(Pk))


def noma_optimize_2user(config: SystemConfig, est: ChannelEstimate,
                        samples: SampleSet, mu, **kwargs) -> NomaResult:
    """Two-user MIMO NOMA via the rate-splitting embedding, both decoding
    orders, keeping the better one.

    The strong user's share of the common rate is eliminated, so the weak
    user's whole rate is the common rate: exactly the decoded-by-both
    constraint of successive interference cancellation.
    """
    if config.K != 2:
        raise ValueError("the NOMA baseline is limited to 2 users")
    if config.Q > config.M:
        raise ValueError("NOMA embedding needs Qc = Q <= min(M, Q)")
    per_order = {}
    best, best_order = None, None
    for strong in (0, 1):
        weak = 1 - strong
        cfg = noma_config(config, strong)
        res = run_ao(cfg, est, samples, mu,
                     P_init=_noma_init(cfg, est, strong, weak),
                     zero_share_users=(strong,), **kwargs)
        per_order[(strong, weak)] = res
        if best is None or res.wasr > best.wasr:
            best, best_order = res, (strong, weak)
    return NomaResult(best=best, order=best_order, per_order=per_order)
