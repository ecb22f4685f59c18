"""Alternating optimization of the weighted average sum rate.

Each iteration runs STEP 1 (MMSE filters/weights and their sample averages at
the current precoders) and STEP 2 (the convex precoder subproblem), tracking
the weighted AWMSE objective

    obj = sum_k mu_k (xhat_k + Q_k - ln2 * Rp_hat_k)

evaluated at the fresh MMSE solution.  The objective is non-increasing and
maps affinely to the achieved WASR: wasr = (sum_k mu_k Q_k - obj) / ln2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qcqp
from .channel import ChannelEstimate, SampleSet
from .config import SystemConfig
from .rates import LN2, AverageRates, PrecoderSet, average_rates
from .wmmse import step1_update

# keeps the common-rate constraint strictly feasible when the power-split
# formula would give the common precoder exactly zero power
MIN_COMMON_FRACTION = 1e-6


@dataclass
class OptResult:
    """Converged precoders, common-rate shares, and the achieved WASR."""

    precoders: PrecoderSet
    rates: AverageRates
    shares: np.ndarray            # common-rate share per user, bits
    wasr: float                   # achieved weighted average sum rate, bits
    mu: np.ndarray
    objective_trace: list[float] = field(repr=False)
    status: str = "converged"
    non_monotone: bool = False
    iterations: int = 0
    xhat: np.ndarray | None = field(default=None, repr=False)
    solver_objective: float = float("nan")

    @property
    def totals(self) -> np.ndarray:
        return self.rates.private + self.shares

    def wasr_from_objective(self) -> float:
        """Map the final solver objective back to a WASR (consistency check)."""
        qdims = np.array([float(P.shape[1]) for P in self.precoders.Pk])
        return float((np.dot(self.mu, qdims) - self.solver_objective) / LN2)


def _mrt_columns(Hhat_k: np.ndarray, q: int) -> np.ndarray:
    """Matched directions of the first q estimate columns, unit norm each."""
    M = Hhat_k.shape[0]
    cols = np.empty((M, q), dtype=np.complex128)
    for j in range(q):
        h = Hhat_k[:, j]
        nrm = np.linalg.norm(h)
        cols[:, j] = h / nrm if nrm > 0 else np.eye(M)[:, j % M]
    return cols


def _svd_columns(est: ChannelEstimate, q: int) -> np.ndarray:
    U, _, _ = np.linalg.svd(est.stacked(), full_matrices=True)
    return U[:, :q]


def split_common_power(config: SystemConfig) -> float:
    """Initial power on the common streams: q_c = Pt - Pt^alpha.

    PERFECT CSIT has no alpha to plug in; an even split is used.  The result
    is floored away from zero so the common-rate constraint starts strictly
    feasible.
    """
    if config.Qc == 0:
        return 0.0
    if config.perfect_csit:
        qc = 0.5 * config.Pt
    else:
        qc = config.Pt - config.Pt ** config.alpha
    lo = MIN_COMMON_FRACTION * config.Pt
    return float(np.clip(qc, lo, config.Pt - lo))


def initialize_precoders(config: SystemConfig,
                         est: ChannelEstimate) -> PrecoderSet:
    """MRT-SVD start: matched private directions, dominant singular common
    directions, power split q_c = Pt - Pt^alpha.  With the common stream
    disabled this reduces to MRT with uniform power across served users."""
    qc = split_common_power(config)
    qp = config.Pt - qc
    served = [k for k in range(config.K) if config.Qk[k] > 0]
    Pk = []
    for k in range(config.K):
        q = config.Qk[k]
        if q == 0:
            Pk.append(np.zeros((config.M, 0), dtype=np.complex128))
            continue
        power = qp / (len(served) * q)
        Pk.append(_mrt_columns(est.Hhat[k], q) * np.sqrt(power))
    if config.Qc > 0:
        Pc = _svd_columns(est, config.Qc) * np.sqrt(qc / config.Qc)
    else:
        Pc = np.zeros((config.M, 0), dtype=np.complex128)
    return PrecoderSet(Pc=Pc, Pk=tuple(Pk))


def seed_common(P: PrecoderSet, config: SystemConfig, est: ChannelEstimate,
                fraction: float = 1e-8) -> PrecoderSet:
    """Attach a vanishing common precoder to a private-only solution.

    Used to warm-start rate splitting from the MU-MIMO optimum: the seed
    keeps the subproblem strictly feasible while costing O(fraction) rate.
    """
    if config.Qc == 0:
        return P
    delta = fraction * config.Pt
    Pc = _svd_columns(est, config.Qc) * np.sqrt(delta / config.Qc)
    keep = np.sqrt(max(config.Pt - delta, 0.0) / max(P.total_power(), 1e-300))
    scale = min(1.0, keep)
    return PrecoderSet(Pc=Pc, Pk=tuple(scale * Pi for Pi in P.Pk))


def run_ao(config: SystemConfig, est: ChannelEstimate, samples: SampleSet,
           mu, eps: float = 1e-4, max_iter: int = 2000,
           P_init: PrecoderSet | None = None,
           zero_share_users: tuple[int, ...] = (),
           solver_tol: float = 1e-7, trace_path: str | Path | None = None,
           ) -> OptResult:
    """Algorithm: alternate STEP-1 averages and STEP-2 QCQP solves until the
    objective changes by less than ``eps``."""
    mu = np.asarray(mu, dtype=float)
    P = P_init if P_init is not None else initialize_precoders(config, est)
    P.check(config)
    qdims = np.array([float(q) for q in config.Qk])
    xhat = None
    trace: list[float] = []
    status = "max_iter"
    non_monotone = False
    sol = None
    log = open(trace_path, "w") if trace_path is not None else None
    try:
        for it in range(1, max_iter + 1):
            blocks = step1_update(P, samples, config.sigma_n2)
            prob = qcqp.assemble(blocks, mu, config, zero_share_users)
            sol = qcqp.solve(prob, tol=solver_tol, warm=(P, xhat))
            if sol.status == "infeasible":
                status = "infeasible"
                break
            P, xhat = sol.precoders, sol.xhat
            ar = average_rates(samples, P, config.sigma_n2)
            obj = float(np.dot(mu, xhat + qdims - LN2 * ar.private))
            residual = (float(-np.sum(xhat)) - LN2 * ar.common_min
                        if config.Qc > 0 else 0.0)
            trace.append(obj)
            if log is not None:
                log.write(f"{it} {obj:.12e} {residual:.3e}\n")
            if len(trace) >= 2:
                if trace[-1] > trace[-2] + 1e-6:
                    non_monotone = True
                if abs(trace[-1] - trace[-2]) < eps:
                    status = "converged"
                    break
    finally:
        if log is not None:
            log.close()

    if xhat is None:
        xhat = np.zeros(config.K)
        ar = average_rates(samples, P, config.sigma_n2)
    shares = np.maximum(-xhat, 0.0) / LN2
    total_share = shares.sum()
    if total_share > 0 and total_share > ar.common_min:
        # solver tolerance can overshoot the decodable common rate slightly
        shares *= max(ar.common_min, 0.0) / total_share
    ar = ar.with_shares(shares)
    return OptResult(
        precoders=P, rates=ar, shares=shares,
        wasr=ar.weighted_sum(mu), mu=mu, objective_trace=trace,
        status=status, non_monotone=non_monotone, iterations=len(trace),
        xhat=xhat, solver_objective=sol.objective if sol else float("nan"))


def run_rs_two_stage(config: SystemConfig, est: ChannelEstimate,
                     samples: SampleSet, mu,
                     warm_from: OptResult | None = None,
                     **kwargs) -> OptResult:
    """Rate-splitting run from the MRT-SVD start, optionally also from a
    MU-MIMO warm start, keeping the better stationary point.

    The warm-started run can only improve on the MU-MIMO optimum, which makes
    the RS rate region contain the MU-MIMO region by construction.
    """
    best = run_ao(config, est, samples, mu, **kwargs)
    if warm_from is not None:
        P0 = seed_common(warm_from.precoders, config, est)
        alt = run_ao(config, est, samples, mu, P_init=P0, **kwargs)
        if alt.wasr > best.wasr:
            best = alt
    return best
