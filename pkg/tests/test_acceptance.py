"""Acceptance suite: every criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line
per criterion.  The empirical-slope and rate-region criteria run full
experiment protocols and together take on the order of 15 minutes.
"""

import numpy as np
import pytest

import rsmimo as rs
from rsmimo.ao import run_ao, run_rs_two_stage
from rsmimo.baselines import (DofInputs, dof_mu_mimo, dof_noma, dof_rs,
                              mu_mimo_optimize, noma_optimize_2user,
                              noma_sum_rate_upper_bound, su_capacity)
from rsmimo.config import PERFECT
from rsmimo.experiments import ExperimentSpec, fit_dof_slopes, run_experiment
from rsmimo.fec import ModCode, qam_modulate
from rsmimo.lls import (McsAssignments, assign_mcs_adaptive, llr,
                        simulate_link)
from rsmimo.rates import (LN2, PrecoderSet, instantaneous_rates,
                          mmse_equalizers, mmse_matrices, mse_matrix)
from rsmimo.wmmse import (awmse, awmse_quadratic_value, optimal_weights,
                          per_sample_filters, step1_update)

from conftest import crandn, random_precoders


def criterion(name: str, ok: bool, detail: str = ""):
    print(f"{'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def base_cfg(**kw):
    base = dict(M=4, Q=2, K=2, Qc=2, Qk=(2, 2), Pt=100.0, alpha=0.6,
                sigma_k2=(1.0, 1.0), N=100, seed=0)
    base.update(kw)
    return rs.SystemConfig(**base)


def test_dof_closed_forms():
    """DoF table reproduces the theoretical list exactly (zero tolerance)."""
    got = [dof_rs(DofInputs(M=4, Q=2, K=2, Qc=2, alpha=0.6)),
           dof_rs(DofInputs(M=4, Q=2, K=2, Qc=1, alpha=0.6)),
           dof_mu_mimo(DofInputs(M=4, Q=2, K=2, alpha=0.6)),
           dof_noma(DofInputs(M=4, Q=2, K=2, alpha=0.6))]
    criterion("DoF closed forms [3.2, 2.8, 2.4, 2.0]",
              got == [3.2, 2.8, 2.4, 2.0], f"got {got}")


def test_empirical_dof_slopes(tmp_path):
    """Fitted ESR slopes within +-0.35 of [3.08, 2.67, 2.10, 1.93] and the
    strict ordering RS(Qc=2) > RS(Qc=1) > MU-MIMO > NOMA."""
    spec = ExperimentSpec(
        kind="esr-sweep", config=base_cfg(),
        schemes=("rs", "rs1", "mumimo", "noma"),
        snr_db=(20.0, 25.0, 30.0, 35.0), realizations=10, seed=0,
        out=tmp_path / "esr.csv")
    rows = run_experiment(spec)
    slopes = fit_dof_slopes(rows)
    paper = {"rs": 3.08, "rs1": 2.67, "mumimo": 2.10, "noma": 1.93}
    detail = ", ".join(f"{s}={slopes[s]:.2f} (paper {paper[s]})"
                       for s in ("rs", "rs1", "mumimo", "noma"))
    within = all(abs(slopes[s] - paper[s]) <= 0.35 for s in paper)
    ordered = (slopes["rs"] > slopes["rs1"] > slopes["mumimo"]
               > slopes["noma"])
    criterion("empirical DoF slopes within +-0.35 and strictly ordered",
              within and ordered, detail)


def test_rate_region_containment(tmp_path):
    """RS boundary pointwise dominates MU-MIMO over all 43 weight pairs;
    NOMA beats MU-MIMO for most realizations under 10 dB disparity; RS
    beats NOMA on every equal-strength realization (20 dB)."""
    cfg = base_cfg(alpha=PERFECT, N=1)
    spec = ExperimentSpec(kind="rate-region", config=cfg,
                          schemes=("mumimo", "rs"), realizations=10, seed=0,
                          out=tmp_path / "region.csv")
    rows = run_experiment(spec)
    by = {(r["scheme"], r["realization"], r["weight_index"]): r["wasr"]
          for r in rows}
    n_pairs = max(r["weight_index"] for r in rows) + 1
    dominated = all(
        by[("rs", l, w)] >= by[("mumimo", l, w)] - 1e-6
        for l in range(10) for w in range(n_pairs))
    criterion("RS region pointwise dominates MU-MIMO (43 weight pairs)",
              dominated and n_pairs == 43, f"{n_pairs} weight pairs")

    mu = np.ones(2)
    noma_wins = 0
    rs_beats_noma = 0
    for kind, sigma2 in (("disparity", 0.09), ("equal", 1.0)):
        cfg2 = cfg.replace(sigma_k2=(1.0, sigma2))
        for ss in np.random.SeedSequence(1).spawn(10):
            _, est, samples = rs.draw_scene(cfg2, rs.make_rng(ss))
            mur = mu_mimo_optimize(cfg2, est, samples, mu)
            nr = noma_optimize_2user(cfg2, est, samples, mu)
            if kind == "disparity":
                noma_wins += nr.best.wasr > mur.wasr
            else:
                rsr = run_rs_two_stage(cfg2, est, samples, mu, warm_from=mur)
                rs_beats_noma += rsr.wasr >= nr.best.wasr - 1e-6
    criterion("NOMA sum beats MU-MIMO in majority at sigma2^2 = 0.09",
              noma_wins > 5, f"{noma_wins}/10")
    criterion("RS >= NOMA on every equal-strength realization",
              rs_beats_noma == 10, f"{rs_beats_noma}/10")


def test_rate_wmmse_identity_suite():
    """|min-AWMSE - (dim - rate)| <= 1e-9 on 100 random instances (the
    AWMSE is in nats; its rate term is the bit rate scaled by ln 2)."""
    gen = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        M = int(gen.integers(2, 7))
        Q = int(gen.integers(1, 4))
        Qc = int(gen.integers(1, min(M, Q) + 1))
        K = int(gen.integers(1, 4))
        Qk = tuple(int(gen.integers(1, min(M, Q) + 1)) for _ in range(K))
        H = crandn(gen, M, Q) * gen.uniform(0.3, 3.0)
        P = random_precoders(gen, M, Qc, Qk)
        k = int(gen.integers(0, K))
        Gc, Gp = mmse_equalizers(H, P, k)
        Ec, Ep = mmse_matrices(H, P, k)
        rc, rp = instantaneous_rates(H, P, k)
        xc = awmse(optimal_weights(Ec), mse_matrix(H, P, k, Gc, "c"))
        xp = awmse(optimal_weights(Ep), mse_matrix(H, P, k, Gp, "p"))
        worst = max(worst, abs(xc - (Qc - rc * LN2)),
                    abs(xp - (Qk[k] - rp * LN2)))
    criterion("Rate-WMMSE identity (100 instances, 1e-9)", worst <= 1e-9,
              f"worst |error| = {worst:.2e}")


def test_vectorization_equivalence():
    """Trace-form AWMSE means equal the assembled QCQP quadratics at 100
    random points to 1e-9."""
    from rsmimo import qcqp
    cfg = base_cfg(N=8)
    _, est, samples = rs.draw_scene(cfg, rs.make_rng(3))
    gen = np.random.default_rng(11)
    P_prev = random_precoders(gen, 4, 2, (2, 2), Pt=100.0)
    blocks = step1_update(P_prev, samples)
    G, U = per_sample_filters(P_prev, samples)
    mu = np.array([1.2, 0.8])
    prob = qcqp.assemble(blocks, mu, cfg)
    N = samples.n_samples
    worst = 0.0
    for _ in range(100):
        P_rand = random_precoders(gen, 4, 2, (2, 2))
        xh = -np.abs(gen.standard_normal(2))
        z = prob.layout.pack(P_rand, xh)
        obj_direct = 0.0
        for k in range(2):
            tr_p = np.mean([awmse(U[k]["p"][n],
                                  mse_matrix(samples.user(k)[n], P_rand, k,
                                             G[k]["p"][n], "p"))
                            for n in range(N)])
            obj_direct += mu[k] * (xh[k] + tr_p)
            tr_c = np.mean([awmse(U[k]["c"][n],
                                  mse_matrix(samples.user(k)[n], P_rand, k,
                                             G[k]["c"][n], "c"))
                            for n in range(N)])
            want_con = tr_c - cfg.Qc - xh.sum()
            worst = max(worst, abs(prob.constraints[k].value(z) - want_con))
            worst = max(worst, abs(awmse_quadratic_value(blocks, P_rand, k, "c")
                                   - tr_c))
        worst = max(worst, abs(prob.objective(z) - obj_direct))
    criterion("vectorization equivalence (100 points, 1e-9)", worst <= 1e-9,
              f"worst |error| = {worst:.2e}")


def test_ao_monotone_convergence():
    """50 random runs, mixed alpha and SNR: the objective never increases by
    more than 1e-6 and every run converges within 300 iterations."""
    alphas = [0.3, 0.6, 0.9, PERFECT]
    snrs = [5.0, 15.0, 25.0]
    worst_rise = 0.0
    max_iters = 0
    all_converged = True
    gen = np.random.default_rng(0)
    for i, ss in enumerate(np.random.SeedSequence(17).spawn(50)):
        M = int(gen.integers(2, 5))
        Q = int(gen.integers(1, 3))
        K = 2
        Qc = int(gen.integers(0, min(M, Q) + 1))
        qk = min(M, Q)
        budget = min(M, K * Q)
        Qk = (min(qk, budget), budget - min(qk, budget))
        cfg = rs.SystemConfig(M=M, Q=Q, K=K, Qc=Qc, Qk=Qk,
                              Pt=10 ** (snrs[i % 3] / 10),
                              alpha=alphas[i % 4], sigma_k2=(1.0, 1.0),
                              N=8, seed=0)
        _, est, samples = rs.draw_scene(cfg, rs.make_rng(ss))
        mu = gen.uniform(0.5, 2.0, size=2)
        res = run_ao(cfg, est, samples, mu, eps=1e-4, max_iter=300)
        rises = np.diff(res.objective_trace)
        if rises.size:
            worst_rise = max(worst_rise, float(rises.max()))
        max_iters = max(max_iters, res.iterations)
        all_converged &= res.status == "converged"
    criterion("AO monotone and converged within 300 iterations (50 runs)",
              worst_rise <= 1e-6 and all_converged,
              f"worst rise {worst_rise:.2e}, max iterations {max_iters}")


def test_single_user_water_filling_oracle():
    """K=1 with perfect CSIT: AO reaches water-filling capacity to 1e-3."""
    worst = 0.0
    for Pt in (10.0, 100.0):
        cfg = rs.SystemConfig(M=4, Q=2, K=1, Qc=0, Qk=(2,), Pt=Pt,
                              alpha=PERFECT, sigma_k2=(1.0,), N=1, seed=0)
        for ss in np.random.SeedSequence(23).spawn(5):
            _, est, samples = rs.draw_scene(cfg, rs.make_rng(ss))
            res = run_ao(cfg, est, samples, np.ones(1), eps=1e-7,
                         max_iter=5000)
            cap = su_capacity(est.Hhat[0], Pt)
            worst = max(worst, abs(res.wasr - cap))
    criterion("single-user AO within 1e-3 of water-filling (Pt 10, 100)",
              worst <= 1e-3, f"worst gap {worst:.2e}")


def test_noma_upper_bound():
    """Achieved 2-user NOMA average sum rate never exceeds the water-filling
    bound of the first-decoded user's channel (100 instances)."""
    ok = 0
    total = 0
    for imperfect in (False, True):
        cfg = base_cfg(alpha=0.5 if imperfect else PERFECT,
                       N=16 if imperfect else 1)
        for ss in np.random.SeedSequence(29).spawn(50):
            _, est, samples = rs.draw_scene(cfg, rs.make_rng(ss))
            nr = noma_optimize_2user(cfg, est, samples, np.ones(2))
            strong = nr.order[0]
            bound = np.mean([noma_sum_rate_upper_bound(samples.H[n, strong],
                                                       cfg.Pt)
                             for n in range(samples.n_samples)])
            total += 1
            ok += nr.best.wasr <= bound + 1e-6
    criterion("NOMA sum rate below the Appendix bound (100 instances)",
              ok == total, f"{ok}/{total}")


def test_lls_properties(tmp_path):
    """Throughput bounded by the Shannon sum; noiseless decoding is total;
    LLR hard decisions are reliable; RS beats MU-MIMO in at least 80% of
    paired 20 dB realizations."""
    # noiseless endpoint: orthogonal streams, lowest MCS
    from fractions import Fraction
    cfg0 = rs.SystemConfig(M=2, Q=2, K=1, Qc=1, Qk=(2,), Pt=8.0,
                           alpha=PERFECT, sigma_k2=(1.0,), sigma_n2=1e-12,
                           N=1, seed=0)
    H0 = np.eye(2, dtype=complex)[None]
    Pk = np.zeros((2, 2), dtype=complex)
    Pk[1, 0] = 2.0
    P0 = PrecoderSet(Pc=np.array([[2.0], [0.0]], dtype=complex), Pk=(Pk,))
    mc = ModCode(4, Fraction(1, 2))
    mcs0 = McsAssignments(common=(mc,), private=((mc, None),),
                          common_fractions=(1.0,))
    rep0 = simulate_link(cfg0, P0, H0, mcs0, S=512,
                         rng=np.random.default_rng(0))
    noiseless_ok = all(o.decoded for o in rep0.outcomes)
    criterion("noiseless run decodes 100% of frames", noiseless_ok,
              f"{sum(o.decoded for o in rep0.outcomes)}/{len(rep0.outcomes)}")

    # LLR sign accuracy at 20 dB scalar AWGN, 4-QAM, 1e5 symbols
    gen = np.random.default_rng(1)
    bits = gen.integers(0, 2, 200_000).astype(np.uint8)
    s = qam_modulate(bits, 4)
    gamma = 100.0
    noise = (gen.normal(0, 1, s.size) + 1j * gen.normal(0, 1, s.size))
    z = gamma / (1 + gamma) * (s + noise / np.sqrt(2 * gamma))
    lam = llr(z, gamma, 4).reshape(-1)
    acc = np.mean((lam < 0).astype(np.uint8) == bits)
    criterion("LLR hard decisions >= 99.9% at 20 dB (4-QAM, 1e5 symbols)",
              acc >= 0.999, f"accuracy {acc:.5f}")

    # paired RS vs MU-MIMO throughput at 20 dB, plus the Shannon bound
    spec = ExperimentSpec(kind="lls-sweep", config=base_cfg(N=50),
                          schemes=("rs", "mumimo"), snr_db=(20.0,),
                          realizations=12, seed=0, out=tmp_path / "lls.csv",
                          lls_frames=6)
    rows = run_experiment(spec)
    bounded = all(r["throughput"] <= r["shannon_bound"] + 0.1 for r in rows)
    criterion("throughput below the Shannon bound on every row", bounded)
    thr = {(r["scheme"], r["realization"]): r["throughput"] for r in rows}
    wins = sum(thr[("rs", l)] >= thr[("mumimo", l)] for l in range(12))
    criterion("RS >= MU-MIMO throughput in >= 80% of paired realizations",
              wins >= 0.8 * 12, f"{wins}/12")
