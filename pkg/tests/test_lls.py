from fractions import Fraction

import numpy as np
import pytest

import rsmimo as rs
from rsmimo.fec import (AMC_TABLE, CODE_RATES, ConvolutionalCode, ModCode,
                        amc_select, crc_append, crc_check, crc16,
                        qam_constellation, qam_demodulate_hard, qam_modulate)
from rsmimo.lls import (McsAssignments, assign_mcs, assign_mcs_adaptive,
                        effective_channel, llr, nulling_filter,
                        per_stream_rates, post_sinr, select_next_stream,
                        simulate_link, write_records)
from rsmimo.rates import PrecoderSet, instantaneous_rates

from conftest import crandn


class TestQam:
    def test_documented_4qam_anchor(self):
        points, _ = qam_constellation(4)
        assert points[0] == pytest.approx((1 + 1j) / np.sqrt(2))

    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_unit_energy(self, order):
        points, _ = qam_constellation(order)
        assert np.mean(np.abs(points) ** 2) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_noiseless_roundtrip(self, order, rng):
        m = int(np.log2(order))
        bits = rng.integers(0, 2, 120 * m).astype(np.uint8)
        assert np.array_equal(qam_demodulate_hard(qam_modulate(bits, order),
                                                  order), bits)

    def test_gray_neighbours_differ_one_bit(self):
        points, table = qam_constellation(16)
        d = np.abs(points[:, None] - points[None, :])
        dmin = np.min(d[d > 1e-9])
        for i in range(16):
            for j in range(16):
                if abs(d[i, j] - dmin) < 1e-9:
                    assert np.sum(table[i] != table[j]) == 1

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            qam_constellation(8)


class TestCrc:
    def test_detects_bit_flips(self, rng):
        bits = rng.integers(0, 2, 400).astype(np.uint8)
        framed = crc_append(bits)
        assert crc_check(framed)
        for pos in (0, 100, 399, 405):
            bad = framed.copy()
            bad[pos] ^= 1
            assert not crc_check(bad)

    def test_crc_length(self):
        assert crc16(np.zeros(8, dtype=np.uint8)).size == 16


class TestConvCode:
    @pytest.mark.parametrize("rate", CODE_RATES)
    def test_noiseless_roundtrip(self, rate, rng):
        code = ConvolutionalCode(rate)
        info = rng.integers(0, 2, 501).astype(np.uint8)
        coded = code.encode(info)
        assert coded.size == code.coded_length(info.size)
        llrs = 1.0 - 2.0 * coded.astype(float)
        assert np.array_equal(code.decode(llrs), info)

    def test_corrects_noise(self, rng):
        code = ConvolutionalCode(Fraction(1, 2))
        info = rng.integers(0, 2, 800).astype(np.uint8)
        coded = code.encode(info)
        noisy = (1.0 - 2.0 * coded) * 2.0 + rng.normal(0, 1, coded.size)
        assert np.array_equal(code.decode(noisy), info)

    def test_max_info_bits_consistent(self):
        for rate in CODE_RATES:
            code = ConvolutionalCode(rate)
            for cap in (512, 1000, 4096):
                n = code.max_info_bits(cap)
                assert code.coded_length(n) <= cap < code.coded_length(n + 1)


class TestAmc:
    def test_table_sorted_and_bounded(self):
        effs = [mc.efficiency for mc in AMC_TABLE]
        assert effs == sorted(effs)
        assert effs[0] == pytest.approx(0.25)
        assert effs[-1] == pytest.approx(20.0 / 3.0)

    def test_zero_rate_skips(self):
        assert amc_select(0.0) is None

    def test_saturation_at_high_rate(self):
        mc = amc_select(8.0)
        assert (mc.qam_order, mc.code_rate) == (256, Fraction(5, 6))

    def test_below_floor_skips(self):
        assert amc_select(0.2) is None

    def test_monotone_selection(self):
        last = -1.0
        for rate in np.linspace(0.05, 12.0, 120):
            mc = amc_select(rate)
            eff = mc.efficiency if mc else 0.0
            assert eff >= last - 1e-12
            last = eff

    def test_backoff_bounds_selection(self):
        for rate in (1.5, 3.0, 7.0):
            mc = amc_select(rate, backoff=0.8)
            assert mc.efficiency <= 0.8 * rate


class TestReceiverPieces:
    def test_effective_channel_zero_column(self, rng):
        H = crandn(rng, 4, 2)
        Pc = np.zeros((4, 2), dtype=complex)
        assert np.allclose(effective_channel(H, Pc, 0), 0)

    def test_effective_channel_identity(self, rng):
        Pc = crandn(rng, 3, 2)
        H = np.eye(3, dtype=complex)
        assert np.allclose(effective_channel(H, Pc, 1), Pc[:, 1])

    def test_effective_channel_matches_product(self, rng):
        H = crandn(rng, 4, 3)
        Pc = crandn(rng, 4, 2)
        want = H.conj().T @ Pc[:, 0]
        assert np.allclose(effective_channel(H, Pc, 0), want, atol=1e-12)

    def test_scalar_mmse_filter(self):
        h = np.array([2.0 + 0j])
        cov = np.array([[1.0 + abs(h[0]) ** 2]], dtype=complex)
        g, mse = nulling_filter(h, cov)
        assert g[0] == pytest.approx(2.0 / 5.0)
        assert mse == pytest.approx(1.0 / 5.0)
        assert post_sinr(mse) == pytest.approx(4.0)

    def test_zero_channel_zero_filter(self):
        g, mse = nulling_filter(np.zeros(2, dtype=complex),
                                np.eye(2, dtype=complex))
        assert np.allclose(g, 0) and mse == 1.0

    def test_mmse_beats_matched_filter(self, rng):
        for _ in range(10):
            h = crandn(rng, 3)
            J = crandn(rng, 3, 2)
            cov = np.eye(3) + np.outer(h, h.conj()) + J @ J.conj().T
            g, mse = nulling_filter(h, cov)
            gm = h.conj() / np.real(np.vdot(h, h))
            mse_m = np.real(gm @ cov @ gm.conj() - gm @ h
                            - (gm @ h).conjugate() + 1.0)
            assert mse <= mse_m + 1e-12

    def test_post_sinr_endpoints(self):
        assert post_sinr(0.5) == pytest.approx(1.0)
        assert post_sinr(1.0) == pytest.approx(0.0)
        with pytest.raises(ValueError):
            post_sinr(1.5)

    def test_select_next_stream(self):
        assert select_next_stream([0, 1, 2], [3.0, 1.0, 2.0]) == 0
        assert select_next_stream([0, 1, 2], [2.0, 2.0, 2.0]) == 0
        assert select_next_stream([1, 2], [1.0, 2.0]) == 2


class TestLlr:
    def test_point_on_theta0_positive(self):
        points, table = qam_constellation(4)
        z = np.array([points[0]])   # label 00
        lam = llr(z * (5.0 / 6.0), 5.0, 4)   # rho = gamma/(1+gamma)
        assert np.all(lam > 0)

    def test_midpoint_gives_zero(self):
        # halfway between the two 4-QAM points differing in the first bit
        points, table = qam_constellation(4)
        mid = 0.5 * (points[0] + points[2])
        lam = llr(np.array([mid]) * 0.5, 1.0, 4)
        assert lam[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_zero_gamma_uninformative(self):
        lam = llr(np.array([0.3 + 0.2j]), 0.0, 16)
        assert np.all(lam == 0)

    def test_hard_decisions_accuracy_20db(self, rng):
        # scalar AWGN at 20 dB, 4-QAM, 1e5 symbols: >= 99.9% correct signs
        n = 100_000
        bits = rng.integers(0, 2, 2 * n).astype(np.uint8)
        s = qam_modulate(bits, 4)
        gamma = 100.0
        noise = (rng.normal(0, 1, n) + 1j * rng.normal(0, 1, n)) / np.sqrt(2 * gamma)
        rho = gamma / (1 + gamma)
        z = rho * (s + noise)
        lam = llr(z, gamma, 4).reshape(-1)
        hard = (lam < 0).astype(np.uint8)
        assert np.mean(hard == bits) >= 0.999


def _orthogonal_scene(Pt=64.0, sigma_n2=1.0):
    """M=Q=2, identity channel, orthogonal precoder columns: the common and
    the first private stream do not interfere; the second private column
    carries no power and is skipped by the MCS."""
    c = rs.SystemConfig(M=2, Q=2, K=1, Qc=1, Qk=(2,), Pt=Pt, alpha="perfect",
                        sigma_k2=(1.0,), sigma_n2=sigma_n2, N=1, seed=0)
    H = np.eye(2, dtype=complex)[None]
    Pk = np.zeros((2, 2), dtype=complex)
    Pk[1, 0] = np.sqrt(Pt / 2)
    P = PrecoderSet(Pc=np.array([[1.0], [0.0]], dtype=complex) * np.sqrt(Pt / 2),
                    Pk=(Pk,))
    return c, H, P


class TestSimulateLink:
    def test_noiseless_all_frames_decode(self):
        c, H, P = _orthogonal_scene(Pt=8.0, sigma_n2=1e-12)
        mc = ModCode(4, Fraction(1, 2))
        mcs = McsAssignments(common=(mc,), private=((mc, None),),
                             common_fractions=(1.0,))
        rep = simulate_link(c, P, H, mcs, S=512,
                            rng=np.random.default_rng(0))
        assert all(o.decoded for o in rep.outcomes)
        assert len(rep.outcomes) == 2
        want = 2 * mc.frame_efficiency(512)
        assert rep.throughput == pytest.approx(want, abs=1e-12)

    def test_zero_power_zero_throughput(self):
        c, H, _ = _orthogonal_scene()
        P = PrecoderSet(Pc=np.zeros((2, 1), dtype=complex),
                        Pk=(np.zeros((2, 2), dtype=complex),))
        mcs = assign_mcs(np.zeros(1), [np.zeros(2)], np.ones(1))
        rep = simulate_link(c, P, H, mcs, S=256, rng=np.random.default_rng(0))
        assert rep.throughput == 0.0

    def test_cancellation_residual_tiny(self):
        # a decoded stream is re-encoded and subtracted exactly
        c, H, P = _orthogonal_scene(Pt=200.0, sigma_n2=1e-12)
        mc = ModCode(4, Fraction(1, 2))
        mcs = McsAssignments(common=(mc,), private=((mc, None),),
                             common_fractions=(1.0,))
        rep = simulate_link(c, P, H, mcs, S=256, rng=np.random.default_rng(1))
        assert all(o.decoded for o in rep.outcomes)

    def test_sinr_ordering_non_increasing_without_interference(self, rng):
        # interference-free: realized decode SINRs come out best-first
        c = rs.SystemConfig(M=4, Q=4, K=1, Qc=4, Qk=(4,), Pt=100.0,
                            alpha="perfect", sigma_k2=(1.0,), N=1, seed=0)
        H = np.eye(4, dtype=complex)[None]
        scale = np.sqrt(np.array([40.0, 30.0, 20.0, 10.0]) / 4)
        Pc = np.eye(4, dtype=complex) * scale
        P = PrecoderSet(Pc=Pc, Pk=(np.zeros((4, 0), dtype=complex),))
        mc = ModCode(4, Fraction(1, 2))
        mcs = McsAssignments(common=(mc,) * 4, private=((),),
                             common_fractions=(1.0,))
        rep = simulate_link(c, P, H, mcs, S=256, rng=np.random.default_rng(2))
        sinrs = [o.sinr for o in rep.outcomes if o.kind == "c"]
        assert np.all(np.diff(sinrs) <= 1e-9)

    def test_common_bits_split_by_shares(self):
        c, H, P = _orthogonal_scene(Pt=64.0, sigma_n2=1e-12)
        c2 = c.replace(K=2, Qk=(1, 1), sigma_k2=(1.0, 1.0))
        H2 = np.concatenate([H, H])
        P2 = PrecoderSet(Pc=P.Pc, Pk=(P.Pk[0][:, :1],
                                      np.zeros((2, 1), complex)))
        mc = ModCode(4, Fraction(1, 2))
        mcs = McsAssignments(common=(mc,), private=((mc,), (None,)),
                             common_fractions=(0.25, 0.75))
        rep = simulate_link(c2, P2, H2, mcs, S=512,
                            rng=np.random.default_rng(3))
        n_info = mc.info_bits(512)
        # both users decode the common stream; each credits its fraction
        assert rep.decoded_bits[1] == pytest.approx(0.75 * n_info)
        assert rep.decoded_bits[0] == pytest.approx(0.25 * n_info + n_info)

    def test_throughput_below_shannon_sum(self):
        c = rs.SystemConfig(M=4, Q=2, K=2, Qc=2, Qk=(2, 2), Pt=100.0,
                            alpha=0.6, sigma_k2=(1.0, 1.0), N=8, seed=0)
        for ss in np.random.SeedSequence(4).spawn(3):
            H, est, samples = rs.draw_scene(c, rs.make_rng(ss))
            res = rs.run_ao(c, est, samples, np.ones(2))
            mcs, P_tx = assign_mcs_adaptive(c, res.precoders, H, res.shares,
                                            backoff=0.6)
            rep = simulate_link(c, P_tx, H, mcs, rng=np.random.default_rng(5))
            rc, rp = [], []
            for k in range(2):
                vc, vp = instantaneous_rates(H[k], P_tx, k)
                rc.append(float(vc))
                rp.append(float(vp))
            bound = min(rc) + sum(rp)
            assert rep.throughput <= bound + 0.1


class TestPerStreamRates:
    def test_chain_sums_to_logdet_rate(self, rng):
        # MMSE-SIC is information lossless: per-stream rates of one user's
        # private chain add up to the joint log-det rate
        c = rs.SystemConfig(M=4, Q=2, K=2, Qc=0, Qk=(2, 2), Pt=50.0,
                            alpha="perfect", sigma_k2=(1.0, 1.0), N=1, seed=0)
        H = rs.draw_channel(c, rs.make_rng(6))
        gen = np.random.default_rng(7)
        P = PrecoderSet(Pc=np.zeros((4, 0), complex),
                        Pk=(crandn(gen, 4, 2) * 2, crandn(gen, 4, 2) * 2))
        _, private = per_stream_rates(c, P, H)
        for k in range(2):
            _, rp = instantaneous_rates(H[k], P, k)
            assert sum(private[k]) == pytest.approx(float(rp), abs=1e-8)

    def test_common_rate_is_min_over_users(self):
        c = rs.SystemConfig(M=4, Q=2, K=2, Qc=2, Qk=(2, 2), Pt=100.0,
                            alpha="perfect", sigma_k2=(1.0, 0.09), N=1, seed=0)
        H, est, samples = rs.draw_scene(c, rs.make_rng(8))
        P = rs.initialize_precoders(c, est)
        common, _ = per_stream_rates(c, P, H)
        assert np.all(common >= 0)
        rc0, _ = instantaneous_rates(H[0], P, 0)
        rc1, _ = instantaneous_rates(H[1], P, 1)
        assert common.sum() <= min(float(rc0), float(rc1)) + 1e-8


def test_write_records(tmp_path):
    rows = [{"snr_db": 20.0, "scheme": "rs", "realization": 0,
             "decoded_bits": 1000.0, "channel_uses": 1024,
             "throughput": 0.9765625}]
    out = tmp_path / "lls.csv"
    write_records(out, rows)
    text = out.read_text().splitlines()
    assert text[0] == "snr_db,scheme,realization,decoded_bits,channel_uses,throughput"
    assert "0.9765625" in text[1]
