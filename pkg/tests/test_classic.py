import numpy as np
import pytest

from recursic.channel import noise_variance, rng_for, sample_rayleigh
from recursic.classic import (SearchSpaceError, detect_ml_exhaustive,
                              detect_mmse, detect_sic, enumerate_candidates,
                              llr_maxlog_exhaustive, mmse_filter_stats)
from recursic.modem import make_qam
from recursic.numerics import project_receive, residual_metric, sorted_qr_extended


def random_instance(rng, c, snr_db=15.0, n=2, l=2):
    h = sample_rayleigh(n, l, rng)
    sigma2 = noise_variance(snr_db, l)
    idx = rng.integers(0, c.order, l)
    y = h @ c.points[idx] + np.sqrt(sigma2 / 2) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n))
    fact = sorted_qr_extended(h, np.sqrt(sigma2))
    y_tilde = project_receive(fact.q, y)
    return y_tilde, fact.r, idx, fact.perm


def slow_ml(y_tilde, r, c):
    """Independent enumeration in the opposite order (last layer fastest)."""
    l = r.shape[1]
    best = None
    best_metric = np.inf
    best_kappa = None
    for flat in range(c.order ** l):
        digits = []
        rem = flat
        for _ in range(l):
            digits.append(rem % c.order)
            rem //= c.order
        idx = np.array(digits[::-1])  # last layer fastest in flat
        metric = residual_metric(y_tilde, r, c.points[idx])
        kappa = sum(v * c.order ** j for j, v in enumerate(idx))
        if metric < best_metric or (metric == best_metric and kappa < best_kappa):
            best, best_metric, best_kappa = idx, metric, kappa
    return best


def slow_llrs(y_tilde, r, c):
    """Bitwise set enumeration, independent of the vectorized path."""
    l = r.shape[1]
    nb = c.bits_per_symbol
    out = np.empty((l, nb))
    for layer in range(l):
        for b in range(nb):
            mins = {0: np.inf, 1: np.inf}
            for flat in range(c.order ** l):
                digits = []
                rem = flat
                for _ in range(l):
                    digits.append(rem % c.order)
                    rem //= c.order
                idx = np.array(digits)
                bit = int(c.labels[idx[layer], b])
                metric = residual_metric(y_tilde, r, c.points[idx])
                mins[bit] = min(mins[bit], metric)
            out[layer, b] = mins[1] - mins[0]
    return out


class TestMlExhaustive:
    def test_noise_free_recovery(self):
        rng = rng_for(20)
        c = make_qam(16)
        for _ in range(20):
            h = sample_rayleigh(2, 2, rng)
            idx = rng.integers(0, 16, 2)
            fact = sorted_qr_extended(h, 0.0)
            y_tilde = project_receive(fact.q, h @ c.points[idx])
            res = detect_ml_exhaustive(y_tilde, fact.r, c)
            assert np.array_equal(res.hard_indices, idx[fact.perm])

    def test_single_layer_qpsk(self):
        c = make_qam(4)
        res = detect_ml_exhaustive(np.array([0.9 + 0.8j]), np.eye(1), c)
        assert res.hard_symbols[0] == pytest.approx((1 + 1j) / np.sqrt(2))

    def test_matches_independent_enumeration(self):
        rng = rng_for(21)
        c = make_qam(16)
        for _ in range(10):
            y_tilde, r, _, _ = random_instance(rng, c)
            res = detect_ml_exhaustive(y_tilde, r, c)
            assert np.array_equal(res.hard_indices, slow_ml(y_tilde, r, c))

    def test_guard(self):
        c = make_qam(64)
        with pytest.raises(SearchSpaceError):
            detect_ml_exhaustive(np.zeros(5), np.eye(5), c)

    def test_permutation_invariance(self):
        rng = rng_for(22)
        c = make_qam(4)
        y_tilde, r, _, _ = random_instance(rng, c)
        res = detect_ml_exhaustive(y_tilde, r, c)
        perm = np.array([1, 0])
        res_p = detect_ml_exhaustive(y_tilde, r[:, perm], c)
        assert np.array_equal(res_p.hard_indices[np.argsort(perm)],
                              res.hard_indices)


class TestLlrExhaustive:
    def test_sign_matches_noiseless_candidate(self):
        rng = rng_for(23)
        c = make_qam(4)
        h = sample_rayleigh(2, 2, rng)
        idx = rng.integers(0, 4, 2)
        fact = sorted_qr_extended(h, 0.0)
        y_tilde = project_receive(fact.q, h @ c.points[idx])
        llrs = llr_maxlog_exhaustive(y_tilde, fact.r, c)
        bits = c.labels[idx[fact.perm]]
        # positive LLR <=> bit 0 at every well-separated position
        assert np.all((llrs > 0) == (bits == 0))

    def test_equidistant_zero(self):
        c = make_qam(4)
        llrs = llr_maxlog_exhaustive(np.array([0j]), np.eye(1), c)
        assert np.allclose(llrs, 0.0)

    def test_matches_bitwise_enumeration(self):
        rng = rng_for(24)
        c = make_qam(4)
        for _ in range(10):
            y_tilde, r, _, _ = random_instance(rng, c)
            fast = llr_maxlog_exhaustive(y_tilde, r, c)
            assert np.allclose(fast, slow_llrs(y_tilde, r, c), atol=1e-12)

    def test_sign_agrees_with_ml_bits(self):
        rng = rng_for(25)
        c = make_qam(16)
        for _ in range(20):
            y_tilde, r, _, _ = random_instance(rng, c)
            res = detect_ml_exhaustive(y_tilde, r, c)
            llrs = llr_maxlog_exhaustive(y_tilde, r, c)
            hard = res.hard_bits
            assert np.all((llrs >= 0) == (hard == 0))


class TestMmse:
    def test_identity_low_noise_limit(self):
        c = make_qam(16)
        y = np.array([0.3 - 0.1j, -0.95 + 0.95j])
        res = detect_mmse(y, np.eye(2), 0.0, c)
        from recursic.modem import nearest_point
        for layer in range(2):
            idx, _ = nearest_point(c, complex(y[layer]))
            assert res.hard_indices[layer] == idx

    def test_identity_unit_noise_stats(self):
        w, mu, gamma = mmse_filter_stats(np.eye(2), 1.0)
        assert np.allclose(w, 0.5 * np.eye(2))
        assert np.allclose(gamma, 1.0)
        assert np.allclose(mu, 0.5)

    def test_llr_sign_consistency(self):
        rng = rng_for(26)
        c = make_qam(4)
        for _ in range(20):
            h = sample_rayleigh(2, 2, rng)
            sigma2 = noise_variance(20.0, 2)
            idx = rng.integers(0, 4, 2)
            y = h @ c.points[idx] + np.sqrt(sigma2 / 2) * (
                rng.standard_normal(2) + 1j * rng.standard_normal(2))
            res = detect_mmse(y, h, sigma2, c)
            assert np.all((res.llrs >= 0) == (res.hard_bits == 0))


class TestSic:
    def test_noiseless_diagonal(self):
        c = make_qam(16)
        idx = np.array([5, 11])
        h = np.diag([1.0, 2.0]).astype(complex)
        y = h @ c.points[idx]
        for mode in ("zf", "mmse"):
            res = detect_sic(y, h, 0.0, c, mode=mode)
            assert np.array_equal(res.hard_indices, idx)

    def test_detection_order_by_post_snr(self):
        c = make_qam(4)
        h = np.diag([1.0, 3.0]).astype(complex)
        sigma2 = 0.1
        _, _, gamma = mmse_filter_stats(h, sigma2)
        assert gamma[1] > gamma[0]  # layer 2 detected first

    def test_single_layer_equals_mmse(self):
        rng = rng_for(27)
        c = make_qam(16)
        for _ in range(10):
            h = sample_rayleigh(3, 1, rng)
            sigma2 = 0.05
            y = h @ c.points[[3]] + 0.1 * (rng.standard_normal(3)
                                           + 1j * rng.standard_normal(3))
            a = detect_sic(y, h, sigma2, c, mode="mmse")
            b = detect_mmse(y, h, sigma2, c)
            assert np.array_equal(a.hard_indices, b.hard_indices)
            assert np.allclose(a.llrs, b.llrs, rtol=1e-12)

    def test_zf_needs_enough_antennas(self):
        c = make_qam(4)
        with pytest.raises(ValueError):
            detect_sic(np.zeros(1), np.ones((1, 2)), 0.1, c, mode="zf")

    def test_bad_mode(self):
        c = make_qam(4)
        with pytest.raises(ValueError):
            detect_sic(np.zeros(2), np.eye(2), 0.1, c, mode="lattice")


def test_enumeration_order_layer0_fastest():
    c = make_qam(4)
    cands = enumerate_candidates(c, 2)
    assert cands.shape == (16, 2)
    assert np.array_equal(cands[:4, 0], [0, 1, 2, 3])
    assert np.array_equal(cands[:4, 1], [0, 0, 0, 0])
