import numpy as np
import pytest

from recursic.harness import shipped_alist_path
from recursic.ldpc import (AlistError, Encoder, EncodingError, MinSumDecoder,
                           decode_min_sum, from_dense, load_alist,
                           make_regular_ldpc, parse_alist, serialize_alist)

TOY_H = np.array([[1, 1, 0], [0, 1, 1]], dtype=np.uint8)


def reference_min_sum(h, llrs, max_iters, norm_factor):
    """Loop-based normalized min-sum, kept independent of the package path."""
    m, n = h.shape
    lam = np.asarray(llrs, dtype=float)
    bits = (lam < 0).astype(np.uint8)
    if not np.any((h @ bits) % 2):
        return bits, True, 0, None
    v2c = {(c, v): lam[v] for c in range(m) for v in range(n) if h[c, v]}
    c2v = {}
    for iteration in range(1, max_iters + 1):
        for c in range(m):
            vs = [v for v in range(n) if h[c, v]]
            for v in vs:
                others = [v2c[(c, u)] for u in vs if u != v]
                sign = 1.0
                for o in others:
                    sign *= -1.0 if o < 0 else 1.0
                mag = min(abs(o) for o in others) if others else np.inf
                c2v[(c, v)] = norm_factor * sign * mag
        total = lam.copy()
        for (c, v), msg in c2v.items():
            total[v] += msg
        bits = (total < 0).astype(np.uint8)
        if not np.any((h @ bits) % 2):
            return bits, True, iteration, c2v
        for c in range(m):
            vs = [v for v in range(n) if h[c, v]]
            for v in vs:
                v2c[(c, v)] = total[v] - c2v[(c, v)]
    return bits, False, max_iters, c2v


class TestParseAlist:
    def test_toy_roundtrip(self):
        hm = from_dense(TOY_H)
        text = serialize_alist(hm)
        assert parse_alist(text) == hm
        assert np.array_equal(hm.dense(), TOY_H)

    def test_shipped_fixture_degrees(self):
        hm = load_alist(shipped_alist_path())
        assert hm.n == 96
        assert hm.m == 48
        assert all(len(nb) == 3 for nb in hm.var_neighbors)
        assert all(len(nb) == 6 for nb in hm.check_neighbors)

    def test_truncated_file(self):
        hm = from_dense(TOY_H)
        text = serialize_alist(hm)
        lines = text.strip().splitlines()
        with pytest.raises(AlistError):
            parse_alist("\n".join(lines[:-1]))

    def test_malformed_header(self):
        with pytest.raises(AlistError):
            parse_alist("3\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n2 3\n")

    def test_index_out_of_range(self):
        hm = from_dense(TOY_H)
        text = serialize_alist(hm).replace("\n1\n", "\n9\n", 1)
        with pytest.raises(AlistError):
            parse_alist(text)

    def test_degree_mismatch(self):
        text = ("3 2\n2 2\n1 2 1\n2 2\n"
                "1\n1 2\n2\n"  # variable adjacency
                "1 2\n2 3\n")
        # variable 2 claims degree 2 but the body and checks disagree
        with pytest.raises(AlistError):
            parse_alist(text.replace("1 2 1", "1 1 1"))

    def test_sections_must_agree(self):
        hm = from_dense(TOY_H)
        lines = serialize_alist(hm).strip().splitlines()
        # swap the check-section neighbors of the two checks
        lines[-2], lines[-1] = lines[-1], lines[-2]
        with pytest.raises(AlistError):
            parse_alist("\n".join(lines))

    def test_zero_padding_accepted(self):
        text = ("3 2\n2 2\n1 2 1\n2 2\n"
                "1 0\n1 2\n2 0\n"
                "1 2\n2 3\n")
        hm = parse_alist(text)
        assert np.array_equal(hm.dense(), TOY_H)


class TestEncoder:
    def test_zero_info_zero_codeword(self):
        enc = Encoder(from_dense(TOY_H))
        assert np.array_equal(enc.encode(np.zeros(enc.k, dtype=np.uint8)),
                              np.zeros(3, dtype=np.uint8))

    def test_zero_syndrome_random(self):
        hm = load_alist(shipped_alist_path())
        enc = Encoder(hm)
        h = hm.dense()
        rng = np.random.default_rng(90)
        for _ in range(25):
            cw = enc.encode(rng.integers(0, 2, enc.k, dtype=np.uint8))
            assert not np.any((h @ cw) % 2)

    def test_matches_exhaustive_codebook(self):
        hm = from_dense(np.array([
            [1, 1, 0, 1, 0, 0],
            [0, 1, 1, 0, 1, 0],
            [1, 0, 1, 0, 0, 1],
        ], dtype=np.uint8))
        enc = Encoder(hm)
        h = hm.dense()
        # enumerate the full codebook by brute force over all 2^6 words
        codebook = set()
        for word in range(64):
            w = np.array([(word >> k) & 1 for k in range(6)], dtype=np.uint8)
            if not np.any((h @ w) % 2):
                codebook.add(tuple(w))
        encoded = set()
        for word in range(2 ** enc.k):
            info = np.array([(word >> k) & 1 for k in range(enc.k)],
                            dtype=np.uint8)
            encoded.add(tuple(enc.encode(info)))
        assert encoded == codebook

    def test_rank_deficient_rejected(self):
        # third row is the sum of the first two: rank 2 of 3
        h = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], dtype=np.uint8)
        with pytest.raises(EncodingError):
            Encoder(from_dense(h))

    def test_info_recoverable_at_positions(self):
        hm = load_alist(shipped_alist_path())
        enc = Encoder(hm)
        rng = np.random.default_rng(91)
        info = rng.integers(0, 2, enc.k, dtype=np.uint8)
        assert np.array_equal(enc.encode(info)[enc.info_positions], info)


class TestMinSumDecoder:
    def test_strong_positive_converges_immediately(self):
        hm = from_dense(TOY_H)
        bits, converged, iters = decode_min_sum(hm, np.full(3, 8.0))
        assert converged
        assert iters <= 1
        assert np.array_equal(bits, np.zeros(3, dtype=np.uint8))

    def test_zero_syndrome_fixed_point(self):
        hm = load_alist(shipped_alist_path())
        enc = Encoder(hm)
        rng = np.random.default_rng(92)
        cw = enc.encode(rng.integers(0, 2, enc.k, dtype=np.uint8))
        llrs = (1.0 - 2.0 * cw) * rng.uniform(0.5, 3.0, hm.n)
        bits, converged, iters = decode_min_sum(hm, llrs)
        assert converged
        assert iters == 0
        assert np.array_equal(bits, cw)

    def test_single_check_hand_example(self):
        h = np.array([[1, 1]], dtype=np.uint8)
        lam = np.array([2.0, -3.0])
        _, _, _, c2v = reference_min_sum(h, lam, 1, 0.75)
        assert c2v[(0, 0)] == pytest.approx(-2.25)
        assert c2v[(0, 1)] == pytest.approx(1.5)
        bits, converged, iters = decode_min_sum(from_dense(h), lam, max_iters=1)
        ref_bits, ref_conv, ref_iters, _ = reference_min_sum(h, lam, 1, 0.75)
        assert np.array_equal(bits, ref_bits)
        assert (converged, iters) == (ref_conv, ref_iters)

    def test_matches_reference_implementation(self):
        hm = load_alist(shipped_alist_path())
        h = hm.dense()
        dec = MinSumDecoder(hm)
        rng = np.random.default_rng(93)
        for _ in range(20):
            llrs = rng.normal(0.5, 2.0, hm.n)
            bits, conv, iters = dec.decode(llrs, max_iters=8)
            ref_bits, ref_conv, ref_iters, _ = reference_min_sum(h, llrs, 8, 0.75)
            assert np.array_equal(bits, ref_bits)
            assert (conv, iters) == (ref_conv, ref_iters)

    def test_agrees_with_ml_codebook_low_noise(self):
        hm = from_dense(np.array([
            [1, 1, 0, 1, 0, 0, 0, 1],
            [0, 1, 1, 0, 1, 0, 1, 0],
            [1, 0, 1, 0, 0, 1, 0, 1],
            [0, 1, 0, 1, 1, 0, 1, 1],
        ], dtype=np.uint8))
        enc = Encoder(hm)
        codebook = np.stack([
            enc.encode(np.array([(i >> k) & 1 for k in range(enc.k)],
                                dtype=np.uint8))
            for i in range(2 ** enc.k)
        ])
        dec = MinSumDecoder(hm)
        rng = np.random.default_rng(94)
        agree = 0
        total = 1000
        sigma = 0.45
        for _ in range(total):
            cw = codebook[rng.integers(0, codebook.shape[0])]
            x = 1.0 - 2.0 * cw.astype(float)
            y = x + sigma * rng.standard_normal(hm.n)
            llrs = 2.0 * y / sigma ** 2
            bits, _, _ = dec.decode(llrs, max_iters=25)
            # ML codeword decoding: minimize the sum of LLRs at one-bits
            ml_cw = codebook[int(np.argmin((codebook * llrs).sum(axis=1)))]
            agree += int(np.array_equal(bits, ml_cw))
        assert agree >= 990

    def test_permutation_equivariance(self):
        hm = load_alist(shipped_alist_path())
        rng = np.random.default_rng(95)
        perm = rng.permutation(hm.n)
        h = hm.dense()
        hm_p = from_dense(h[:, perm])
        llrs = rng.normal(0.3, 1.5, hm.n)
        bits, conv, iters = decode_min_sum(hm, llrs, max_iters=6)
        bits_p, conv_p, iters_p = decode_min_sum(hm_p, llrs[perm], max_iters=6)
        assert np.array_equal(bits_p, bits[perm])
        assert (conv, iters) == (conv_p, iters_p)

    def test_norm_one_bounds_scaled_magnitudes(self):
        h = load_alist(shipped_alist_path()).dense()
        rng = np.random.default_rng(96)
        llrs = rng.normal(0.0, 2.0, h.shape[1])
        _, _, _, c2v_full = reference_min_sum(h, llrs, 1, 1.0)
        _, _, _, c2v_scaled = reference_min_sum(h, llrs, 1, 0.75)
        if c2v_full is None or c2v_scaled is None:
            pytest.skip("instance converged before the first iteration")
        for key in c2v_full:
            assert abs(c2v_full[key]) >= abs(c2v_scaled[key]) - 1e-12

    def test_input_validation(self):
        hm = from_dense(TOY_H)
        with pytest.raises(ValueError):
            decode_min_sum(hm, [1.0, np.inf, 1.0])
        with pytest.raises(ValueError):
            decode_min_sum(hm, [1.0, 1.0, 1.0], norm_factor=0.0)
        with pytest.raises(ValueError):
            decode_min_sum(hm, [1.0, 1.0])


def test_make_regular_ldpc_deterministic():
    a = make_regular_ldpc(24, 3, 6, 5)
    b = make_regular_ldpc(24, 3, 6, 5)
    assert a == b
    assert all(len(nb) == 3 for nb in a.var_neighbors)
    assert all(len(nb) == 6 for nb in a.check_neighbors)
