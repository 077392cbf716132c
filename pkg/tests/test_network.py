import numpy as np
import pytest

from recursic.channel import rng_for
from recursic.network import (MacCounter, NetworkParams, WeightFormatError,
                              block_forward, block_forward_batch, count_macs,
                              count_parameters, expected_shapes, init_params,
                              load_weights, save_weights, snr_embedding)


class TestCounts:
    @pytest.mark.parametrize("m,params,macs", [
        (4, 932, 880), (16, 1136, 1072), (64, 1952, 1840),
    ])
    def test_closed_forms(self, m, params, macs):
        assert count_parameters(m) == params
        assert count_macs(m) == macs

    @pytest.mark.parametrize("m", [4, 16, 64])
    def test_tensor_sizes_add_up(self, m):
        p = init_params(m, rng_for(0))
        assert p.parameter_count() == count_parameters(m)

    @pytest.mark.parametrize("m", [4, 16, 64])
    def test_instrumented_macs(self, m):
        p = init_params(m, rng_for(1))
        counter = MacCounter()
        block_forward(p, 0.7 - 0.2j, 12.5, counter)
        assert counter.total == count_macs(m)


class TestSnrEmbedding:
    def test_zero_pattern(self):
        emb = snr_embedding(0.0)
        assert np.allclose(emb[0::2], 0.0)
        assert np.allclose(emb[1::2], 1.0)

    def test_bounded(self):
        for snr in (-40.0, -3.3, 0.0, 17.2, 99.0):
            emb = snr_embedding(snr)
            assert np.all(np.abs(emb) <= 1.0)
            assert emb.shape == (16,)

    def test_slot0_is_plain_sine(self):
        assert snr_embedding(20.0)[0] == pytest.approx(np.sin(20.0))

    def test_frequency_ladder(self):
        emb = snr_embedding(5.0)
        assert emb[2] == pytest.approx(np.sin(5.0 / 10000 ** (2 / 16)))
        assert emb[15] == pytest.approx(np.cos(5.0 / 10000 ** (14 / 16)))


class TestBlockForward:
    def test_simplex_output(self):
        p = init_params(16, rng_for(2))
        probs = block_forward(p, 0.1 + 0.9j, 18.0)
        assert probs.shape == (16,)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(probs > 0)

    def test_zero_weights_uniform(self):
        shapes = expected_shapes(4)
        p = NetworkParams(**{k: np.zeros(s) for k, s in shapes.items()})
        probs = block_forward(p, 0.4 - 0.4j, 25.0)
        assert np.allclose(probs, 0.25, atol=1e-15)

    def test_logit_bias_shift_invariance(self):
        p = init_params(16, rng_for(3))
        before = block_forward(p, -0.3 + 0.2j, 14.0)
        p.b3 += 7.5
        after = block_forward(p, -0.3 + 0.2j, 14.0)
        assert np.allclose(before, after, atol=1e-12)

    def test_non_finite_rejected(self):
        p = init_params(4, rng_for(4))
        with pytest.raises(ValueError):
            block_forward(p, complex(np.inf, 0), 10.0)

    def test_batch_matches_single(self):
        p = init_params(16, rng_for(5))
        rng = rng_for(6)
        s = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        snr = rng.uniform(5, 30, 32)
        batch = block_forward_batch(p, s, snr)
        for i in range(32):
            single = block_forward(p, complex(s[i]), float(snr[i]))
            assert np.allclose(batch[i], single, atol=1e-13)


class TestWeightIo:
    def test_roundtrip(self, tmp_path):
        p = init_params(16, rng_for(7))
        path = str(tmp_path / "w.json")
        save_weights(p, path)
        q = load_weights(path)
        for name, t in p.tensors().items():
            assert np.array_equal(t, q.tensors()[name])
        assert q.order == 16

    def test_rejects_wrong_shape(self, tmp_path):
        import json
        p = init_params(4, rng_for(8))
        path = str(tmp_path / "w.json")
        save_weights(p, path)
        with open(path) as fh:
            doc = json.load(fh)
        doc["tensors"]["w1"]["shape"] = [8, 4]
        with open(path, "w") as fh:
            json.dump(doc, fh)
        with pytest.raises(WeightFormatError):
            load_weights(path)

    def test_rejects_missing_tensor(self, tmp_path):
        import json
        p = init_params(4, rng_for(9))
        path = str(tmp_path / "w.json")
        save_weights(p, path)
        with open(path) as fh:
            doc = json.load(fh)
        del doc["tensors"]["b2"]
        with open(path, "w") as fh:
            json.dump(doc, fh)
        with pytest.raises(WeightFormatError):
            load_weights(path)

    def test_rejects_bad_version(self, tmp_path):
        import json
        p = init_params(4, rng_for(10))
        path = str(tmp_path / "w.json")
        save_weights(p, path)
        with open(path) as fh:
            doc = json.load(fh)
        doc["layout_version"] = 99
        with open(path, "w") as fh:
            json.dump(doc, fh)
        with pytest.raises(WeightFormatError):
            load_weights(path)
