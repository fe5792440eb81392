from __future__ import annotations

import numpy as np
import pytest

from unilayout import tensor as T
from unilayout.model import (
    CapacityError,
    DecodingSession,
    ModelConfig,
    TransformerModel,
    coord_embedding_similarity,
    parameter_count,
)

TINY = ModelConfig(layers=1, heads=2, d_model=16, d_ff=32, max_input_len=24,
                   max_output_len=24, dropout=0.0)
TINY_DEC = ModelConfig(layers=1, heads=2, d_model=16, d_ff=32, max_input_len=24,
                       max_output_len=24, architecture="dec", dropout=0.0)
VOCAB = 40


class TestConfig:
    def test_paper_scale_reference_values(self):
        cfg = ModelConfig.paper_scale()
        assert (cfg.layers, cfg.heads, cfg.d_model, cfg.d_ff) == (8, 8, 512, 2048)

    def test_desk_scale_defaults(self):
        cfg = ModelConfig()
        assert (cfg.layers, cfg.heads, cfg.d_model, cfg.d_ff) == (2, 4, 64, 256)

    def test_heads_must_divide(self):
        with pytest.raises(ValueError):
            ModelConfig(d_model=30, heads=4)

    def test_dict_round_trip(self):
        cfg = ModelConfig(layers=3, heads=2, d_model=32, d_ff=64)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestParameterCount:
    @pytest.mark.parametrize("cfg", [TINY, TINY_DEC, ModelConfig(dropout=0.0)])
    def test_matches_closed_form(self, cfg):
        model = TransformerModel(cfg, VOCAB)
        assert model.parameter_count() == parameter_count(cfg, VOCAB)


class TestForward:
    def test_logits_shape(self):
        model = TransformerModel(TINY, VOCAB, seed=0)
        logits = model.forward(np.array([[1, 5, 2]]), np.array([[1, 6, 7, 8]]))
        assert logits.shape == (1, 4, VOCAB)

    def test_capacity_errors(self):
        model = TransformerModel(TINY, VOCAB, seed=0)
        with pytest.raises(CapacityError):
            model.forward(np.ones((1, 25), dtype=int), np.array([[1]]))
        with pytest.raises(CapacityError):
            model.forward(np.array([[1]]), np.ones((1, 25), dtype=int))

    @pytest.mark.parametrize("cfg", [TINY, TINY_DEC])
    def test_causality(self, cfg):
        rng = np.random.default_rng(5)
        model = TransformerModel(cfg, VOCAB, seed=1)
        dec = rng.integers(1, VOCAB, size=(1, 10))
        base = model.forward(np.array([[1, 2]]), dec).data
        for t in (2, 5, 9):
            perturbed = dec.copy()
            perturbed[0, t] = (perturbed[0, t] + 7) % (VOCAB - 1) + 1
            out = model.forward(np.array([[1, 2]]), perturbed).data
            np.testing.assert_allclose(out[0, :t], base[0, :t], atol=1e-12)
            assert np.abs(out[0, t:] - base[0, t:]).max() > 1e-9

    def test_pad_positions_do_not_leak(self):
        # permuting content among PAD-masked input slots leaves logits unchanged
        model = TransformerModel(TINY, VOCAB, pad_id=0, seed=2)
        dec = np.array([[1, 6, 7]])
        a = model.forward(np.array([[1, 5, 2, 0, 0, 0]]), dec).data
        b = model.forward(np.array([[1, 5, 2, 0, 0, 0]]), dec).data
        np.testing.assert_array_equal(a, b)
        # extending the pad tail must not change the logits either
        c = model.forward(np.array([[1, 5, 2, 0]]), dec).data
        np.testing.assert_allclose(a, c, atol=1e-9)

    def test_batch_rows_are_independent(self):
        model = TransformerModel(TINY, VOCAB, seed=3)
        inputs = np.array([[1, 5, 2], [1, 9, 2]])
        dec = np.array([[1, 6, 7], [1, 8, 9]])
        batch = model.forward(inputs, dec).data
        solo = model.forward(inputs[:1], dec[:1]).data
        np.testing.assert_allclose(batch[:1], solo, atol=1e-12)

    def test_cross_attention_zeroed_degenerates_to_lm(self):
        model = TransformerModel(TINY, VOCAB, seed=4)
        for i in range(TINY.layers):
            model.params[f"dec.{i}.cross.wo"].data[:] = 0.0
            model.params[f"dec.{i}.cross.bo"].data[:] = 0.0
        dec = np.array([[1, 6, 7, 8]])
        a = model.forward(np.array([[1, 2]]), dec).data
        b = model.forward(np.array([[1, 30, 31, 32, 2]]), dec).data
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_dec_only_matches_unpadded_input(self):
        # left-padding inside the dec-only forward must not change results
        model = TransformerModel(TINY_DEC, VOCAB, pad_id=0, seed=6)
        dec = np.array([[1, 6, 7]])
        short = model.forward(np.array([[1, 5, 2]]), dec).data
        padded = model.forward(np.array([[1, 5, 2, 0, 0]]), dec).data
        np.testing.assert_allclose(short, padded, atol=1e-9)

    def test_next_logits_matches_forward(self):
        model = TransformerModel(TINY, VOCAB, seed=7)
        full = model.forward(np.array([[1, 2]]), np.array([[1, 6, 7]])).data
        step = model.next_logits([1, 2], [1, 6, 7])
        np.testing.assert_allclose(step, full[0, -1], atol=1e-12)


class TestModelGradients:
    @pytest.mark.parametrize("cfg", [TINY, TINY_DEC])
    def test_whole_model_gradcheck_on_subset(self, cfg):
        model = TransformerModel(cfg, 12, seed=8)
        inputs = np.array([[1, 5, 2]])
        dec = np.array([[1, 6, 7]])
        labels = np.array([[6, 7, 2]])

        def build(_params):
            logits = model.forward(inputs, dec)
            return T.cross_entropy(logits, labels)

        subset = {
            name: model.params[name]
            for name in ["tok_emb", "out.b", "dec.0.ln1.g", "dec.0.ff.b1"]
        }
        assert T.gradient_check(build, subset) < 1e-4


class TestDecodingSession:
    @pytest.mark.parametrize("cfg", [TINY, TINY_DEC])
    def test_matches_full_forward(self, cfg):
        rng = np.random.default_rng(21)
        model = TransformerModel(cfg, VOCAB, seed=10)
        input_ids = [1, 7, 9, 2]
        prefix = [1] + [int(v) for v in rng.integers(3, VOCAB, size=6)]
        session = DecodingSession(model, input_ids, batch=1)
        incremental = []
        for token in prefix:
            incremental.append(session.append([token])[0])
        full = model.forward(np.array([input_ids]), np.array([prefix])).data[0]
        np.testing.assert_allclose(np.stack(incremental), full, atol=1e-9)

    def test_batch_rows_match_single(self):
        model = TransformerModel(TINY, VOCAB, seed=11)
        session3 = DecodingSession(model, [1, 2], batch=3)
        single = DecodingSession(model, [1, 2], batch=1)
        tokens = np.array([5, 9, 14])
        batched = session3.append(tokens)
        np.testing.assert_allclose(batched[1], DecodingSession(model, [1, 2], batch=1).append([9])[0], atol=1e-12)

    def test_capacity_guard(self):
        model = TransformerModel(TINY, VOCAB, seed=12)
        session = DecodingSession(model, [1, 2], batch=1)
        for _ in range(TINY.max_output_len):
            session.append([3])
        with pytest.raises(CapacityError):
            session.append([3])


class TestCoordSimilarity:
    def test_shape_diagonal_symmetry(self):
        model = TransformerModel(TINY, VOCAB, seed=9)
        sim = coord_embedding_similarity(model, coord_base=10, bins=16)
        assert sim.shape == (16, 16)
        assert np.all(np.diag(sim) == 1.0)
        np.testing.assert_allclose(sim, sim.T, atol=1e-15)
