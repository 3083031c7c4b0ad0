"""Tests for the answer-support reranker."""

import itertools

import numpy as np
import pytest

from dar_rerank.autograd import check_gradients
from dar_rerank.errors import ConfigError, DataError
from dar_rerank.rankers import AsrModel, DarModel, ModelOptions, SbcModel, asc_label, asr_forward, asr_loss

from tests.helpers import TEXTS, question, tiny_encoder, tiny_vocab


class TestAscLabel:

    @pytest.mark.parametrize("l_t, l_c, expected", [(1, 1, 0), (1, -1, 1), (-1, 1, 2), (-1, -1, 3)])
    def test_classes(self, l_t, l_c, expected):
        assert asc_label(l_t, l_c) == expected

    def test_unlabeled_rejected(self):
        with pytest.raises(DataError):
            asc_label(1, 0)


class TestAsrStructure:

    def setup_method(self):
        self.vocab = tiny_vocab()
        self.model = AsrModel(self.vocab, tiny_encoder(), ModelOptions(k=3))

    def test_final_head_reads_two_widths(self):
        assert self.model.head.d_in == 2 * 8
        assert self.model.asc_head.out == 4

    def test_encoders_are_distinct(self):
        qa = self.model.qa_encoder.tensors["tok_emb"]
        pair = self.model.pair_encoder.tensors["tok_emb"]
        assert qa is not pair
        assert not np.array_equal(qa.data, pair.data)

    def test_twice_the_parameters_of_dar(self):
        dar = DarModel(self.vocab, tiny_encoder())
        ratio = self.model.num_parameters() / dar.num_parameters()
        assert 1.9 <= ratio <= 2.1

    def test_unknown_support_mode(self):
        with pytest.raises(ConfigError):
            AsrModel(self.vocab, tiny_encoder(), ModelOptions(support_mode="random"))


class TestAsrForward:

    def setup_method(self):
        self.vocab = tiny_vocab()
        self.model = AsrModel(self.vocab, tiny_encoder(), ModelOptions(k=3), seed=2)
        self.supports = TEXTS[2:5]

    def final(self, supports):
        prob, _ = asr_forward(self.model, TEXTS[0], TEXTS[1], supports)
        return prob.data

    def test_distributions(self):
        prob, asc = asr_forward(self.model, TEXTS[0], TEXTS[1], self.supports)
        assert prob.data.sum() == pytest.approx(1.0)
        assert asc.shape == (3, 4)
        assert np.allclose(asc.data.sum(axis=1), 1.0)

    def test_support_permutations(self):
        base = self.final(self.supports)
        for perm in itertools.permutations(self.supports):
            assert np.allclose(self.final(list(perm)), base, atol=1e-10)

    def test_support_duplication(self):
        base = self.final(self.supports)
        assert np.allclose(self.final(self.supports + [self.supports[0]]), base, atol=1e-10)

    def test_no_supports(self):
        with pytest.raises(DataError):
            asr_forward(self.model, TEXTS[0], TEXTS[1], [])


class TestAsrRanking:

    def setup_method(self):
        self.vocab = tiny_vocab()
        self.model = AsrModel(self.vocab, tiny_encoder(), ModelOptions(k=2))

    def test_sbc_supports_exclude_target(self):
        ex = question(labels=(1, -1, -1, -1))
        assert self.model.sbc_supports(ex, 1, [3, 1, 0, 2]) == [3, 0]

    def test_asc_supports(self):
        ex = question(labels=(1, -1, -1, -1))
        sup = self.model.asc_supports(ex, 0, 2)
        assert len(sup) == 2
        assert 0 not in sup

    def test_asr_rank_scores(self):
        model = AsrModel(self.vocab, tiny_encoder(), ModelOptions(k=2, support_mode="asc"))
        scores = model.score(question(labels=(1, -1, -1, -1)))
        assert scores.shape == (4,)
        assert np.all((scores > 0) & (scores < 1))

    def test_single_candidate_without_ranker(self):
        with pytest.raises(DataError):
            self.model.score(question(labels=(1,)))

    def test_single_candidate_with_ranker(self):
        sbc = SbcModel(self.vocab, tiny_encoder())
        self.model.attach_support_ranker(sbc)
        ex = question(labels=(1,))
        assert self.model.score(ex).tolist() == sbc.score(ex).tolist()
        assert self.model.question_loss(ex) is None

    def test_asc_weight_zero_drops_auxiliary_term(self):
        ex = question(labels=(1, -1, -1))
        with_asc = asr_loss(self.model, [ex]).item()
        self.model.options.asc_weight = 0.0
        assert asr_loss(self.model, [ex]).item() < with_asc

    def test_gradients(self):
        ex = question(labels=(-1, 1, -1))
        params = {k: v for k, v in self.model.parameters().items()
                  if k.startswith(("head", "asc_head")) or k == "pair_encoder.layers.0.ff.w2"}
        result = check_gradients(lambda: self.model.question_loss(ex), params, max_entries=6)
        assert result.passed(), result
