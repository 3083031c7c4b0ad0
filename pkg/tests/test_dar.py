"""Tests for the double answer reranker."""

import math

import numpy as np
import pytest

from dar_rerank.autograd import AdamState, Tensor, check_gradients
from dar_rerank.corpus import Candidate, QAExample
from dar_rerank.errors import ConfigError, DataError
from dar_rerank.rankers import (
    DarModel,
    ModelOptions,
    TrainVariant,
    ar_loss,
    dar_forward,
    dar_infer,
    dar_train_step,
    select_support_train,
    sr_ranking_loss,
)
from dar_rerank.rankers.dar import canonical_supports

from tests.helpers import TEXTS, question, tiny_encoder, tiny_vocab


class TestSupportRankingLoss:

    def test_value(self):
        assert sr_ranking_loss(Tensor([2.0, 1.0, 0.0]), 0).item() == pytest.approx(0.40761, abs=1e-5)
        assert sr_ranking_loss(Tensor([2.0, 1.0, 0.0]), 0).item() == pytest.approx(
            math.log(1 + math.exp(-1) + math.exp(-2)), abs=1e-12)

    def test_uniform_pool(self):
        assert sr_ranking_loss(Tensor([0.3] * 4), 2).item() == pytest.approx(math.log(4))

    def test_positive_outside_pool(self):
        with pytest.raises(DataError):
            sr_ranking_loss(Tensor([1.0, 2.0]), 2)


class TestPools:

    def setup_method(self):
        self.model = DarModel(tiny_vocab(), tiny_encoder())

    def test_canonical_dedup(self):
        a = Candidate.retrieved("s1", "Heart disease.")
        b = Candidate.retrieved("s0", "heart  disease .")
        c = Candidate.retrieved("s2", "bananas are yellow")
        kept = canonical_supports([c, a, b])
        assert [s.id for s in kept] == ["s2", "s0"]

    def test_pool_holds_other_candidates_and_retrieved(self):
        ex = question(labels=(1, -1, -1))
        supports = {"q1-c0": [Candidate.retrieved("r0", TEXTS[5])]}
        pools = self.model.pools(ex, supports)
        assert [c.id for c in pools[0]] == ["q1-c1", "q1-c2", "r0"]
        assert [c.id for c in pools[1]] == ["q1-c0", "q1-c2"]

    def test_inline_retrieved_is_not_a_target(self):
        ex = QAExample("q", TEXTS[0], [Candidate("a", TEXTS[1], 1), Candidate.retrieved("r", TEXTS[2])])
        assert self.model.targets(ex) == [0]
        scores = self.model.score(ex)
        assert scores[1] == -np.inf
        assert self.model.rank(ex).order == [0, 1]


class TestTraining:

    def setup_method(self):
        self.model = DarModel(tiny_vocab(), tiny_encoder(), ModelOptions(variant="all"), seed=1)
        self.ex = question(labels=(1, -1, -1))

    def test_all_triplets_terms(self):
        run = self.model.forward_question(self.ex)
        assert len(run.ar_terms) == 6
        assert len(run.selections) == 3

    def test_best_support_only_terms(self):
        run = self.model.forward_question(self.ex, variant="best")
        assert len(run.ar_terms) == 3
        assert {t for t, _ in run.ar_terms} == {"q1-c0", "q1-c1", "q1-c2"}

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            TrainVariant.parse("some")

    def test_loss_is_ar_plus_sr(self):
        run = self.model.forward_question(self.ex)
        assert run.total.item() == pytest.approx(run.ar_loss.item() + run.sr_loss.item())
        assert ar_loss(self.model, [self.ex]).item() == pytest.approx(run.ar_loss.item())

    def test_signed_selection(self):
        target = self.ex.candidates[1]
        pool = [self.ex.candidates[0], self.ex.candidates[2], Candidate.retrieved("r", TEXTS[4])]
        chosen = select_support_train(self.model, self.ex.question, target, pool)
        probs = [dar_forward(self.model, self.ex.question, target, c)[1].item() for c in pool]
        assert chosen.support == int(np.argmin(probs))
        positive = self.ex.candidates[0]
        chosen = select_support_train(self.model, self.ex.question, positive, self.ex.candidates[1:])
        probs = [dar_forward(self.model, self.ex.question, positive, c)[1].item() for c in self.ex.candidates[1:]]
        assert chosen.support == int(np.argmax(probs))

    def test_selection_needs_label_and_pool(self):
        with pytest.raises(DataError):
            select_support_train(self.model, "q", Candidate.retrieved("r", "x"), self.ex.candidates)
        with pytest.raises(DataError):
            select_support_train(self.model, "q", self.ex.candidates[0], [self.ex.candidates[0]])

    def test_forward_rejects_self_support(self):
        c = self.ex.candidates[0]
        with pytest.raises(DataError):
            dar_forward(self.model, self.ex.question, c, c)

    def test_restricted_step_moves_only_given_params(self):
        encoder_before = self.model.encoder.tensors["tok_emb"].data.copy()
        sr_before = self.model.sr_head.weight.data.copy()
        params = {k: v for k, v in self.model.parameters().items() if k.startswith("sr_head")}
        dar_train_step(self.model, [self.ex], AdamState(lr=1e-2), params=params)
        assert np.array_equal(self.model.encoder.tensors["tok_emb"].data, encoder_before)
        assert not np.array_equal(self.model.sr_head.weight.data, sr_before)

    def test_gradients(self):
        params = {k: v for k, v in self.model.parameters().items()
                  if k.startswith(("sr_head", "ar_head")) or k == "encoder.layers.0.attn.wk"}
        result = check_gradients(lambda: self.model.question_loss(self.ex), params, max_entries=6)
        assert result.passed(), result


class TestInference:

    def setup_method(self):
        self.model = DarModel(tiny_vocab(), tiny_encoder(), seed=5)
        self.ex = question(labels=(1, -1, -1))

    def test_scores_are_ar_probabilities_at_sr_choice(self):
        scores, selections = self.model.infer(self.ex)
        for sel in selections:
            target = self.ex.candidates[sel.target]
            support = next(c for c in self.ex.candidates if c.id == sel.support_id)
            _, prob = dar_forward(self.model, self.ex.question, target, support)
            assert scores[sel.target] == pytest.approx(prob.item(), abs=1e-10)

    def test_support_order_does_not_matter(self):
        sup = [Candidate.retrieved(f"r{i}", TEXTS[3 + i]) for i in range(3)]
        a = dar_infer(self.model, self.ex, sup)
        b = dar_infer(self.model, self.ex, list(reversed(sup)))
        assert np.allclose(a.scores, b.scores, atol=1e-12)

    def test_empty_pool_uses_sentinel(self):
        ex = question(labels=(1,))
        scores, selections = self.model.infer(ex)
        assert selections[0].support == -1
        assert selections[0].source == "none"
        assert 0.0 < scores[0] < 1.0

    def test_retrieved_support_source(self):
        ex = question(labels=(1,))
        scores, selections = self.model.infer(ex, {"q1-c0": [Candidate.retrieved("r", TEXTS[4])]})
        assert selections[0].support_id == "r"
        assert selections[0].source == "retrieved"
