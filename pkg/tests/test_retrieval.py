"""Tests for the dual encoder, the exact index and support sentence selection."""

import logging
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest

from dar_rerank.autograd import AdamState, Tensor, save_container
from dar_rerank.corpus import Candidate, QAExample
from dar_rerank.errors import ConfigError, DataError, DimensionError
from dar_rerank.retrieval import (
    DualEncoder,
    Passage,
    QueryPassagePair,
    RetrievalIndex,
    build_index,
    dpr_ranking_loss,
    dpr_training_pairs,
    dump_passages,
    load_passages,
    positive_passages,
    retrieve_supports,
    select_support_sentences,
)

from tests.helpers import TEXTS, tiny_encoder, tiny_vocab

PASSAGES = [
    Passage.from_text("p2", "Heart disease is also called CVD. CVD is the leading cause of death."),
    Passage.from_text("p0", "The moon is made of rock. Rivers flow into the sea."),
    Passage.from_text("p1", "Bananas are yellow fruit. Heart disease is also called CVD."),
]


# ── Index ────────────────────────────────────────────────────────────────────

class TestIndex:

    def setup_method(self):
        rng = np.random.default_rng(11)
        self.passages = [Passage.from_text(f"p{i:03d}", f"passage {i}") for i in range(50)]
        self.matrix = rng.normal(size=(50, 6))
        self.index = RetrievalIndex(self.passages, self.matrix)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            q = rng.normal(size=6)
            hits = self.index.search(q, 10)
            expected = np.argsort(-(self.matrix @ q), kind="stable")[:10]
            assert [h.passage.id for h in hits] == [self.passages[i].id for i in expected]
            assert [h.score for h in hits] == sorted((h.score for h in hits), reverse=True)

    def test_ties_by_id(self):
        passages = [Passage.from_text(i, i) for i in ("b", "a", "c")]
        index = RetrievalIndex(passages, np.ones((3, 2)))
        assert [h.passage.id for h in index.search(np.ones(2), 3)] == ["a", "b", "c"]

    def test_m_larger_than_corpus(self, caplog):
        with caplog.at_level(logging.WARNING):
            hits = self.index.search(np.ones(6), 80)
        assert len(hits) == 50
        assert "exceeds" in caplog.text

    def test_m_must_be_positive(self):
        with pytest.raises(ConfigError):
            self.index.search(np.ones(6), 0)

    def test_query_width(self):
        with pytest.raises(DimensionError):
            self.index.search(np.ones(5), 3)

    def test_matrix_rows_must_match(self):
        with pytest.raises(DimensionError):
            RetrievalIndex(self.passages[:3], self.matrix)

    def test_immutable(self):
        with pytest.raises(ValueError):
            self.index.embeddings[0, 0] = 1.0

    def test_save_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "passages.index"
            self.index.save(path)
            loaded = RetrievalIndex.load(path)
        assert [p.id for p in loaded.passages] == [p.id for p in self.passages]
        assert loaded.embeddings.tobytes() == self.index.embeddings.tobytes()

    def test_load_missing(self):
        with pytest.raises(DataError):
            RetrievalIndex.load("/nonexistent/passages.index")

    def test_load_wrong_kind(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.ckpt"
            save_container(path, {"model_kind": "sbc"}, {"w": np.zeros(2)})
            with pytest.raises(ConfigError):
                RetrievalIndex.load(path)


class TestPassages:

    def test_sentences(self):
        assert PASSAGES[0].sentences == ("Heart disease is also called CVD.", "CVD is the leading cause of death.")

    def test_dump_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "passages.jsonl"
            dump_passages(PASSAGES, path)
            assert load_passages(path) == PASSAGES

    def test_malformed(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "passages.jsonl"
            path.write_text('{"id": "p"}\n')
            with pytest.raises(DataError):
                load_passages(path)


# ── Dual encoder ─────────────────────────────────────────────────────────────

class TestDualEncoder:

    def setup_method(self):
        self.encoder = DualEncoder(tiny_vocab(), tiny_encoder(), seed=3)

    def test_ranking_loss_value(self):
        loss = dpr_ranking_loss(Tensor([1.0, 0.0]), Tensor([[2.0, 0.0], [0.0, 0.0]]), 0)
        assert loss.item() == pytest.approx(math.log(1 + math.exp(-2)))

    def test_ranking_loss_positive_range(self):
        with pytest.raises(DataError):
            dpr_ranking_loss(Tensor([1.0]), Tensor([[1.0]]), 1)

    def test_embedding_widths(self):
        q = self.encoder.encode_query(TEXTS[0], TEXTS[1])
        assert q.shape == (8,)
        p = self.encoder.encode_passages([TEXTS[1]])
        assert p.shape == (1, 8)

    def test_chunked_encoding_matches(self):
        texts = TEXTS * 2
        assert np.allclose(self.encoder.encode_passages(texts, batch_size=5),
                           self.encoder.encode_passages(texts, batch_size=64), atol=1e-10)

    def test_training_lowers_loss(self):
        pairs = [
            QueryPassagePair("q0", TEXTS[0], "heart disease", PASSAGES[0].id, PASSAGES[0].text),
            QueryPassagePair("q1", "what is the moon made of", "rock", PASSAGES[1].id, PASSAGES[1].text),
        ]
        before = self.encoder.batch_loss(pairs).item()
        state = AdamState(lr=1e-2)
        for _ in range(10):
            self.encoder.train_step(pairs, state)
        assert self.encoder.batch_loss(pairs).item() < before

    def test_save_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "dpr.ckpt"
            self.encoder.save(path)
            loaded = DualEncoder.load(path)
        assert loaded.encode_query(TEXTS[0], TEXTS[1]).tolist() == self.encoder.encode_query(TEXTS[0], TEXTS[1]).tolist()


# ── Supports ─────────────────────────────────────────────────────────────────

class TestSupports:

    def setup_method(self):
        self.encoder = DualEncoder(tiny_vocab(), tiny_encoder(), seed=3)
        self.example = QAExample("q", TEXTS[0], [
            Candidate("c0", "heart disease", 1),
            Candidate("c1", "bananas", -1),
        ])

    def test_positive_passages_need_correct_answer(self):
        hits = positive_passages(self.example, PASSAGES)
        assert list(hits) == ["c0"]
        assert [p.id for p in hits["c0"]] == ["p2", "p1"]

    def test_training_pairs(self):
        pairs = dpr_training_pairs([self.example], PASSAGES)
        assert [(p.target, p.passage_id) for p in pairs] == [("heart disease", "p2"), ("heart disease", "p1")]

    def test_sentences_deduplicated_and_capped(self):
        sup = select_support_sentences(TEXTS[0], "bananas", PASSAGES, self.encoder, n_s=3)
        assert len(sup) == 3
        texts = [s.text for s in sup]
        assert len(set(texts)) == 3
        assert [s.score for s in sup] == sorted((s.score for s in sup), reverse=True)

    def test_all_unique_sentences_when_n_s_is_large(self):
        sup = select_support_sentences(TEXTS[0], "bananas", PASSAGES, self.encoder, n_s=50)
        assert len(sup) == 5

    def test_target_is_not_its_own_support(self):
        target = "Heart disease is also called CVD."
        sup = select_support_sentences(TEXTS[0], target, PASSAGES, self.encoder, n_s=50)
        assert target not in [s.text for s in sup]

    def test_n_s_must_be_positive(self):
        with pytest.raises(ConfigError):
            select_support_sentences(TEXTS[0], "x", PASSAGES, self.encoder, n_s=0)

    def test_retrieve_records(self):
        index = build_index(PASSAGES, self.encoder)
        records = retrieve_supports([self.example], index, self.encoder, m=2, n_s=2)
        assert {r["target_id"] for r in records} == {"c0", "c1"}
        assert all(len([r for r in records if r["target_id"] == t]) <= 2 for t in ("c0", "c1"))
        assert set(records[0]) == {"qid", "target_id", "sentence", "score"}

    def test_build_index_rejects_duplicates(self):
        with pytest.raises(DataError):
            build_index(PASSAGES + [PASSAGES[0]], self.encoder)
        with pytest.raises(DataError):
            build_index([], self.encoder)
