"""Tests for the ranking primitives, the SBC/PC/ACM baselines and the model registry."""

import math
import tempfile
from pathlib import Path

import numpy as np
import pytest

from dar_rerank.autograd import AdamState, Tensor, check_gradients, parameter
from dar_rerank.errors import ConfigError, DataError
from dar_rerank.rankers import (
    AcmModel,
    ClassifierHead,
    ModelOptions,
    PcModel,
    SbcModel,
    build_model,
    load_model,
    read_predictions,
    rerank,
    sbc_loss,
    sbc_score,
    write_predictions,
)

from tests.helpers import question, tiny_encoder, tiny_vocab


# ── Ranking primitives ───────────────────────────────────────────────────────

class TestRerank:

    def test_descending(self):
        assert rerank([0.1, 0.9, 0.5]).order == [1, 2, 0]

    def test_ties_keep_original_order(self):
        assert rerank([0.5, 0.7, 0.5, 0.7]).order == [1, 3, 0, 2]

    def test_nan_rejected(self):
        with pytest.raises(DataError, match="c2"):
            rerank([0.1, float("nan")], ids=["c1", "c2"])

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            rerank([])

    def test_ranked_labels(self):
        ranked = rerank([0.2, 0.8], labels=[1, -1])
        assert ranked.ranked_labels == [-1, 1]
        assert ranked.top == 1

    def test_prediction_dump(self):
        rows = [("q1", rerank([0.25, 0.75], labels=[1, -1], ids=["a", "b"])),
                ("q2", rerank([-math.inf, 1e-17], labels=[-1, 1], ids=["c", "d"]))]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "predictions.tsv"
            write_predictions(rows, path)
            loaded = read_predictions(path)
        assert list(loaded) == ["q1", "q2"]
        assert loaded["q2"].scores == [-math.inf, 1e-17]
        assert loaded["q1"].ids == ["a", "b"]
        assert loaded["q1"].ranked_labels == [-1, 1]

    def test_dump_without_labels(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "predictions.tsv"
            write_predictions([("q", rerank([1.0, 2.0]))], path)
            assert read_predictions(path)["q"].labels is None

    def test_dump_bad_columns(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "predictions.tsv"
            path.write_text("q\tc\t0.5\n")
            with pytest.raises(DataError):
                read_predictions(path)


# ── SBC ──────────────────────────────────────────────────────────────────────

class TestSbc:

    def setup_method(self):
        self.vocab = tiny_vocab()
        self.model = SbcModel(self.vocab, tiny_encoder())

    def test_single_dimension_score(self):
        head = ClassifierHead(weight=parameter([[1.0], [0.0]]), bias=parameter([0.0, 0.0]))
        p = sbc_score(Tensor([math.atanh(0.5)]), head)
        assert p.item() == pytest.approx(0.62246, abs=1e-5)

    def test_head_must_be_binary(self):
        head = ClassifierHead.init(3, 1, np.random.default_rng(0))
        with pytest.raises(ConfigError):
            sbc_score(Tensor([0.1]), head)

    def test_loss_by_label(self):
        assert sbc_loss(0.62246, 1).item() == pytest.approx(-math.log(0.62246), abs=1e-9)
        assert sbc_loss(0.62246, -1).item() == pytest.approx(-math.log(1 - 0.62246), abs=1e-9)

    def test_scores_are_probabilities(self):
        scores = self.model.score(question(labels=(1, -1, -1, -1)))
        assert scores.shape == (4,)
        assert np.all((scores > 0) & (scores < 1))

    def test_rank_carries_labels_and_ids(self):
        ex = question()
        ranked = self.model.rank(ex)
        assert sorted(ranked.order) == [0, 1, 2]
        assert ranked.ids == [c.id for c in ex.candidates]
        assert ranked.labels == [1, -1, -1]

    def test_gradients(self):
        ex = question()
        params = {k: v for k, v in self.model.parameters().items()
                  if k in ("head.weight", "head.bias", "encoder.layers.0.attn.wv")}
        result = check_gradients(lambda: self.model.question_loss(ex), params, max_entries=6)
        assert result.passed(), result

    def test_training_lowers_loss(self):
        ex = question()
        before = self.model.question_loss(ex).item()
        state = AdamState(lr=1e-2)
        for _ in range(15):
            self.model.train_step([ex], state)
        assert self.model.question_loss(ex).item() < before


# ── PC ───────────────────────────────────────────────────────────────────────

class TestPc:

    def setup_method(self):
        self.vocab = tiny_vocab()
        self.model = PcModel(self.vocab, tiny_encoder(), ModelOptions(k=3))

    def test_needs_two_slots(self):
        with pytest.raises(ConfigError):
            PcModel(self.vocab, tiny_encoder(), ModelOptions(k=1))

    def test_head_width(self):
        assert self.model.head.d_in == 3 * 8

    def test_short_lists_pad_with_zeros(self):
        ex = question(labels=(1, -1))
        emb = self.model.embed(ex)
        v = self.model.head_input(emb, 1, [0, 1])
        assert v.shape == (24,)
        assert np.array_equal(v.data[:8], emb.data[1])
        assert np.array_equal(v.data[8:16], emb.data[0])
        assert np.all(v.data[16:] == 0.0)

    def test_scores(self):
        scores = self.model.score(question(labels=(1, -1, -1, -1)))
        assert scores.shape == (4,)
        assert np.all((scores > 0) & (scores < 1))
        assert self.model.pc_score(question(labels=(1, -1, -1, -1)), 2) == pytest.approx(scores[2])

    def test_single_candidate_falls_back_to_sbc(self):
        sbc = SbcModel(self.vocab, tiny_encoder())
        self.model.attach_support_ranker(sbc)
        ex = question(labels=(1,))
        assert self.model.score(ex).tolist() == sbc.score(ex).tolist()

    def test_uses_sbc_order_for_context(self):
        sbc = SbcModel(self.vocab, tiny_encoder(), seed=4)
        self.model.attach_support_ranker(sbc)
        ex = question(labels=(1, -1, -1, -1))
        assert self.model.support_order(ex) == rerank(sbc.score(ex)).order


# ── ACM ──────────────────────────────────────────────────────────────────────

class TestAcm:

    def setup_method(self):
        self.vocab = tiny_vocab()
        self.model = AcmModel(self.vocab, tiny_encoder(), ModelOptions(k=2))

    def test_slots(self):
        assert self.model.n_slots == 3
        assert self.model.head.out == 3

    def test_full_slot_set_sums_to_one(self):
        scores = self.model.score(question(labels=(1, -1, -1)))
        assert scores.sum() == pytest.approx(1.0)

    def test_short_set_masks_trailing_slots(self):
        ex = question(labels=(1, -1))
        dist = self.model.acm_score(ex)
        assert dist[2] == 0.0
        assert dist[:2].sum() == pytest.approx(1.0)

    def test_more_candidates_than_slots(self):
        ex = question(labels=(1, -1, -1, -1, -1))
        with pytest.raises(ConfigError, match="3 slots"):
            self.model.score(ex)
        with pytest.raises(ConfigError):
            self.model.question_loss(ex)
        with pytest.raises(ConfigError, match="q1"):
            self.model.check_dataset([question("q0", labels=(1, -1)), ex])

    def test_all_negative_question_is_skipped(self):
        negative = question("q0", labels=(-1, -1, -1))
        assert self.model.question_loss(negative) is None
        assert self.model.batch_loss([negative]) is None
        state = AdamState()
        before = {k: v.data.copy() for k, v in self.model.parameters().items()}
        assert self.model.train_step([negative], state) is None
        assert state.step == 0
        assert all(np.array_equal(v.data, before[k]) for k, v in self.model.parameters().items())

        positive = question(labels=(1, -1, -1))
        mixed = self.model.batch_loss([negative, positive]).item()
        assert mixed == pytest.approx(self.model.question_loss(positive).item())

    def test_gradients(self):
        ex = question(labels=(-1, 1, -1))
        params = {k: v for k, v in self.model.parameters().items() if k.startswith("head")}
        result = check_gradients(lambda: self.model.question_loss(ex), params)
        assert result.passed(), result


# ── Registry and checkpoints ─────────────────────────────────────────────────

class TestRegistry:

    def setup_method(self):
        self.vocab = tiny_vocab()
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def teardown_method(self):
        self.tmp.cleanup()

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            build_model("bert", self.vocab, tiny_encoder())

    def test_asr_rank_switches_support_mode(self):
        assert build_model("asr-rank", self.vocab, tiny_encoder()).options.support_mode == "asc"
        assert build_model("asr", self.vocab, tiny_encoder()).options.support_mode == "sbc"

    def test_asr_rank_mode_survives_reload_without_kind(self):
        model = build_model("asr-rank", self.vocab, tiny_encoder(), ModelOptions(k=2))
        path = self.dir / "asr-rank.ckpt"
        model.save(path)
        loaded = load_model(path)
        assert loaded.options.support_mode == "asc"
        assert load_model(path, "asr").options.support_mode == "sbc"

    @pytest.mark.parametrize("kind", ["sbc", "pc", "acm", "asr", "dar"])
    def test_save_load_scores_identical(self, kind):
        model = build_model(kind, self.vocab, tiny_encoder(), ModelOptions(k=2), seed=3)
        ex = question()
        path = self.dir / f"{kind}.ckpt"
        model.save(path, config_echo={"model": kind})
        loaded = load_model(path)
        assert loaded.kind == kind
        assert loaded.score(ex).tolist() == model.score(ex).tolist()

    def test_attached_ranker_survives(self):
        model = build_model("asr", self.vocab, tiny_encoder(), ModelOptions(k=2))
        model.attach_support_ranker(SbcModel(self.vocab, tiny_encoder(), seed=9))
        path = self.dir / "asr.ckpt"
        model.save(path)
        loaded = load_model(path, "asr-rank")
        assert loaded.support_ranker is not None
        assert loaded.options.support_mode == "asc"
        ex = question()
        assert loaded.support_order(ex) == model.support_order(ex)

    def test_wrong_kind(self):
        path = self.dir / "sbc.ckpt"
        SbcModel(self.vocab, tiny_encoder()).save(path)
        with pytest.raises(ConfigError):
            load_model(path, "dar")
