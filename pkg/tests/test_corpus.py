"""Tests for the data model, dataset IO and sentence segmentation."""

import json
import tempfile
from pathlib import Path

import pytest

from dar_rerank.corpus import (
    WIKIQA_HEADER,
    Candidate,
    QAExample,
    dump_jsonl,
    dump_supports,
    dump_tsv,
    filter_mode,
    load_dataset,
    load_jsonl,
    load_supports,
    load_tsv,
)
from dar_rerank.errors import DataError
from dar_rerank.segmentation import normalize_text, split_sentences


def example(qid, labels):
    return QAExample(qid, f"question {qid}", [Candidate(f"{qid}-{i}", f"answer {i}", l)
                                                for i, l in enumerate(labels)])


# ── Segmentation ─────────────────────────────────────────────────────────────

class TestSegmentation:

    def test_simple_sentences(self):
        assert len(split_sentences("This is first. This is second. This is third.")) == 3

    def test_empty_string(self):
        assert split_sentences("") == []
        assert split_sentences("   ") == []

    def test_no_punctuation(self):
        assert split_sentences("A sentence without ending punctuation") == [
            "A sentence without ending punctuation"]

    def test_abbreviations_not_split(self):
        stmts = split_sentences("Dr. Smith went to Washington. He arrived safely.")
        assert stmts == ["Dr. Smith went to Washington.", "He arrived safely."]

    def test_decimal_not_split(self):
        assert len(split_sentences("It costs 3. 5 dollars! Really?")) == 2

    def test_quoted_terminal(self):
        assert len(split_sentences('He said "stop." Then left.')) == 2

    def test_join_reconstructs(self):
        text = "One  sentence here.\nAnother one! And a tail"
        assert " ".join(split_sentences(text)) == " ".join(text.split())

    def test_normalize_text(self):
        assert normalize_text("Heart  Disease, CVD.") == "heart disease , cvd ."


# ── Data model ───────────────────────────────────────────────────────────────

class TestDataModel:

    def test_label_domain(self):
        with pytest.raises(DataError):
            Candidate("c", "text", 0)

    def test_retrieved_must_be_unlabeled(self):
        assert Candidate.retrieved("s", "text").label is None
        with pytest.raises(DataError):
            Candidate("s", "text", 1, source="retrieved")

    def test_empty_candidates(self):
        with pytest.raises(DataError):
            QAExample("q", "why?", [])

    def test_duplicate_candidate_ids(self):
        with pytest.raises(DataError):
            QAExample("q", "why?", [Candidate("c", "a", 1), Candidate("c", "b", -1)])

    def test_filter_modes(self):
        data = [example("mixed", [1, -1]), example("neg", [-1, -1]), example("pos", [1, 1])]
        assert [e.qid for e in filter_mode(data, "all")] == ["mixed", "neg", "pos"]
        assert [e.qid for e in filter_mode(data, "no-all-minus")] == ["mixed", "pos"]
        assert [e.qid for e in filter_mode(data, "clean")] == ["mixed"]

    def test_unknown_mode(self):
        with pytest.raises(DataError):
            filter_mode([], "strict")


# ── Dataset IO ───────────────────────────────────────────────────────────────

class TestDatasetIO:

    def setup_method(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def teardown_method(self):
        self.tmp.cleanup()

    def test_five_column_tsv(self):
        path = self.dir / "d.tsv"
        path.write_text("q1\twho?\tc1\tfirst\t1\nq1\twho?\tc2\tsecond\t0\nq2\twhat?\tc3\tthird\t0\n")
        data = load_tsv(path)
        assert [e.qid for e in data] == ["q1", "q2"]
        assert data[0].labels == [1, -1]
        assert data[0].candidates[1].text == "second"

    def test_wikiqa_layout(self):
        path = self.dir / "d.tsv"
        rows = ["\t".join(WIKIQA_HEADER), "Q1\thow?\tD1\ttitle\tD1-0\tan answer\t1"]
        path.write_text("\n".join(rows) + "\n")
        data = load_tsv(path)
        assert data[0].candidates[0].id == "D1-0"
        assert data[0].candidates[0].is_positive

    def test_bad_label_names_line(self):
        path = self.dir / "d.tsv"
        path.write_text("q1\twho?\tc1\tfirst\t1\nq1\twho?\tc2\tsecond\tyes\n")
        with pytest.raises(DataError, match=":2:"):
            load_tsv(path)

    def test_wrong_column_count(self):
        path = self.dir / "d.tsv"
        path.write_text("q1\twho?\tc1\n")
        with pytest.raises(DataError):
            load_tsv(path)

    def test_empty_candidate_skipped(self, caplog):
        path = self.dir / "d.tsv"
        path.write_text("q1\twho?\tc1\tfirst\t1\nq1\twho?\tc2\t \t0\n")
        assert load_tsv(path)[0].k == 1
        assert "empty candidate" in caplog.text

    def test_tsv_dump_load(self):
        data = [example("a", [1, -1, -1]), example("b", [-1, 1])]
        path = self.dir / "d.tsv"
        dump_tsv(data, path)
        loaded = load_dataset(path)
        assert [e.to_dict() for e in loaded] == [e.to_dict() for e in data]

    def test_jsonl_dump_load(self):
        data = [example("a", [1, -1])]
        path = self.dir / "d.jsonl"
        dump_jsonl(data, path)
        assert load_dataset(path)[0].to_dict() == data[0].to_dict()

    def test_jsonl_null_label_is_retrieved(self):
        path = self.dir / "d.jsonl"
        rec = {"id": "q", "question": "who?", "candidates": [
            {"id": "c1", "text": "a", "label": 1}, {"id": "s1", "text": "b", "label": None}]}
        path.write_text(json.dumps(rec) + "\n")
        cands = load_jsonl(path)[0].candidates
        assert cands[1].source == "retrieved"
        assert cands[1].label is None

    def test_jsonl_malformed(self):
        path = self.dir / "d.jsonl"
        path.write_text('{"id": "q"}\n')
        with pytest.raises(DataError, match=":1:"):
            load_jsonl(path)

    def test_supports_keep_file_order(self):
        path = self.dir / "s.jsonl"
        dump_supports([
            {"qid": "q", "target_id": "t", "sentence": "first", "score": 2.0},
            {"qid": "q", "target_id": "t", "sentence": "second", "score": 1.0},
            {"qid": "q", "target_id": "u", "sentence": "other", "score": 0.5},
        ], path)
        supports = load_supports(path)
        assert [c.text for c in supports["q"]["t"]] == ["first", "second"]
        assert supports["q"]["u"][0].label is None
