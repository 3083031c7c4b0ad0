"""Tests for the planted-bridge corpus generator."""

import json
import tempfile
from pathlib import Path

import pytest

from dar_rerank.corpus import load_jsonl
from dar_rerank.errors import ConfigError
from dar_rerank.retrieval import dpr_training_pairs, load_passages
from dar_rerank.synthetic import SyntheticSpec, bridge_sentence, generate_synthetic, overlap_report


def small_spec(**kw) -> SyntheticSpec:
    return SyntheticSpec(**{"n_keys": 60, "n_filler": 40, "train": 20, "dev": 5, "test": 5, "k": 4,
                            "noise_passages": 10, **kw})


class TestSpec:

    def test_vocabulary_too_small(self):
        with pytest.raises(ConfigError, match="too small"):
            SyntheticSpec(n_keys=12, k=8).validate()

    def test_probability_range(self):
        with pytest.raises(ConfigError):
            small_spec(withheld=1.5).validate()

    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            SyntheticSpec.from_dict({"n_keys": 60, "colour": "red"})

    def test_load_kv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "synthetic.conf"
            path.write_text("# planted bridges\nn_keys = 90\nk=5\nwithheld=0.5\n")
            spec = SyntheticSpec.load(path)
        assert (spec.n_keys, spec.k, spec.withheld) == (90, 5, 0.5)

    def test_load_missing(self):
        with pytest.raises(ConfigError):
            SyntheticSpec.load("/nonexistent/spec.conf")


class TestGenerator:

    def setup_method(self):
        self.corpus = generate_synthetic(small_spec())

    def test_question_shape(self):
        for split, n in (("train", 20), ("dev", 5), ("test", 5)):
            dataset = self.corpus.splits[split]
            assert len(dataset) == n
            for ex in dataset:
                assert ex.k == 4
                assert sum(c.is_positive for c in ex.candidates) == 1

    def test_inline_bridge_is_negative(self):
        for ex in self.corpus.splits["train"]:
            key = self.corpus.keys_of[ex.qid]
            bridge = bridge_sentence(self.corpus.alias_of[key], key)
            matches = [c for c in ex.candidates if c.text == bridge]
            assert len(matches) == 1
            assert matches[0].label == -1
            assert self.corpus.roles[ex.qid][matches[0].id] == "bridge"

    def test_answer_never_names_the_key(self):
        assert overlap_report(self.corpus)["positive_candidates_with_key"] == 0
        for ex in self.corpus.splits["dev"]:
            key = self.corpus.keys_of[ex.qid]
            positive = next(c for c in ex.candidates if c.is_positive)
            assert key not in positive.text.split()
            assert key in ex.question.split()

    def test_keys_disjoint_across_splits(self):
        used = {s: {self.corpus.keys_of[ex.qid] for ex in d} for s, d in self.corpus.splits.items()}
        assert not used["train"] & used["test"]
        assert not used["train"] & used["dev"]
        assert not used["dev"] & used["test"]

    def test_alias_map_is_a_bijection(self):
        assert len(set(self.corpus.alias_of.values())) == len(self.corpus.alias_of) == 60

    def test_bridge_passages_contain_the_answer(self):
        pairs = dpr_training_pairs(self.corpus.splits["train"], self.corpus.passages)
        assert {p.qid for p in pairs} == {ex.qid for ex in self.corpus.splits["train"]}

    def test_passage_count(self):
        assert len(self.corpus.passages) == 30 + 10


class TestWithheld:

    def test_all_withheld(self):
        corpus = generate_synthetic(small_spec(withheld=1.0))
        for qid, roles in corpus.roles.items():
            assert "bridge" not in roles.values()
        bridges = [p for p in corpus.passages if " is also called " in p.text]
        assert len(bridges) >= 30

    def test_none_withheld(self):
        corpus = generate_synthetic(small_spec(withheld=0.0))
        assert all("bridge" in roles.values() for roles in corpus.roles.values())

    def test_no_bridges_at_all(self):
        corpus = generate_synthetic(small_spec(bridge_prob=0.0, n_decoys=0, noise_passages=0))
        assert corpus.passages == []
        assert all(set(roles.values()) <= {"positive", "distractor"} for roles in corpus.roles.values())


class TestWrite:

    def test_deterministic_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            a = generate_synthetic(small_spec(seed=4)).write(Path(tmp) / "a")
            b = generate_synthetic(small_spec(seed=4)).write(Path(tmp) / "b")
            c = generate_synthetic(small_spec(seed=5)).write(Path(tmp) / "c")
        assert a["sha256"] == b["sha256"]
        assert a["sha256"]["train.jsonl"] != c["sha256"]["train.jsonl"]

    def test_files_load_back(self):
        corpus = generate_synthetic(small_spec())
        with tempfile.TemporaryDirectory() as tmp:
            manifest = corpus.write(tmp)
            train = load_jsonl(Path(tmp) / "train.jsonl")
            passages = load_passages(Path(tmp) / "passages.jsonl")
            on_disk = json.loads((Path(tmp) / "MANIFEST.json").read_text())
            report = json.loads((Path(tmp) / "overlap_report.json").read_text())
        assert [e.to_dict() for e in train] == [e.to_dict() for e in corpus.splits["train"]]
        assert passages == corpus.passages
        assert on_disk == manifest
        assert manifest["questions"] == {"train": 20, "dev": 5, "test": 5}
        assert set(report["mean_overlap"]) == {"positive", "distractor", "bridge", "decoy"}
