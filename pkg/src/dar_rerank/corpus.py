"""
Question/candidate data model and dataset IO.

Two on-disk layouts are read:
- TSV, either five columns (question-id, question, candidate-id,
  candidate, label) or the WikiQA distribution layout with its header
  (QuestionID, Question, DocumentID, DocumentTitle, SentenceID, Sentence,
  Label). Labels are 0/1 and map to -1/+1.
- JSONL, one question per line:
  {"id", "question", "candidates": [{"id", "text", "label"}]}; a missing
  or null label marks an unlabeled (retrieved) candidate.

Retrieved supports travel in their own JSONL file, one line per
(question, target, sentence).
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from dar_rerank.errors import DataError

logger = logging.getLogger(__name__)

LABELED = "labeled"
RETRIEVED = "retrieved"

MODES = ("all", "no-all-minus", "clean")

WIKIQA_HEADER = ["QuestionID", "Question", "DocumentID", "DocumentTitle", "SentenceID", "Sentence", "Label"]


@dataclass(frozen=True)
class Candidate:
    """An answer candidate or a retrieved support sentence."""

    id: str
    text: str
    label: int | None = None
    source: str = LABELED

    def __post_init__(self):
        if self.label not in (None, 1, -1):
            raise DataError(f"candidate {self.id}: label must be +1, -1 or None, got {self.label!r}")
        if (self.label is None) != (self.source == RETRIEVED):
            raise DataError(f"candidate {self.id}: labeled iff from the primary dataset")

    @property
    def is_positive(self) -> bool:
        return self.label == 1

    @classmethod
    def retrieved(cls, id: str, text: str) -> "Candidate":
        return cls(id=id, text=text, label=None, source=RETRIEVED)


@dataclass
class QAExample:
    """A question with its ordered candidate list C_k."""

    qid: str
    question: str
    candidates: list[Candidate] = field(default_factory=list)

    def __post_init__(self):
        if not self.candidates:
            raise DataError(f"question {self.qid} has no candidates")
        seen = set()
        for c in self.candidates:
            if c.id in seen:
                raise DataError(f"question {self.qid}: duplicate candidate id {c.id}")
            seen.add(c.id)

    @property
    def k(self) -> int:
        return len(self.candidates)

    @property
    def labels(self) -> list[int]:
        return [c.label if c.label is not None else -1 for c in self.candidates]

    @property
    def has_positive(self) -> bool:
        return any(c.is_positive for c in self.candidates)

    @property
    def all_positive(self) -> bool:
        return all(c.is_positive for c in self.candidates)

    def to_dict(self) -> dict:
        return {
            "id": self.qid,
            "question": self.question,
            "candidates": [{"id": c.id, "text": c.text, "label": c.label} for c in self.candidates],
        }


Dataset = list[QAExample]


def filter_mode(dataset: Iterable[QAExample], mode: str = "all") -> Dataset:
    """
    all            keep everything
    no-all-minus   drop questions whose candidates are all negative
    clean          additionally drop questions whose candidates are all positive
    """
    if mode not in MODES:
        raise DataError(f"unknown evaluation mode {mode!r}; expected one of {MODES}")
    kept = []
    for ex in dataset:
        if mode != "all" and not ex.has_positive:
            continue
        if mode == "clean" and ex.all_positive:
            continue
        kept.append(ex)
    return kept


def _label_from_01(raw: str, path, line_no: int) -> int:
    raw = raw.strip()
    if raw not in ("0", "1"):
        raise DataError(f"{path}:{line_no}: label must be 0 or 1, got {raw!r}")
    return 1 if raw == "1" else -1


def _group(rows: list[tuple[str, str, str, str, int]]) -> Dataset:
    questions: dict[str, str] = {}
    grouped: dict[str, list[Candidate]] = defaultdict(list)
    for qid, question, cid, text, label in rows:
        questions.setdefault(qid, question)
        grouped[qid].append(Candidate(id=cid, text=text, label=label))
    return [QAExample(qid=qid, question=questions[qid], candidates=grouped[qid]) for qid in questions]


def load_tsv(path: str | Path) -> Dataset:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = []
    wikiqa = bool(lines) and lines[0].split("\t") == WIKIQA_HEADER
    for line_no, line in enumerate(lines[1:] if wikiqa else lines, start=2 if wikiqa else 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if wikiqa:
            if len(cols) != 7:
                raise DataError(f"{path}:{line_no}: expected 7 WikiQA columns, got {len(cols)}")
            qid, question, _, _, cid, text, label = cols
        else:
            if len(cols) != 5:
                raise DataError(f"{path}:{line_no}: expected 5 columns, got {len(cols)}")
            qid, question, cid, text, label = cols
        if not text.strip():
            logger.warning("%s:%d: empty candidate %s of question %s skipped", path, line_no, cid, qid)
            continue
        rows.append((qid, question, cid, text, _label_from_01(label, path, line_no)))
    return _group(rows)


def dump_tsv(dataset: Iterable[QAExample], path: str | Path) -> None:
    """Write the WikiQA distribution layout (header + 7 columns)."""
    out = ["\t".join(WIKIQA_HEADER)]
    for ex in dataset:
        for c in ex.candidates:
            label = "1" if c.label == 1 else "0"
            out.append("\t".join([ex.qid, ex.question, f"D{ex.qid}", "synthetic", c.id, c.text, label]))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_jsonl(path: str | Path) -> Dataset:
    dataset = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            qid, question = str(rec["id"]), rec["question"]
            raw_cands = rec.get("candidates", [])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{line_no}: malformed record ({exc})") from None
        if not raw_cands:
            logger.warning("%s:%d: question %s has no candidates; skipped", path, line_no, qid)
            continue
        candidates = []
        for rc in raw_cands:
            try:
                label = rc.get("label")
                cand = Candidate.retrieved(str(rc["id"]), rc["text"]) if label is None \
                    else Candidate(str(rc["id"]), rc["text"], int(label))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: malformed candidate ({exc})") from None
            candidates.append(cand)
        dataset.append(QAExample(qid=qid, question=question, candidates=candidates))
    return dataset


def dump_jsonl(dataset: Iterable[QAExample], path: str | Path) -> None:
    lines = [json.dumps(ex.to_dict(), sort_keys=True) for ex in dataset]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_dataset(path: str | Path) -> Dataset:
    """Dispatch on suffix: .jsonl is JSONL, anything else TSV."""
    return load_jsonl(path) if str(path).endswith(".jsonl") else load_tsv(path)


# ── Retrieved support files ──────────────────────────────────────────────────

SupportMap = dict[str, dict[str, list[Candidate]]]


def dump_supports(records: Iterable[dict], path: str | Path) -> None:
    """Lines of {"qid", "target_id", "sentence", "score"}."""
    lines = [json.dumps({k: r[k] for k in ("qid", "target_id", "sentence", "score")}, sort_keys=True)
             for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_supports(path: str | Path) -> SupportMap:
    """question id -> target id -> retrieved support candidates, in file order."""
    supports: SupportMap = defaultdict(lambda: defaultdict(list))
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            qid, tid, sentence = str(rec["qid"]), str(rec["target_id"]), rec["sentence"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{line_no}: malformed support record ({exc})") from None
        bucket = supports[qid][tid]
        bucket.append(Candidate.retrieved(f"{qid}:{tid}:s{len(bucket)}", sentence))
    return {q: dict(t) for q, t in supports.items()}
