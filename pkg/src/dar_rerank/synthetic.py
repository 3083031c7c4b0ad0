"""
Planted-bridge corpus generator.

Every question mentions a hidden key word K. Its correct answer mentions
only the alias A(K), never K itself, and each distractor mentions the
alias of some other key. The alias map is a random bijection fixed by the
seed and never stated in a question, so a ranker that looks at (q, c)
alone cannot tell which alias belongs to K. A bridge sentence
"A(K) is also called K" makes the link explicit. It sits among the
candidates (labeled negative) or, for the withheld fraction, only in the
passage corpus where secondary retrieval can find it. Decoy bridges name
the alias and key of a distractor.

Keys are partitioned across splits, so no test alias pair is seen in
training: a model has to learn to read the bridge, not memorize it.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from dar_rerank.config import read_kv
from dar_rerank.corpus import Candidate, Dataset, QAExample, dump_jsonl
from dar_rerank.encoder.vocab import split_words
from dar_rerank.errors import ConfigError
from dar_rerank.retrieval.index import Passage, dump_passages

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
ROLES = ("positive", "distractor", "bridge", "decoy")

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]


@dataclass
class SyntheticSpec:
    n_keys: int = 240
    n_filler: int = 300
    train: int = 2000
    dev: int = 200
    test: int = 200
    k: int = 8
    bridge_prob: float = 1.0
    withheld: float = 0.0
    n_decoys: int = 1
    noise_passages: int = 200
    seed: int = 0

    def validate(self) -> None:
        for name in ("bridge_prob", "withheld"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name}={value} must lie in [0, 1]")
        if self.k < 2:
            raise ConfigError(f"k={self.k}: every question needs a positive and a negative candidate")
        for name in ("train", "dev", "test", "n_decoys", "noise_passages"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}={getattr(self, name)} must be non-negative")
        per_split = self.n_keys // len(SPLITS)
        if per_split < self.k:
            raise ConfigError(
                f"vocabulary too small: {self.n_keys} keys give {per_split} per split, "
                f"but k={self.k} needs {self.k} distinct keys per question")
        if self.n_filler < 8:
            raise ConfigError(f"vocabulary too small: n_filler={self.n_filler} < 8")
        needed = 2 * self.n_keys + self.n_filler
        if needed > len(_SYLLABLES) ** 3:
            raise ConfigError(f"vocabulary too large: {needed} words requested")

    def questions(self, split: str) -> int:
        return getattr(self, split)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        valid = set(cls.__dataclass_fields__)
        unknown = set(d) - valid
        if unknown:
            raise ConfigError(f"unknown synthetic spec field(s): {sorted(unknown)}")
        defaults = cls()
        try:
            spec = cls(**{k: type(getattr(defaults, k))(v) for k, v in d.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synthetic spec value: {exc}") from None
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticSpec":
        """key=value text, or JSON when the file ends in .json."""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"synthetic spec {path} does not exist")
        if path.suffix == ".json":
            return cls.from_dict(json.loads(path.read_text()))
        return cls.from_dict(read_kv(path.read_text()))


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    splits: dict[str, Dataset]
    passages: list[Passage]
    alias_of: dict[str, str]
    keys_of: dict[str, str] = field(default_factory=dict)
    roles: dict[str, dict[str, str]] = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> dict:
        """Write splits, passages, MANIFEST.json and overlap_report.json; return the manifest."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        for split, dataset in self.splits.items():
            dump_jsonl(dataset, out / f"{split}.jsonl")
            files[f"{split}.jsonl"] = out / f"{split}.jsonl"
        dump_passages(self.passages, out / "passages.jsonl")
        files["passages.jsonl"] = out / "passages.jsonl"
        roles_path = out / "roles.json"
        roles_path.write_text(json.dumps(self.roles, indent=2, sort_keys=True))
        files["roles.json"] = roles_path
        report_path = out / "overlap_report.json"
        report_path.write_text(json.dumps(overlap_report(self), indent=2, sort_keys=True))
        files["overlap_report.json"] = report_path

        manifest = {
            "spec": self.spec.to_dict(),
            "questions": {s: len(d) for s, d in self.splits.items()},
            "passages": len(self.passages),
            "sha256": {name: hashlib.sha256(p.read_bytes()).hexdigest() for name, p in sorted(files.items())},
        }
        (out / "MANIFEST.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return manifest


def _words(rng: np.random.Generator, n: int) -> list[str]:
    base = len(_SYLLABLES)
    codes = rng.choice(base ** 3, size=n, replace=False)
    return [_SYLLABLES[c // base ** 2] + _SYLLABLES[(c // base) % base] + _SYLLABLES[c % base] for c in codes]


def _filler(rng: np.random.Generator, filler: list[str], n: int) -> str:
    return " ".join(filler[i] for i in rng.choice(len(filler), size=n, replace=False))


def bridge_sentence(alias: str, key: str) -> str:
    return f"{alias} is also called {key} ."


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    words = _words(rng, 2 * spec.n_keys + spec.n_filler)
    keys = words[:spec.n_keys]
    aliases = words[spec.n_keys:2 * spec.n_keys]
    filler = words[2 * spec.n_keys:]
    alias_of = dict(zip(keys, (aliases[i] for i in rng.permutation(spec.n_keys))))

    per_split = spec.n_keys // len(SPLITS)
    shuffled = [keys[i] for i in rng.permutation(spec.n_keys)]
    pools = {s: shuffled[i * per_split:(i + 1) * per_split] for i, s in enumerate(SPLITS)}

    splits: dict[str, Dataset] = {}
    roles: dict[str, dict[str, str]] = {}
    keys_of: dict[str, str] = {}
    bridge_passages: list[str] = []
    for split in SPLITS:
        pool = pools[split]
        dataset = []
        for i in range(spec.questions(split)):
            qid = f"{split}-{i:05d}"
            picks = [pool[j] for j in rng.choice(len(pool), size=spec.k, replace=False)]
            key, others = picks[0], picks[1:]
            keys_of[qid] = key
            question = f"which {_filler(rng, filler, 2)} does {key} have ?"

            rows: list[tuple[str, int, str]] = [
                (f"{alias_of[key]} has {_filler(rng, filler, 3)} .", 1, "positive")]
            has_bridge = rng.random() < spec.bridge_prob
            withheld = has_bridge and rng.random() < spec.withheld
            if has_bridge:
                # the passage also holds the answer, so it is positive for (q, t+)
                bridge_passages.append(bridge_sentence(alias_of[key], key) + " " + rows[0][0])
                if not withheld:
                    rows.append((bridge_sentence(alias_of[key], key), -1, "bridge"))
            slots = spec.k - len(rows)
            n_decoys = min(spec.n_decoys, max(0, slots - 1))
            for other in others[:n_decoys]:
                rows.append((bridge_sentence(alias_of[other], other), -1, "decoy"))
            for other in others[n_decoys:n_decoys + spec.k - len(rows)]:
                rows.append((f"{alias_of[other]} has {_filler(rng, filler, 3)} .", -1, "distractor"))

            order = rng.permutation(len(rows))
            candidates, qroles = [], {}
            for j, r in enumerate(order):
                text, label, role = rows[r]
                cid = f"{qid}-c{j}"
                candidates.append(Candidate(id=cid, text=text, label=label))
                qroles[cid] = role
            dataset.append(QAExample(qid=qid, question=question, candidates=candidates))
            roles[qid] = qroles
        splits[split] = dataset

    passages = []
    for head in bridge_passages:
        extra = " ".join(f"{_filler(rng, filler, 4)} ." for _ in range(int(rng.integers(0, 4))))
        text = (head + " " + extra).strip()
        passages.append(Passage.from_text(f"p{len(passages):06d}", text))
    for _ in range(spec.noise_passages):
        alias = aliases[int(rng.integers(spec.n_keys))]
        text = f"{alias} has {_filler(rng, filler, 3)} . {_filler(rng, filler, 4)} ."
        passages.append(Passage.from_text(f"p{len(passages):06d}", text))

    logger.info("generated %s questions and %d passages (seed %d)",
                {s: len(d) for s, d in splits.items()}, len(passages), spec.seed)
    return SyntheticCorpus(spec=spec, splits=splits, passages=passages, alias_of=alias_of,
                           keys_of=keys_of, roles=roles)


def _overlap(question: str, text: str) -> int:
    q = {w for w in split_words(question) if w.isalnum()}
    return len(q & {w for w in split_words(text) if w.isalnum()})


def overlap_report(corpus: SyntheticCorpus) -> dict:
    """
    Mean question/candidate token overlap per role, plus P@1 of the
    overlap-argmax ranker over all candidates and over alias-bearing
    candidates only (ties go to the first candidate).
    """
    key_words = set(corpus.alias_of)
    per_role: dict[str, list[int]] = {r: [] for r in ROLES}
    top_all, top_alias, chance, key_leaks = [], [], [], 0
    for dataset in corpus.splits.values():
        for ex in dataset:
            roles = corpus.roles[ex.qid]
            overlaps = [_overlap(ex.question, c.text) for c in ex.candidates]
            for c, o in zip(ex.candidates, overlaps):
                per_role[roles[c.id]].append(o)
                if c.is_positive and key_words & set(split_words(c.text)):
                    key_leaks += 1
            top_all.append(1.0 if ex.candidates[int(np.argmax(overlaps))].is_positive else 0.0)
            alias_idx = [i for i, c in enumerate(ex.candidates) if roles[c.id] in ("positive", "distractor")]
            best = max(alias_idx, key=lambda i: (overlaps[i], -i))
            top_alias.append(1.0 if ex.candidates[best].is_positive else 0.0)
            chance.append(1.0 / len(alias_idx))
    return {
        "mean_overlap": {r: (float(np.mean(v)) if v else None) for r, v in per_role.items()},
        "overlap_argmax_p_at_1": float(np.mean(top_all)) if top_all else None,
        "overlap_argmax_p_at_1_alias_only": float(np.mean(top_alias)) if top_alias else None,
        "chance_alias_only": float(np.mean(chance)) if chance else None,
        "positive_candidates_with_key": key_leaks,
    }
