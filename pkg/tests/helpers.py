"""Small shared builders for model tests."""

from dar_rerank.corpus import Candidate, QAExample
from dar_rerank.encoder import EncoderConfig, Vocabulary

TEXTS = [
    "what disease does the heart get",
    "heart disease is also called cvd",
    "cvd is the leading cause of death",
    "the moon is made of rock",
    "rivers flow into the sea",
    "bananas are yellow fruit",
]


def tiny_encoder() -> EncoderConfig:
    return EncoderConfig(layers=1, heads=2, d=8, ff=16, max_len=48, seed=0)


def tiny_vocab(*extra: str) -> Vocabulary:
    return Vocabulary.build(TEXTS + list(extra))


def question(qid: str = "q1", labels=(1, -1, -1), texts=None) -> QAExample:
    texts = texts or TEXTS[1:1 + len(labels)]
    return QAExample(qid, TEXTS[0], [Candidate(f"{qid}-c{i}", t, l) for i, (t, l) in enumerate(zip(texts, labels))])
