"""Secondary dense retrieval: dual encoder, exact index, support sentences."""

from dar_rerank.retrieval.encoder import DualEncoder, QueryPassagePair, dpr_ranking_loss
from dar_rerank.retrieval.index import (
    Passage,
    RetrievalIndex,
    SearchHit,
    build_index,
    dump_passages,
    load_passages,
)
from dar_rerank.retrieval.support import (
    SupportSentence,
    dpr_training_pairs,
    positive_passages,
    retrieve_supports,
    select_support_sentences,
)

__all__ = [
    "DualEncoder",
    "QueryPassagePair",
    "dpr_ranking_loss",
    "Passage",
    "RetrievalIndex",
    "SearchHit",
    "build_index",
    "dump_passages",
    "load_passages",
    "SupportSentence",
    "dpr_training_pairs",
    "positive_passages",
    "retrieve_supports",
    "select_support_sentences",
]
