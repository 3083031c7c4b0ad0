"""Rerankers over a question's candidate list, plus the model registry."""

from __future__ import annotations

import logging
from pathlib import Path

from dar_rerank.autograd.checkpoint import load_container
from dar_rerank.encoder.transformer import EncoderConfig
from dar_rerank.encoder.vocab import Vocabulary
from dar_rerank.errors import ConfigError
from dar_rerank.rankers.base import (
    POSITIVE,
    ClassifierHead,
    ModelOptions,
    RankedList,
    Reranker,
    read_predictions,
    rerank,
    write_predictions,
)
from dar_rerank.rankers.pointwise import AcmModel, PcModel, SbcModel, sbc_loss, sbc_score
from dar_rerank.rankers.asr import AsrModel, asc_label, asr_forward, asr_loss, asr_rank_supports
from dar_rerank.rankers.dar import (
    DarModel,
    SupportSelection,
    TrainVariant,
    ar_loss,
    dar_forward,
    dar_infer,
    dar_train_step,
    select_support_train,
    sr_ranking_loss,
)

logger = logging.getLogger(__name__)

MODEL_CLASSES: dict[str, type[Reranker]] = {
    "sbc": SbcModel,
    "pc": PcModel,
    "acm": AcmModel,
    "asr": AsrModel,
    "dar": DarModel,
}

# Config-level model kinds: (class key, option overrides).
MODEL_KINDS: dict[str, tuple[str, dict]] = {
    "sbc": ("sbc", {}),
    "pc": ("pc", {}),
    "acm": ("acm", {}),
    "asr": ("asr", {"support_mode": "sbc"}),
    "asr-rank": ("asr", {"support_mode": "asc"}),
    "dar": ("dar", {}),
    "dar-dpr": ("dar", {}),
}

# Kinds that order candidates with a frozen SBC model.
NEEDS_SUPPORT_RANKER = ("pc", "acm", "asr", "asr-rank")


def build_model(kind: str, vocab: Vocabulary, encoder_config: EncoderConfig,
                options: ModelOptions | None = None, seed: int = 0) -> Reranker:
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    key, overrides = MODEL_KINDS[kind]
    options = ModelOptions.from_dict({**(options or ModelOptions()).to_dict(), **overrides})
    return MODEL_CLASSES[key](vocab, encoder_config, options, seed=seed)


def load_model(path: str | Path, kind: str | None = None) -> Reranker:
    """
    Rebuild a reranker from its checkpoint. Without `kind` the stored
    options (ASR support mode included) are used as saved; an explicit
    `kind` may switch inference mode within the same class (asr -> asr-rank).
    """
    container = load_container(path)
    header = container.header
    stored = container.model_kind
    if stored not in MODEL_CLASSES:
        raise ConfigError(f"{path}: checkpoint of kind {stored!r} is not a reranker")
    if kind is not None and MODEL_KINDS.get(kind, ("",))[0] != stored:
        raise ConfigError(f"{path}: checkpoint holds a {stored} model, cannot load it as {kind}")

    vocab = Vocabulary(tokens=list(header["vocab"]))
    options = ModelOptions.from_dict(header.get("options", {}))
    encoder_config, seed = EncoderConfig.from_dict(header["encoder"]), int(header.get("seed", 0))
    if kind is None:
        model = MODEL_CLASSES[stored](vocab, encoder_config, options, seed=seed)
    else:
        model = build_model(kind, vocab, encoder_config, options, seed=seed)
    model.load_state(container.entries)

    ranker = header.get("support_ranker")
    if ranker is not None:
        sbc = SbcModel(vocab, EncoderConfig.from_dict(ranker["encoder"]))
        sbc.load_state({k[len("sbc."):]: v for k, v in container.entries.items() if k.startswith("sbc.")})
        model.attach_support_ranker(sbc)
    logger.info("loaded %s model from %s (%d parameters)", model.kind, path, model.num_parameters())
    return model


__all__ = [
    "POSITIVE",
    "ClassifierHead",
    "ModelOptions",
    "RankedList",
    "Reranker",
    "rerank",
    "read_predictions",
    "write_predictions",
    "SbcModel",
    "PcModel",
    "AcmModel",
    "AsrModel",
    "DarModel",
    "SupportSelection",
    "TrainVariant",
    "sbc_score",
    "sbc_loss",
    "asc_label",
    "asr_forward",
    "asr_loss",
    "asr_rank_supports",
    "dar_forward",
    "select_support_train",
    "sr_ranking_loss",
    "ar_loss",
    "dar_train_step",
    "dar_infer",
    "MODEL_CLASSES",
    "MODEL_KINDS",
    "NEEDS_SUPPORT_RANKER",
    "build_model",
    "load_model",
]
