"""
High-level flows behind the CLI: train, evaluate, index, retrieve,
compare two prediction dumps, generate the synthetic corpus.

Every flow takes an ExperimentConfig and writes its echo next to what it
produces, so a run can be repeated from its own outputs.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from dar_rerank.config import ExperimentConfig
from dar_rerank.corpus import Dataset, QAExample, SupportMap, dump_supports, filter_mode, load_dataset, load_supports
from dar_rerank.encoder.vocab import Vocabulary
from dar_rerank.errors import ConfigError, DataError
from dar_rerank.evaluation import (
    MetricsReport,
    OutcomeVector,
    SignificanceResult,
    evaluate_rankings,
    exact_randomization_test,
    mean_average_precision,
    randomization_test,
)
from dar_rerank.rankers import NEEDS_SUPPORT_RANKER, ModelOptions, RankedList, Reranker, build_model, load_model
from dar_rerank.rankers import read_predictions, write_predictions
from dar_rerank.retrieval import (
    DualEncoder,
    Passage,
    RetrievalIndex,
    build_index,
    dpr_training_pairs,
    load_passages,
    positive_passages,
    retrieve_supports,
)
from dar_rerank.segmentation import normalize_text
from dar_rerank.synthetic import SyntheticSpec, generate_synthetic
from dar_rerank.training import Trainer, TrainingConfig, TrainingLog

logger = logging.getLogger(__name__)


def log_path(checkpoint: str | Path) -> Path:
    return Path(f"{checkpoint}.log.json")


def state_path(checkpoint: str | Path) -> Path:
    """Resumable training state, rewritten after every epoch."""
    return Path(f"{checkpoint}.state")


def checkpoint_path(cfg: ExperimentConfig) -> str:
    """Where `train` writes: the dual encoder prefers paths.dpr_checkpoint."""
    if cfg.model == "dpr" and cfg.paths.dpr_checkpoint:
        return cfg.paths.dpr_checkpoint
    return cfg.paths.checkpoint


def load_split(path: str, mode: str = "all", what: str = "dataset") -> Dataset:
    if not path:
        raise ConfigError(f"no {what} path configured")
    if not Path(path).exists():
        raise DataError(f"{what} file {path} does not exist")
    return filter_mode(load_dataset(path), mode)


def build_vocabulary(cfg: ExperimentConfig, texts: Sequence[str]) -> Vocabulary:
    """
    Load `paths.vocab` when it exists, otherwise build from `texts` (and
    save there if a path is configured). Only texts are used, never labels.
    """
    if cfg.paths.vocab and Path(cfg.paths.vocab).exists():
        return Vocabulary.load(cfg.paths.vocab)
    vocab = Vocabulary.build(texts)
    if cfg.paths.vocab:
        vocab.save(cfg.paths.vocab)
    logger.info("vocabulary of %d tokens", len(vocab))
    return vocab


def dataset_texts(*datasets: Sequence[QAExample]) -> list[str]:
    texts = []
    for dataset in datasets:
        for ex in dataset:
            texts.append(ex.question)
            texts.extend(c.text for c in ex.candidates)
    return texts


def training_config(cfg: ExperimentConfig) -> TrainingConfig:
    return TrainingConfig(epochs=cfg.epochs, patience=cfg.patience, batch_size=cfg.batch_size,
                          lr=cfg.optimizer.lr, seed=cfg.seed)


def _trainer(model, cfg: ExperimentConfig, metric: str, resume: str | Path | None = None) -> Trainer:
    trainer = Trainer(model, training_config(cfg), metric=metric, config_echo=cfg.to_dict())
    trainer.state.beta1 = cfg.optimizer.beta1
    trainer.state.beta2 = cfg.optimizer.beta2
    trainer.state.epsilon = cfg.optimizer.epsilon
    if resume is not None:
        if not Path(resume).exists():
            raise DataError(f"training state {resume} does not exist")
        trainer.load_state(resume)
    return trainer


def _supports_for(cfg: ExperimentConfig, kind: str) -> SupportMap | None:
    if kind != "dar-dpr":
        return None
    if not cfg.paths.supports:
        raise ConfigError("dar-dpr needs paths.supports (run `dar-rerank retrieve` first)")
    if not Path(cfg.paths.supports).exists():
        raise DataError(f"support file {cfg.paths.supports} does not exist")
    return load_supports(cfg.paths.supports)


# ── Prediction ───────────────────────────────────────────────────────────────

def predict(model: Reranker, dataset: Sequence[QAExample],
            supports: Mapping[str, Mapping] | None = None) -> dict[str, RankedList]:
    supports = supports or {}
    return {ex.qid: model.rank(ex, supports.get(ex.qid)) for ex in dataset}


def dev_map(model: Reranker, dataset: Sequence[QAExample], supports: Mapping | None = None) -> float:
    return mean_average_precision(predict(model, dataset, supports).values())


# ── Training ─────────────────────────────────────────────────────────────────

def train(cfg: ExperimentConfig, resume: str | Path | None = None) -> tuple[Reranker | DualEncoder, TrainingLog]:
    """
    Train the configured model, save its best checkpoint and training log.
    `resume` continues from a state file written by an earlier run.
    """
    cfg.validate()
    if cfg.model == "dpr":
        return train_dual_encoder(cfg, resume)

    train_set = load_split(cfg.paths.train, cfg.mode, "training set")
    dev_set = load_split(cfg.paths.dev, cfg.mode, "dev set")
    test_set = load_split(cfg.paths.test, "all", "test set") if cfg.paths.test else []
    vocab = build_vocabulary(cfg, dataset_texts(train_set, dev_set, test_set))
    supports = _supports_for(cfg, cfg.model)

    options = ModelOptions(k=cfg.k, asc_weight=cfg.asc_weight, variant=cfg.variant)
    model = build_model(cfg.model, vocab, cfg.encoder, options, seed=cfg.seed)
    model.check_dataset(train_set)
    model.check_dataset(dev_set)
    if cfg.model in NEEDS_SUPPORT_RANKER and cfg.paths.sbc_checkpoint:
        model.attach_support_ranker(load_model(cfg.paths.sbc_checkpoint, "sbc"))
    logger.info("training %s: %d parameters, %d questions", cfg.model, model.num_parameters(), len(train_set))

    trainer = _trainer(model, cfg, "dev_map", resume)
    log = trainer.fit(train_set, lambda: dev_map(model, dev_set, supports), supports=supports,
                      state_path=state_path(cfg.paths.checkpoint))
    model.save(cfg.paths.checkpoint, config_echo=cfg.to_dict())
    log.save(log_path(cfg.paths.checkpoint))
    return model, log


def passage_mrr(encoder: DualEncoder, dataset: Sequence[QAExample], passages: Sequence[Passage],
                batch_size: int = 64) -> float:
    """MRR of the first positive passage for every (q, t⁺) with at least one."""
    matrix = encoder.encode_passages([p.text for p in passages], batch_size=batch_size)
    index = RetrievalIndex(passages, matrix)
    normalized = [normalize_text(p.text) for p in passages]
    rrs = []
    for ex in dataset:
        texts = {c.id: c.text for c in ex.candidates}
        for cid, hits in positive_passages(ex, passages, normalized).items():
            wanted = {p.id for p in hits}
            ranked = index.search(encoder.encode_query(ex.question, texts[cid]), len(index))
            rank = next(i for i, h in enumerate(ranked, start=1) if h.passage.id in wanted)
            rrs.append(1.0 / rank)
    if not rrs:
        raise DataError("no dev question has a positive passage in the corpus")
    return float(np.mean(rrs))


def train_dual_encoder(cfg: ExperimentConfig, resume: str | Path | None = None) -> tuple[DualEncoder, TrainingLog]:
    train_set = load_split(cfg.paths.train, cfg.mode, "training set")
    dev_set = load_split(cfg.paths.dev, cfg.mode, "dev set")
    if not cfg.paths.passages:
        raise ConfigError("dpr training needs paths.passages")
    passages = load_passages(cfg.paths.passages)
    test_set = load_split(cfg.paths.test, "all", "test set") if cfg.paths.test else []
    vocab = build_vocabulary(cfg, dataset_texts(train_set, dev_set, test_set) + [p.text for p in passages])

    pairs = dpr_training_pairs(train_set, passages)
    if not pairs:
        raise DataError("no training question has a positive passage in the corpus")
    encoder = DualEncoder(vocab, cfg.encoder, seed=cfg.seed)
    logger.info("training dpr: %d parameters, %d query/passage pairs", encoder.num_parameters(), len(pairs))
    target = checkpoint_path(cfg)
    trainer = _trainer(encoder, cfg, "dev_passage_mrr", resume)
    log = trainer.fit(pairs, lambda: passage_mrr(encoder, dev_set, passages, cfg.retrieval.batch_size),
                      state_path=state_path(target))
    encoder.save(target, config_echo=cfg.to_dict())
    log.save(log_path(target))
    return encoder, log


# ── Evaluation ───────────────────────────────────────────────────────────────

def evaluate(cfg: ExperimentConfig, dataset_path: str | None = None, baseline: str | None = None,
             out_dir: str | Path | None = None) -> MetricsReport:
    """
    Rank every question of the evaluation set and write predictions.tsv,
    report.json and report.kv into `out_dir`. Checkpoints and datasets
    are only read.
    """
    model = load_model(cfg.paths.checkpoint, kind=cfg.model if cfg.model != "dpr" else None)
    dataset = load_split(dataset_path or cfg.paths.test, cfg.mode, "evaluation set")
    model.check_dataset(dataset)
    supports = _supports_for(cfg, cfg.model)
    rankings = predict(model, dataset, supports)

    base = MetricsReport.load(baseline) if baseline else None
    report = evaluate_rankings(rankings, model=cfg.model, mode=cfg.mode, config=cfg.to_dict(), baseline=base)
    out = Path(out_dir or cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(rankings.items(), out / "predictions.tsv")
    report.save(out / "report.json")
    report.save_kv(out / "report.kv")
    return report


# ── Retrieval ────────────────────────────────────────────────────────────────

def _dpr_checkpoint(cfg: ExperimentConfig) -> str:
    path = cfg.paths.dpr_checkpoint or cfg.paths.checkpoint
    if not Path(path).exists():
        raise DataError(f"dual-encoder checkpoint {path} does not exist; train it with model=dpr")
    return path


def index(cfg: ExperimentConfig) -> RetrievalIndex:
    encoder = DualEncoder.load(_dpr_checkpoint(cfg))
    if not cfg.paths.passages or not cfg.paths.index:
        raise ConfigError("indexing needs paths.passages and paths.index")
    idx = build_index(load_passages(cfg.paths.passages), encoder, cfg.retrieval.batch_size,
                      header={"config": cfg.to_dict()})
    idx.save(cfg.paths.index)
    return idx


def retrieve(cfg: ExperimentConfig, dataset_paths: Sequence[str]) -> list[dict]:
    """Write the support file for every (q, t) of the given datasets."""
    if not cfg.paths.supports:
        raise ConfigError("retrieval needs paths.supports as its output file")
    encoder = DualEncoder.load(_dpr_checkpoint(cfg))
    idx = RetrievalIndex.load(cfg.paths.index)
    records = []
    for path in dataset_paths:
        records.extend(retrieve_supports(load_split(path, "all"), idx, encoder,
                                         m=cfg.retrieval.m, n_s=cfg.retrieval.n_s))
    dump_supports(records, cfg.paths.supports)
    return records


# ── Significance ─────────────────────────────────────────────────────────────

def compare_dumps(path_a: str | Path, path_b: str | Path, trials: int = 100_000, seed: int = 0,
                  exact: bool = False) -> SignificanceResult:
    """Best answer per question → binary outcomes → paired randomization test."""
    vectors = []
    for path in (path_a, path_b):
        if not Path(path).exists():
            raise DataError(f"prediction dump {path} does not exist")
        rankings = read_predictions(path)
        unlabeled = [q for q, r in rankings.items() if r.labels is None]
        if unlabeled:
            raise DataError(f"{path}: question {unlabeled[0]} has no labels")
        vectors.append(OutcomeVector.from_rankings(rankings))
    labels = (Path(path_a).stem, Path(path_b).stem)
    if exact:
        return exact_randomization_test(vectors[0], vectors[1], labels=labels)
    return randomization_test(vectors[0], vectors[1], trials=trials, seed=seed, labels=labels)


# ── Synthetic data ───────────────────────────────────────────────────────────

def generate_data(spec_path: str | Path, out_dir: str | Path) -> dict:
    spec = SyntheticSpec.load(spec_path)
    return generate_synthetic(spec).write(out_dir)
