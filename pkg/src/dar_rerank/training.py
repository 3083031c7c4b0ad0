"""
Generic training loop with dev-set early stopping.

Any model exposing `parameters()` and `batch_loss(batch, supports)` can be
trained: every reranker and the dual encoder. Batches are groups of whole
training items (questions, or query/passage pairs), shuffled at group
level by a seeded generator. After every epoch the caller's dev metric is
computed; the best parameters are restored once training stops.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from dar_rerank.autograd.checkpoint import load_container, save_container
from dar_rerank.autograd.optim import AdamState, adam_step
from dar_rerank.autograd.tensor import Tensor, zero_grads
from dar_rerank.errors import ConfigError, NumericError

logger = logging.getLogger(__name__)

TRAINING_STATE_KIND = "training_state"


def _batch_ids(batch: Sequence[Any]) -> str:
    return ", ".join(str(getattr(item, "qid", "?")) for item in batch[:5])


def train_step(model, batch: Sequence[Any], state: AdamState,
               supports: Mapping[str, Any] | None = None,
               params: dict[str, Tensor] | None = None) -> float | None:
    """
    Zero grads, backpropagate the batch loss and take one Adam step.

    `params` restricts the update to a subset of the model's tensors.
    A non-finite loss aborts before any parameter moves. A batch without
    any training signal returns None and leaves the optimizer untouched.
    """
    params = model.parameters() if params is None else params
    zero_grads(model.parameters().values())
    loss = model.batch_loss(batch, supports)
    if loss is None:
        return None
    value = loss.item()
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss {value} on batch starting with {_batch_ids(batch)}")
    loss.backward()
    adam_step(params, state)
    return value


@dataclass
class TrainingConfig:
    epochs: int = 20
    patience: int = 3
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError(
                f"epochs={self.epochs}, batch_size={self.batch_size} and patience={self.patience} must be positive"
            )
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    dev_metric: float
    improved: bool
    seconds: float


@dataclass
class TrainingLog:
    """Per-epoch history, persisted as JSON next to the checkpoint."""

    metric: str
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = -math.inf
    stopped_early: bool = False
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "records": [asdict(r) for r in self.records],
            "best_epoch": self.best_epoch,
            "best_metric": self.best_metric,
            "stopped_early": self.stopped_early,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingLog":
        return cls(
            metric=d["metric"],
            records=[EpochRecord(**r) for r in d.get("records", [])],
            best_epoch=d.get("best_epoch", 0),
            best_metric=d.get("best_metric", -math.inf),
            stopped_early=d.get("stopped_early", False),
            config=d.get("config", {}),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: str | Path) -> "TrainingLog":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def summary(self) -> str:
        lines = [f"{'Epoch':>5}  {'Loss':>9}  {self.metric:>9}"]
        for r in self.records:
            mark = " *" if r.improved else ""
            lines.append(f"{r.epoch:>5}  {r.mean_loss:>9.4f}  {r.dev_metric:>9.4f}{mark}")
        tail = "early stop" if self.stopped_early else "epoch cap"
        lines.append(f"best {self.metric} {self.best_metric:.4f} at epoch {self.best_epoch} ({tail})")
        return "\n".join(lines)


class Trainer:
    """Adam + group-level shuffling + early stopping on a dev metric."""

    def __init__(self, model, config: TrainingConfig | None = None, metric: str = "dev_map",
                 config_echo: dict | None = None):
        self.model = model
        self.config = config or TrainingConfig()
        self.config.validate()
        self.state = AdamState(lr=self.config.lr)
        self.log = TrainingLog(metric=metric, config=config_echo or {})
        self.epoch = 0
        self.stale = 0
        self.best: dict[str, np.ndarray] | None = None

    def _snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.model.parameters().items()}

    def _restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, p in self.model.parameters().items():
            p.data = snapshot[name].copy()

    # ── resumable state ──

    def save_state(self, path: str | Path) -> None:
        """Current weights, best weights, Adam moments and the epoch position."""
        header = {
            "model_kind": TRAINING_STATE_KIND,
            "epoch": self.epoch,
            "stale": self.stale,
            "adam_step": self.state.step,
            "log": self.log.to_dict(),
        }
        entries = {f"param.{k}": v for k, v in self._snapshot().items()}
        entries.update({f"best.{k}": v for k, v in (self.best or self._snapshot()).items()})
        entries.update(self.state.to_entries())
        save_container(path, header, entries)

    def load_state(self, path: str | Path) -> None:
        container = load_container(path)
        if container.model_kind != TRAINING_STATE_KIND:
            raise ConfigError(f"{path}: not a training state file (kind {container.model_kind!r})")
        entries = container.entries
        params = self.model.parameters()
        for prefix in ("param.", "best."):
            for name, p in params.items():
                arr = entries.get(prefix + name)
                if arr is None or arr.shape != p.shape:
                    raise ConfigError(f"{path}: tensor {prefix}{name} missing or shaped unlike the model {p.shape}")
        self._restore({name: entries["param." + name] for name in params})
        self.best = {name: entries["best." + name].copy() for name in params}
        self.state.step = int(container.header["adam_step"])
        self.state.m = {k[len("adam.m."):]: v.copy() for k, v in entries.items() if k.startswith("adam.m.")}
        self.state.v = {k[len("adam.v."):]: v.copy() for k, v in entries.items() if k.startswith("adam.v.")}
        self.epoch = int(container.header["epoch"])
        self.stale = int(container.header["stale"])
        self.log = TrainingLog.from_dict({**container.header["log"], "config": self.log.config})
        logger.info("resuming after epoch %d (Adam step %d) from %s", self.epoch, self.state.step, path)

    # ── loop ──

    def fit(self, items: Sequence[Any], dev_metric: Callable[[], float],
            supports: Mapping[str, Any] | None = None, state_path: str | Path | None = None) -> TrainingLog:
        """
        Train on `items` until the epoch cap or `patience` epochs without
        a strictly better dev metric. Returns the training log; the model
        holds the best weights afterwards.

        With `state_path` the resumable state is written after every epoch.
        Shuffling is seeded per epoch, so a run resumed from that file
        repeats the epochs an uninterrupted run would have taken.
        """
        if not items:
            raise ConfigError("no training items")
        cfg = self.config
        if self.best is None:
            self.best = self._snapshot()
        if self.log.stopped_early:
            logger.info("training already stopped early at epoch %d", self.epoch)

        while self.epoch < cfg.epochs and not self.log.stopped_early:
            self.epoch += 1
            epoch = self.epoch
            started = time.perf_counter()
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(items))
            losses = []
            for start in range(0, len(order), cfg.batch_size):
                batch = [items[i] for i in order[start:start + cfg.batch_size]]
                loss = train_step(self.model, batch, self.state, supports=supports)
                if loss is not None:
                    losses.append(loss)
            metric = float(dev_metric())
            improved = metric > self.log.best_metric
            if improved:
                self.log.best_metric, self.log.best_epoch = metric, epoch
                self.best = self._snapshot()
                self.stale = 0
            else:
                self.stale += 1
            record = EpochRecord(epoch, float(np.mean(losses)) if losses else 0.0, metric, improved,
                                 round(time.perf_counter() - started, 3))
            self.log.records.append(record)
            logger.info("epoch %d: loss %.4f, %s %.4f%s", epoch, record.mean_loss,
                        self.log.metric, metric, " (best)" if improved else "")
            if self.stale >= cfg.patience:
                self.log.stopped_early = True
                logger.info("early stop after epoch %d; best epoch %d", epoch, self.log.best_epoch)
            if state_path is not None:
                self.save_state(state_path)

        self._restore(self.best)
        return self.log
