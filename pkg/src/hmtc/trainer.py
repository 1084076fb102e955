"""Level-by-level training with ONLSTM weight transfer between adjacent levels."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classifier import LevelClassifier
from .corpus import (
    DEFAULT_MAX_LEN,
    Document,
    EmbeddingMatrix,
    LevelBatch,
    compose_level_input,
    encode_batch,
)
from .numeric import AdamState, make_rng
from .onlstm import ONLSTMParams
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    initial_lr: float = 1e-3
    batch_size: int = 64
    plateau_patience: int = 2
    lr_decay_factor: float = 10.0
    early_stop_patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    max_len: int = DEFAULT_MAX_LEN
    use_joint_embedding: bool = True
    use_fine_tuning: bool = True
    hidden: int = 512
    mlp_units: int = 500
    input_dropout: float = 0.25
    hidden_dropout: float = 0.5
    eval_batch_size: int = 256

    def __post_init__(self):
        for name in ("initial_lr", "batch_size", "plateau_patience", "early_stop_patience",
                     "max_epochs", "max_len", "hidden", "mlp_units", "eval_batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must be > 1")

    @property
    def min_lr(self) -> float:
        return self.initial_lr / self.lr_decay_factor

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class EpochRecord:
    level: int
    epoch: int
    lr: float
    train_loss: float | None
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    level: int
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def lrs(self):
        return [e.lr for e in self.epochs]

    @property
    def val_losses(self):
        return [e.val_loss for e in self.epochs]

    def to_records(self) -> list[dict]:
        return [asdict(e) for e in self.epochs]

    def write_log(self, fh):
        for rec in self.to_records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


class PlateauSchedule:
    """Divide the learning rate once the monitored loss stalls for ``patience`` epochs.

    The rate never drops below ``floor``. A separate counter drives early
    stopping. ``best`` starts from the epoch-0 (untrained) loss.
    """

    def __init__(self, lr, patience, factor, floor, stop_patience):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.floor = floor
        self.stop_patience = stop_patience
        self.best = math.inf
        self.wait = 0
        self.stale = 0

    def update(self, loss: float) -> bool:
        """Record one epoch's loss; returns True when it is a new best."""
        if loss < self.best:
            self.best = loss
            self.wait = 0
            self.stale = 0
            return True
        self.wait += 1
        self.stale += 1
        if self.wait >= self.patience and self.lr > self.floor:
            self.lr = max(self.lr / self.factor, self.floor)
            self.wait = 0
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.stop_patience


@dataclass
class HierarchicalModel:
    taxonomy: Taxonomy
    embeddings: EmbeddingMatrix
    levels: list[LevelClassifier]
    config: TrainConfig
    histories: list[TrainHistory] = field(default_factory=list)

    @property
    def level_count(self):
        return len(self.levels)

    def level(self, j: int) -> LevelClassifier:
        return self.levels[j - 1]


# -- input construction -------------------------------------------------------


def level_inputs(docs: Sequence[Document], tax: Taxonomy, level: int, parents=None,
                 joint: bool = True) -> list[list[str]]:
    """Token sequences for ``level``.

    ``parents`` gives one parent node id per document; by default the true
    parent from each document's path is used (teacher forcing).
    """
    if level == 1 or not joint:
        return [list(d.tokens) for d in docs]
    if parents is None:
        parents = [d.path[level - 2] for d in docs]
    return [compose_level_input(d, level, tax.label(p)) for d, p in zip(docs, parents)]


def make_batch(seqs, clf: LevelClassifier, max_len: int, labels=None) -> LevelBatch:
    return encode_batch(seqs, clf.embeddings.vocab, max_len, clf.level, clf.class_index, labels)


def _chunks(n: int, size: int):
    return [slice(s, min(s + size, n)) for s in range(0, n, size)]


def _train_slices(order: np.ndarray, size: int):
    # batch norm needs >= 2 rows in training mode; fold a 1-row tail into the previous batch
    parts = [order[s] for s in _chunks(len(order), size)]
    if len(parts) > 1 and len(parts[-1]) == 1:
        tail = parts.pop()
        parts[-1] = np.concatenate([parts[-1], tail])
    return parts


def evaluate_level(clf: LevelClassifier, seqs, labels, cfg: TrainConfig) -> tuple[float, float]:
    """Mean per-example cross-entropy and accuracy, evaluation mode."""
    total, correct = 0.0, 0
    for sl in _chunks(len(seqs), cfg.eval_batch_size):
        batch = make_batch(seqs[sl], clf, cfg.max_len, labels[sl])
        res = clf.forward(batch, training=False)
        p = np.maximum(res.probs[np.arange(len(batch)), batch.targets], 1e-12)
        total += float(-np.sum(np.log(p)))
        correct += int(np.sum(np.argmax(res.probs, axis=1) == batch.targets))
    return total / len(seqs), correct / len(seqs)


def predict_level(clf: LevelClassifier, seqs, cfg_or_max_len, batch_size: int = 256):
    """Class indices and probability rows for a list of token sequences."""
    max_len = getattr(cfg_or_max_len, "max_len", cfg_or_max_len)
    idx, probs = [], []
    for sl in _chunks(len(seqs), batch_size):
        i, p = clf.predict(make_batch(seqs[sl], clf, max_len))
        idx.append(i)
        probs.append(p)
    if not idx:
        return np.zeros(0, dtype=np.int64), np.zeros((0, clf.num_classes))
    return np.concatenate(idx), np.concatenate(probs)


# -- training -----------------------------------------------------------------


def train_level(level: int, train_docs: Sequence[Document], val_docs: Sequence[Document],
                tax: Taxonomy, embeddings: EmbeddingMatrix,
                init_onlstm: ONLSTMParams | None, cfg: TrainConfig,
                on_epoch: Callable[[int, LevelClassifier], None] | None = None):
    """Train one level's classifier; returns ``(classifier, history)``.

    Inputs carry the true parent label (teacher forcing). When
    ``init_onlstm`` is given, the recurrent weights start as an exact copy
    of it; batch-norm and MLP layers are always freshly initialised. The
    returned classifier holds the weights of the best validation epoch,
    where epoch 0 is the untrained model.
    ``on_epoch(epoch, clf)`` is called after every epoch, including epoch 0.
    """
    if not 1 <= level <= tax.level_count:
        raise ValueError(f"level must be in 1..{tax.level_count}, got {level}")
    if not train_docs or not val_docs:
        raise ValueError("training and validation sets must be non-empty")
    init_rng = make_rng(cfg.seed, "init", level)
    drop_rng = make_rng(cfg.seed, "dropout", level)
    shuffle_rng = make_rng(cfg.seed, "shuffle", level)

    if init_onlstm is not None:
        if init_onlstm.input_size != embeddings.dim or init_onlstm.hidden_size != cfg.hidden:
            raise ValueError(
                f"transferred ONLSTM is ({init_onlstm.input_size}, {init_onlstm.hidden_size}), "
                f"config needs ({embeddings.dim}, {cfg.hidden})")
        init_onlstm = init_onlstm.copy()
    clf = LevelClassifier(level, embeddings, tax.categories_at(level), cfg.hidden, cfg.mlp_units,
                          rng=init_rng, onlstm_params=init_onlstm,
                          input_dropout=cfg.input_dropout, hidden_dropout=cfg.hidden_dropout)

    joint = cfg.use_joint_embedding
    train_seqs = level_inputs(train_docs, tax, level, joint=joint)
    train_labels = [d.path[level - 1] for d in train_docs]
    val_seqs = level_inputs(val_docs, tax, level, joint=joint)
    val_labels = [d.path[level - 1] for d in val_docs]

    sched = PlateauSchedule(cfg.initial_lr, cfg.plateau_patience, cfg.lr_decay_factor,
                            cfg.min_lr, cfg.early_stop_patience)
    history = TrainHistory(level)
    adam = AdamState(clf.params)

    val_loss, val_acc = _validation(clf, val_seqs, val_labels, cfg)
    history.epochs.append(EpochRecord(level, 0, sched.lr, None, val_loss, val_acc))
    sched.update(val_loss)
    best = clf.snapshot()
    if on_epoch:
        on_epoch(0, clf)

    for epoch in range(1, cfg.max_epochs + 1):
        lr = sched.lr
        order = shuffle_rng.permutation(len(train_seqs))
        total = 0.0
        for idx in _train_slices(order, cfg.batch_size):
            batch = make_batch([train_seqs[i] for i in idx], clf, cfg.max_len,
                               [train_labels[i] for i in idx])
            loss, _ = clf.loss_and_grads(batch, rng=drop_rng)
            adam.step(clf.params, lr)
            total += loss
        val_loss, val_acc = _validation(clf, val_seqs, val_labels, cfg)
        history.epochs.append(EpochRecord(level, epoch, lr, total / len(train_seqs), val_loss, val_acc))
        log.info("level %d epoch %d lr %.0e train %.4f val %.4f acc %.4f",
                 level, epoch, lr, total / len(train_seqs), val_loss, val_acc)
        if sched.update(val_loss):
            best = clf.snapshot()
            history.best_epoch = epoch
        if on_epoch:
            on_epoch(epoch, clf)
        if sched.should_stop:
            break

    clf.load_state(best)
    return clf, history


def _validation(clf, seqs, labels, cfg):
    return evaluate_level(clf, seqs, labels, cfg)


def transfer_parameters(src: LevelClassifier) -> ONLSTMParams:
    """Independent copy of the recurrent weights, the only transferred layer."""
    return src.rnn.copy()


def train_hierarchy(train_docs: Sequence[Document], val_docs: Sequence[Document], tax: Taxonomy,
                    embeddings: EmbeddingMatrix, cfg: TrainConfig,
                    on_epoch: Callable[[int, LevelClassifier], None] | None = None) -> HierarchicalModel:
    """Train levels 1..L in order, seeding each ONLSTM from the level above."""
    levels, histories = [], []
    carry = None
    for level in range(1, tax.level_count + 1):
        clf, hist = train_level(level, train_docs, val_docs, tax, embeddings,
                                carry if cfg.use_fine_tuning else None, cfg, on_epoch)
        levels.append(clf)
        histories.append(hist)
        carry = transfer_parameters(clf)
    return HierarchicalModel(tax, embeddings, levels, cfg, histories)


# -- inference ----------------------------------------------------------------


@dataclass
class PathPrediction:
    path: list[str]
    probs: list[np.ndarray]


def predict_paths(model: HierarchicalModel, docs: Sequence[Document]) -> list[PathPrediction]:
    """Free-running prediction: each level sees the label predicted one level up."""
    tax, cfg = model.taxonomy, model.config
    n = len(docs)
    paths = [[] for _ in range(n)]
    probs = [[] for _ in range(n)]
    parents = None
    for j, clf in enumerate(model.levels, start=1):
        seqs = level_inputs(docs, tax, j, parents, joint=cfg.use_joint_embedding)
        idx, p = predict_level(clf, seqs, cfg, cfg.eval_batch_size)
        parents = [clf.categories[i] for i in idx]
        for k in range(n):
            paths[k].append(parents[k])
            probs[k].append(p[k])
    return [PathPrediction(a, b) for a, b in zip(paths, probs)]


def predict_path(model: HierarchicalModel, doc: Document) -> PathPrediction:
    return predict_paths(model, [doc])[0]
