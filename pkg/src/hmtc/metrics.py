"""Accuracy, P/R/F1 and label-ranking metrics for hierarchical predictions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Document
from .taxonomy import Taxonomy
from .trainer import HierarchicalModel, level_inputs, predict_level, predict_paths

RLOSS_SEMANTICS = ("as_printed", "prose")
AVERAGING = ("macro", "micro")


@dataclass
class RankedPrediction:
    """Scores over an ordered label universe plus the set of relevant labels."""

    labels: list
    scores: np.ndarray
    relevant: frozenset

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.relevant = frozenset(self.relevant)
        if len(self.labels) != len(self.scores):
            raise ValueError("one score per label required")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        unknown = self.relevant - set(self.labels)
        if unknown:
            raise ValueError(f"relevant labels not in the universe: {sorted(unknown)}")

    @property
    def relevant_mask(self) -> np.ndarray:
        return np.array([c in self.relevant for c in self.labels])

    def ranks(self) -> np.ndarray:
        """Rank of every label: how many labels score at least as high."""
        s = self.scores
        return (s[None, :] >= s[:, None]).sum(axis=1)


def rank(pred: RankedPrediction, label) -> int:
    try:
        j = pred.labels.index(label)
    except ValueError:
        raise ValueError(f"unknown label {label!r}") from None
    return int(np.sum(pred.scores >= pred.scores[j]))


def coverage_error(preds: Sequence[RankedPrediction]) -> float:
    """Mean over instances of (worst rank among relevant labels - 1)."""
    total = 0.0
    for p in preds:
        mask = p.relevant_mask
        if not mask.any():
            raise ValueError("coverage error needs a non-empty relevant set")
        total += int(p.ranks()[mask].max()) - 1
    return total / len(preds)


def ranking_loss(preds: Sequence[RankedPrediction], semantics: str = "as_printed") -> float:
    """Normalised count of relevant/irrelevant label pairs, averaged over instances.

    ``as_printed`` counts pairs where the relevant label has the strictly
    better (smaller) rank; ``prose`` counts pairs where the irrelevant label
    does. Without ties the two sum to 1.
    """
    if semantics not in RLOSS_SEMANTICS:
        raise ValueError(f"semantics must be one of {RLOSS_SEMANTICS}")
    total = 0.0
    for p in preds:
        mask = p.relevant_mask
        n_rel, n_irr = int(mask.sum()), int((~mask).sum())
        if n_rel == 0 or n_irr == 0:
            raise ValueError("ranking loss needs non-empty relevant and irrelevant sets")
        r = p.ranks()
        rel, irr = r[mask][:, None], r[~mask][None, :]
        count = np.sum(rel < irr) if semantics == "as_printed" else np.sum(irr < rel)
        total += count / (n_rel * n_irr)
    return total / len(preds)


def precision_recall_f1(predictions, truths, num_classes: int, average: str = "macro"):
    """Precision, recall and F1 with 0/0 taken as 0.

    Macro averages run over the classes that occur in ``truths``.
    """
    if average not in AVERAGING:
        raise ValueError(f"average must be one of {AVERAGING}")
    y_pred = np.asarray(predictions, dtype=np.int64)
    y_true = np.asarray(truths, dtype=np.int64)
    if y_pred.shape != y_true.shape:
        raise ValueError("predictions and truths differ in length")
    for arr in (y_pred, y_true):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError("class index out of range")
    tp = np.bincount(y_true[y_pred == y_true], minlength=num_classes).astype(float)
    pred_n = np.bincount(y_pred, minlength=num_classes).astype(float)
    true_n = np.bincount(y_true, minlength=num_classes).astype(float)
    if average == "micro":
        p = _safe_div(tp.sum(), pred_n.sum())
        r = _safe_div(tp.sum(), true_n.sum())
        return float(p), float(r), float(_f1(p, r))
    prec = _safe_div(tp, pred_n)
    rec = _safe_div(tp, true_n)
    f1 = _f1(prec, rec)
    present = true_n > 0
    return float(prec[present].mean()), float(rec[present].mean()), float(f1[present].mean())


def _safe_div(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.divide(a, b, out=np.zeros_like(a), where=b > 0)


def _f1(p, r):
    p, r = np.asarray(p, dtype=float), np.asarray(r, dtype=float)
    return _safe_div(2 * p * r, p + r)


# -- model-level metrics ------------------------------------------------------


def level_accuracy(model: HierarchicalModel, docs: Sequence[Document], tax: Taxonomy, level: int) -> float:
    """Accuracy at ``level`` with the true parent label composed into the input."""
    clf = model.level(level)
    seqs = level_inputs(docs, tax, level, joint=model.config.use_joint_embedding)
    idx, _ = predict_level(clf, seqs, model.config, model.config.eval_batch_size)
    return float(np.mean([clf.categories[i] == d.path[level - 1] for i, d in zip(idx, docs)]))


def overall_accuracy(model: HierarchicalModel, docs: Sequence[Document], tax: Taxonomy,
                     paths=None) -> float:
    """Leaf accuracy when every level consumes the label predicted above it."""
    paths = paths if paths is not None else predict_paths(model, docs)
    return float(np.mean([p.path[-1] == d.path[-1] for p, d in zip(paths, docs)]))


def assemble_hierarchical_scores(model: HierarchicalModel, doc: Document, tax: Taxonomy,
                                 path_pred=None) -> RankedPrediction:
    """All levels' free-running softmax rows laid end to end over the union of categories."""
    path_pred = path_pred if path_pred is not None else predict_paths(model, [doc])[0]
    labels = [c for j in range(1, tax.level_count + 1) for c in tax.categories_at(j)]
    return RankedPrediction(labels, np.concatenate(path_pred.probs), set(doc.path))


def leaf_scores(model: HierarchicalModel, doc: Document, tax: Taxonomy, path_pred=None) -> RankedPrediction:
    path_pred = path_pred if path_pred is not None else predict_paths(model, [doc])[0]
    L = tax.level_count
    return RankedPrediction(tax.categories_at(L), path_pred.probs[-1], {doc.path[-1]})


@dataclass
class EvalReport:
    level_accuracy: list[float]
    overall_accuracy: float
    precision: float
    recall: float
    f1: float
    coverage_error_flat: float
    ranking_loss_flat: float
    coverage_error_hierarchical: float
    ranking_loss_hierarchical: float
    n_docs: int
    averaging: str = "macro"
    rloss_semantics: str = "as_printed"
    label_universe: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        out = [{"metric": "level_accuracy", "level": j, "value": v}
               for j, v in enumerate(self.level_accuracy, start=1)]
        for name in ("overall_accuracy", "precision", "recall", "f1"):
            out.append({"metric": name, "value": getattr(self, name)})
        for mode in ("flat", "hierarchical"):
            out.append({"metric": "coverage_error", "mode": mode,
                        "value": getattr(self, f"coverage_error_{mode}")})
            out.append({"metric": "ranking_loss", "mode": mode,
                        "value": getattr(self, f"ranking_loss_{mode}")})
        out.append({"metric": "meta", "n_docs": self.n_docs, "averaging": self.averaging,
                    "rloss_semantics": self.rloss_semantics, "label_universe": self.label_universe})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path) -> "EvalReport":
        recs = [json.loads(line) for line in open(path, encoding="utf-8") if line.strip()]
        kw = {"level_accuracy": []}
        for r in recs:
            m = r["metric"]
            if m == "level_accuracy":
                kw["level_accuracy"].append(r["value"])
            elif m in ("coverage_error", "ranking_loss"):
                kw[f"{m}_{r['mode']}"] = r["value"]
            elif m == "meta":
                kw.update({k: r[k] for k in ("n_docs", "averaging", "rloss_semantics", "label_universe")})
            else:
                kw[m] = r["value"]
        return cls(**kw)

    def table(self) -> str:
        rows = [(f"accuracy level {j}", v) for j, v in enumerate(self.level_accuracy, start=1)]
        rows += [
            ("overall accuracy", self.overall_accuracy),
            (f"precision ({self.averaging})", self.precision),
            (f"recall ({self.averaging})", self.recall),
            (f"f1 ({self.averaging})", self.f1),
            ("coverage error (flat)", self.coverage_error_flat),
            ("coverage error (hierarchical)", self.coverage_error_hierarchical),
            (f"ranking loss (flat, {self.rloss_semantics})", self.ranking_loss_flat),
            (f"ranking loss (hierarchical, {self.rloss_semantics})", self.ranking_loss_hierarchical),
        ]
        width = max(len(k) for k, _ in rows)
        lines = [f"{k:<{width}}  {v:.6f}" for k, v in rows]
        lines.append(f"{'documents':<{width}}  {self.n_docs}")
        return "\n".join(lines)


def evaluate(model: HierarchicalModel, docs: Sequence[Document], average: str = "macro",
             rloss_semantics: str = "as_printed") -> EvalReport:
    if not docs:
        raise ValueError("nothing to evaluate")
    tax = model.taxonomy
    L = tax.level_count
    per_level = [level_accuracy(model, docs, tax, j) for j in range(1, L + 1)]
    paths = predict_paths(model, docs)
    leaf_index = tax.class_index(L)
    p, r, f1 = precision_recall_f1([leaf_index[pp.path[-1]] for pp in paths],
                                   [leaf_index[d.path[-1]] for d in docs],
                                   len(leaf_index), average)
    flat = [leaf_scores(model, d, tax, pp) for d, pp in zip(docs, paths)]
    hier = [assemble_hierarchical_scores(model, d, tax, pp) for d, pp in zip(docs, paths)]
    nan = float("nan")
    return EvalReport(
        level_accuracy=per_level,
        overall_accuracy=overall_accuracy(model, docs, tax, paths),
        precision=p,
        recall=r,
        f1=f1,
        coverage_error_flat=coverage_error(flat),
        ranking_loss_flat=ranking_loss(flat, rloss_semantics) if len(leaf_index) > 1 else nan,
        coverage_error_hierarchical=coverage_error(hier),
        ranking_loss_hierarchical=ranking_loss(hier, rloss_semantics),
        n_docs=len(docs),
        averaging=average,
        rloss_semantics=rloss_semantics,
        label_universe={"flat": len(leaf_index), "hierarchical": len(hier[0].labels)},
    )
