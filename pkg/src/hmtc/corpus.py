"""Documents, vocabulary, frozen word vectors and level-specific input encoding."""

from __future__ import annotations

import json
import logging
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .numeric import DTYPE, make_rng
from .taxonomy import Taxonomy, build_taxonomy

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
DEFAULT_MAX_LEN = 256

_STRIP = string.punctuation


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    out = []
    for tok in text.lower().split():
        tok = tok.strip(_STRIP)
        if tok:
            out.append(tok)
    return out


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    tokens: tuple
    path: tuple

    @classmethod
    def create(cls, doc_id, text, path, tax: Taxonomy | None = None) -> "Document":
        tokens = tuple(tokenize(text))
        if not tokens:
            raise ValueError(f"document {doc_id!r} has no tokens")
        path = tuple(path)
        if tax is not None and not tax.validate_path(path):
            raise ValueError(f"document {doc_id!r} has an edge-inconsistent label path")
        return cls(str(doc_id), text, tokens, path)

    def to_record(self) -> dict:
        return {"id": self.doc_id, "text": self.text, "path": list(self.path)}


def read_corpus(path, tax: Taxonomy | None = None) -> list[Document]:
    """Read line-delimited ``{"id", "text", "path"}`` records.

    An optional ``"split"`` field is kept on the side: see :func:`read_corpus_splits`.
    """
    return [d for d, _ in _read_records(path, tax)]


def read_corpus_splits(path, tax: Taxonomy | None = None) -> dict[str, list[Document]]:
    splits: dict[str, list[Document]] = {}
    for doc, split in _read_records(path, tax):
        splits.setdefault(split or "", []).append(doc)
    return splits


def _read_records(path, tax):
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                doc = Document.create(rec["id"], rec["text"], rec["path"], tax)
            except KeyError as exc:
                raise ValueError(f"{path}:{n}: missing field {exc}") from None
            yield doc, rec.get("split")


def write_corpus(docs: Sequence[Document], path):
    Path(path).write_text(
        "".join(json.dumps(d.to_record(), ensure_ascii=False) + "\n" for d in docs),
        encoding="utf-8",
    )


# -- vocabulary ---------------------------------------------------------------


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens[:2] != [PAD, UNK]:
            raise ValueError("vocabulary must start with the PAD and UNK tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate token in vocabulary")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def lookup(self, tokens) -> list[int]:
        get = self.index.get
        return [get(t, UNK_ID) for t in tokens]

    def save(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def build_vocabulary(docs: Sequence[Document], tax: Taxonomy, min_count: int = 1) -> Vocabulary:
    """Document tokens seen at least ``min_count`` times, plus every label token.

    Ordering after PAD/UNK is lexicographic, so the result does not depend on
    document order.
    """
    if not docs:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(t for d in docs for t in d.tokens)
    keep = {t for t, c in counts.items() if c >= min_count}
    for node in tax.nodes:
        keep.update(tokenize(tax.label(node)))
    keep.discard(PAD)
    keep.discard(UNK)
    return Vocabulary([PAD, UNK, *sorted(keep)])


# -- embeddings ---------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Frozen ``V x d`` lookup table aligned with ``vocab``."""

    vocab: Vocabulary
    matrix: np.ndarray
    coverage: float = 1.0

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def frozen(self) -> bool:
        return True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def lookup(self, idx: np.ndarray) -> np.ndarray:
        return self.matrix[idx]


def read_word_vectors(path, d: int | None = None) -> dict[str, np.ndarray]:
    """GloVe text format: ``token v1 ... vd`` per line."""
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            tok, vals = parts[0], parts[1:]
            if d is None:
                d = len(vals)
            if len(vals) != d:
                raise ValueError(f"{path}:{n}: expected {d} values, got {len(vals)}")
            vectors[tok] = np.array(vals, dtype=DTYPE)
    return vectors


def load_embeddings(path, vocab: Vocabulary, d: int) -> EmbeddingMatrix:
    vectors = read_word_vectors(path, d)
    return embeddings_from_vectors(vectors, vocab, d)


def embeddings_from_vectors(vectors: Mapping[str, np.ndarray], vocab: Vocabulary, d: int) -> EmbeddingMatrix:
    mat = np.zeros((len(vocab), d), dtype=DTYPE)
    found = 0
    for i, tok in enumerate(vocab.tokens[2:], start=2):
        vec = vectors.get(tok)
        if vec is not None:
            mat[i] = vec
            found += 1
    coverage = found / max(len(vocab) - 2, 1)
    log.info("embedding coverage %.3f (%d/%d tokens)", coverage, found, len(vocab) - 2)
    return EmbeddingMatrix(vocab, mat, coverage)


def write_word_vectors(vectors: Mapping[str, np.ndarray], path):
    with open(path, "w", encoding="utf-8") as fh:
        for tok, vec in vectors.items():
            fh.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def write_embeddings(emb: EmbeddingMatrix, path):
    """Write the non-reserved rows of ``emb`` in GloVe text format."""
    write_word_vectors(dict(zip(emb.vocab.tokens[2:], emb.matrix[2:])), path)


# -- level inputs -------------------------------------------------------------


def compose_level_input(doc: Document | Sequence[str], level: int, parent_label: str | None) -> list[str]:
    """Parent label tokens followed by the document tokens; level 1 has no parent."""
    tokens = list(doc.tokens if isinstance(doc, Document) else doc)
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    if level == 1:
        if parent_label:
            raise ValueError("level 1 takes no parent label")
        return tokens
    label_tokens = tokenize(parent_label or "")
    if not label_tokens:
        raise ValueError(f"level {level} needs a non-empty parent label")
    return label_tokens + tokens


@dataclass
class LevelBatch:
    ids: np.ndarray  # (batch, max_len) int
    mask: np.ndarray  # (batch, max_len) bool
    targets: np.ndarray | None  # (batch,) int
    level: int

    def __len__(self):
        return self.ids.shape[0]


def encode_sequences(seqs, vocab: Vocabulary, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = np.full((len(seqs), max_len), PAD_ID, dtype=np.int64)
    for r, seq in enumerate(seqs):
        row = vocab.lookup(seq[:max_len])
        ids[r, : len(row)] = row
    return ids, ids != PAD_ID


def encode_batch(seqs, vocab: Vocabulary, max_len: int, level: int,
                 class_index: Mapping[str, int] | None = None, labels=None) -> LevelBatch:
    """Truncate (keeping the prefix) or right-pad every sequence to ``max_len``."""
    ids, mask = encode_sequences(seqs, vocab, max_len)
    targets = None
    if labels is not None:
        try:
            targets = np.array([class_index[c] for c in labels], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"class label {exc} not in the level-{level} index") from None
    return LevelBatch(ids, mask, targets, level)


# -- synthetic data -----------------------------------------------------------


def generate_synthetic_corpus(branching: Sequence[int], docs_per_leaf: int,
                              signal_tokens_per_class: int = 1, noise_vocab: int = 20,
                              doc_len: int = 12, seed: int = 0, d: int = 16,
                              shared_child_signal: bool = False, signal_fraction: float = 0.6):
    """Uniform tree plus documents built from per-class signal tokens and noise.

    Each document on path ``(c_1, ..., c_L)`` draws about ``signal_fraction``
    of its tokens from the signal tokens of the classes on the path and the
    rest from a shared noise pool; each path class contributes at least one
    token, so ``doc_len`` must be at least the depth.

    With ``shared_child_signal`` the signal tokens of a level >= 2 node depend
    only on its position among its siblings, so two children in different
    branches look the same, and documents carry no signal for any ancestor.
    Child classes are then separable only when the parent is known.

    Returns ``(taxonomy, documents, embeddings)``; every vocabulary token
    (label tokens included) gets a seeded standard-normal vector.
    """
    branching = list(branching)
    if not branching or min(branching) < 1 or min(docs_per_leaf, signal_tokens_per_class,
                                                    noise_vocab, doc_len) < 1:
        raise ValueError("branching and counts must be >= 1")
    if doc_len < len(branching):
        raise ValueError("doc_len must be at least the number of levels")
    rng = make_rng(seed, "synthetic")

    labels = {"root": "root"}
    edges = []
    frontier = ["root"]
    sibling_pos = {}
    for level, b in enumerate(branching, start=1):
        nxt = []
        for p_i, parent in enumerate(frontier):
            for k in range(b):
                node = f"l{level}c{p_i * b + k:03d}"
                labels[node] = f"cat{level} {node}"
                edges.append((parent, node))
                sibling_pos[node] = k
                nxt.append(node)
        frontier = nxt
    tax = build_taxonomy(edges, labels, "root")

    def signal_key(node):
        level = tax.level_of[node]
        if shared_child_signal and level >= 2:
            return f"p{level}x{sibling_pos[node]}"
        return node

    signal = {}
    for node in sorted(tax.nodes - {"root"}):
        key = signal_key(node)
        signal.setdefault(key, [f"s{key}t{j}" for j in range(signal_tokens_per_class)])
    noise = [f"noise{j:03d}" for j in range(noise_vocab)]

    docs = []
    L = tax.level_count
    for leaf in tax.categories_at(L):
        path = tax.path_to(leaf)
        sources = [path[-1]] if shared_child_signal else path
        pool = [t for node in sources for t in signal[signal_key(node)]]
        for k in range(docs_per_leaf):
            is_signal = rng.random(doc_len) < signal_fraction
            toks = [pool[rng.integers(len(pool))] if s else noise[rng.integers(len(noise))]
                    for s in is_signal]
            # every class on the path shows up at least once
            slots = rng.permutation(doc_len)[: len(sources)]
            for slot, node in zip(slots, sources):
                own = signal[signal_key(node)]
                toks[slot] = own[rng.integers(len(own))]
            docs.append(Document.create(f"{leaf}-{k:04d}", " ".join(toks), path, tax))

    vocab = build_vocabulary(docs, tax, min_count=1)
    vec_rng = make_rng(seed, "vectors")
    vectors = {w: vec_rng.standard_normal(d) for w in vocab.tokens[2:]}
    return tax, docs, embeddings_from_vectors(vectors, vocab, d)


def split_documents(docs: Sequence[Document], fraction: float, seed: int):
    """Seeded split into ``(keep, held_out)`` with ``fraction`` held out."""
    rng = make_rng(seed, "split")
    order = rng.permutation(len(docs))
    n_out = int(round(len(docs) * fraction))
    held = set(order[:n_out].tolist())
    keep = [d for i, d in enumerate(docs) if i not in held]
    out = [d for i, d in enumerate(docs) if i in held]
    return keep, out
