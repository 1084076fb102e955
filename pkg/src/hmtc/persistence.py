"""Single-file model bundles.

Layout::

    HMTC-BUNDLE\\n
    <key>: <json value>\\n      (sorted keys, one per line)
    end-header\\n
    block*                      (count given by the ``blocks`` key)

Each block is ``u32 header_len | header json | u64 payload_len | payload |
u32 crc32(header json + payload)``, all little-endian. The block header
records the tensor name, shape and dtype (always ``<f8``).

Word vectors are not stored; the bundle keeps a SHA-256 fingerprint of the
embedding matrix and checks it when the model is loaded.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .classifier import LevelClassifier
from .corpus import EmbeddingMatrix, Vocabulary, load_embeddings
from .onlstm import ONLSTMParams
from .taxonomy import taxonomy_from_records
from .trainer import EpochRecord, HierarchicalModel, TrainConfig, TrainHistory

MAGIC = b"HMTC-BUNDLE\n"
END = b"end-header\n"
FORMAT_VERSION = 1
DTYPE = "<f8"


class BundleError(ValueError):
    pass


class ChecksumError(BundleError):
    pass


class FingerprintError(BundleError):
    pass


def embedding_fingerprint(emb: EmbeddingMatrix) -> dict:
    mat = np.ascontiguousarray(emb.matrix, dtype=DTYPE)
    h = hashlib.sha256()
    h.update(json.dumps(list(mat.shape)).encode())
    h.update(mat.tobytes())
    return {"sha256": h.hexdigest(), "shape": list(mat.shape)}


def _header(model: HierarchicalModel, n_blocks: int) -> bytes:
    meta = {
        "format_version": FORMAT_VERSION,
        "taxonomy": model.taxonomy.records(),
        "vocab": model.embeddings.vocab.tokens,
        "embedding": embedding_fingerprint(model.embeddings),
        "config": model.config.to_dict(),
        "levels": [{"level": c.level, "categories": c.categories, "hidden": c.hidden_size,
                    "mlp_units": c.mlp_units} for c in model.levels],
        "histories": [{"level": h.level, "best_epoch": h.best_epoch, "epochs": h.to_records()}
                      for h in model.histories],
        "blocks": n_blocks,
    }
    lines = [f"{k}: {json.dumps(meta[k], sort_keys=True, ensure_ascii=False)}\n" for k in sorted(meta)]
    return MAGIC + "".join(lines).encode("utf-8") + END


def _block(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=DTYPE)
    head = json.dumps({"dtype": DTYPE, "name": name, "shape": list(arr.shape)}, sort_keys=True).encode()
    payload = arr.tobytes()
    crc = zlib.crc32(head + payload)
    return (struct.pack("<I", len(head)) + head + struct.pack("<Q", len(payload)) + payload
            + struct.pack("<I", crc))


def dumps_model(model: HierarchicalModel) -> bytes:
    blocks = []
    for clf in model.levels:
        for name, arr in sorted(clf.state().items()):
            blocks.append(_block(f"level{clf.level}/{name}", arr))
    return _header(model, len(blocks)) + b"".join(blocks)


def save_model(model: HierarchicalModel, path):
    Path(path).write_bytes(dumps_model(model))


def _parse_header(data: bytes):
    if not data.startswith(MAGIC):
        raise BundleError("not a model bundle (bad magic)")
    end = data.find(END)
    if end < 0:
        raise BundleError("truncated bundle: header terminator missing")
    meta = {}
    for line in data[len(MAGIC):end].decode("utf-8").splitlines():
        key, _, value = line.partition(": ")
        meta[key] = json.loads(value)
    if meta.get("format_version") != FORMAT_VERSION:
        raise BundleError(f"unsupported bundle version {meta.get('format_version')!r}")
    return meta, end + len(END)


def _read_blocks(data: bytes, pos: int, count: int) -> dict[str, np.ndarray]:
    out = {}

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise BundleError("truncated bundle")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (hlen,) = struct.unpack("<I", take(4))
        head = take(hlen)
        (plen,) = struct.unpack("<Q", take(8))
        payload = take(plen)
        (crc,) = struct.unpack("<I", take(4))
        if zlib.crc32(head + payload) != crc:
            raise ChecksumError("checksum mismatch in tensor block")
        info = json.loads(head)
        if info["dtype"] != DTYPE:
            raise BundleError(f"unsupported dtype {info['dtype']}")
        shape = tuple(info["shape"])
        if int(np.prod(shape)) * 8 != plen:
            raise BundleError(f"block {info['name']}: shape {shape} does not match {plen} bytes")
        out[info["name"]] = np.frombuffer(payload, dtype=DTYPE).reshape(shape).copy()
    if pos != len(data):
        raise BundleError("trailing bytes after the last block")
    return out


def loads_model(data: bytes, embeddings) -> HierarchicalModel:
    """Rebuild a model; ``embeddings`` is an :class:`EmbeddingMatrix` or a word-vector file path."""
    meta, pos = _parse_header(data)
    blocks = _read_blocks(data, pos, meta["blocks"])
    tax = taxonomy_from_records(meta["taxonomy"])
    vocab = Vocabulary(meta["vocab"])
    V, d = meta["embedding"]["shape"]
    if not isinstance(embeddings, EmbeddingMatrix):
        embeddings = load_embeddings(embeddings, vocab, d)
    if embeddings.vocab != vocab:
        raise FingerprintError("embedding vocabulary differs from the bundle's")
    if embedding_fingerprint(embeddings) != meta["embedding"]:
        raise FingerprintError("embedding fingerprint mismatch")

    cfg = TrainConfig.from_dict(meta["config"])
    levels = []
    for info in meta["levels"]:
        j = info["level"]
        state = {k.split("/", 1)[1]: v for k, v in blocks.items() if k.startswith(f"level{j}/")}
        try:
            rnn = ONLSTMParams(state["onlstm.W"], state["onlstm.U"], state["onlstm.b"])
            if rnn.hidden_size != info["hidden"] or rnn.hidden_size != cfg.hidden:
                raise ValueError(f"stored ONLSTM has n={rnn.hidden_size}, header says "
                                 f"{info['hidden']} (level) and {cfg.hidden} (config)")
            clf = LevelClassifier(j, embeddings, info["categories"], info["hidden"], info["mlp_units"],
                                  onlstm_params=rnn, input_dropout=cfg.input_dropout,
                                  hidden_dropout=cfg.hidden_dropout)
            clf.load_state(state)
        except (KeyError, ValueError) as exc:
            raise BundleError(f"level {j}: inconsistent tensors ({exc})") from None
        levels.append(clf)
    histories = []
    for h in meta["histories"]:
        hist = TrainHistory(h["level"], [EpochRecord(**e) for e in h["epochs"]], h["best_epoch"])
        histories.append(hist)
    return HierarchicalModel(tax, embeddings, levels, cfg, histories)


def load_model(path, embeddings) -> HierarchicalModel:
    return loads_model(Path(path).read_bytes(), embeddings)


def read_header(path) -> dict:
    return _parse_header(Path(path).read_bytes())[0]
