"""Command-line entry point: gen-synth, train, evaluate, predict, count-params.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .classifier import count_params
from .corpus import (
    Document,
    build_vocabulary,
    generate_synthetic_corpus,
    load_embeddings,
    read_corpus_splits,
    split_documents,
    tokenize,
    write_corpus,
    write_embeddings,
)
from .metrics import AVERAGING, RLOSS_SEMANTICS, evaluate
from .persistence import load_model, save_model
from .taxonomy import read_taxonomy
from .trainer import TrainConfig, predict_paths, train_hierarchy

log = logging.getLogger("hmtc")

PRESETS = {
    "wos": {"hidden": 512, "mlp_units": 500},
    "dbpedia": {"hidden": 300, "mlp_units": 500},
}
_CFG_FIELDS = {f.name: f.type for f in fields(TrainConfig)}


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except (UsageError, StageError):
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- config -------------------------------------------------------------------


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    if not isinstance(value, str):
        return value
    kind = _CFG_FIELDS.get(key, "str")
    try:
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None
    return value


def resolve_train_config(args) -> tuple[TrainConfig, dict]:
    """Defaults < preset < config file < command-line flags."""
    values: dict = {}
    extra: dict = {}
    file_values = read_config_file(args.config) if args.config else {}
    preset = args.preset or file_values.pop("preset", None)
    if preset:
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}")
        values.update(PRESETS[preset])
    for k, v in file_values.items():
        if k in _CFG_FIELDS:
            values[k] = _coerce(k, v)
        else:
            extra[k] = v
    for k in _CFG_FIELDS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    if args.no_fine_tuning:
        values["use_fine_tuning"] = False
    if args.no_joint_embedding:
        values["use_joint_embedding"] = False
    try:
        return TrainConfig(**values), extra
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# -- commands -----------------------------------------------------------------


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


@_stage("gen-synth")
def cmd_gen_synth(args) -> int:
    branching = [int(b) for b in args.branching.split(",")]
    tax, docs, emb = generate_synthetic_corpus(
        branching, args.docs_per_leaf, args.signal_tokens, args.noise_vocab, args.doc_len,
        args.seed, d=args.dim, shared_child_signal=args.shared_child_signal)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tax.save(out / "taxonomy.jsonl")
    write_corpus(docs, out / "corpus.jsonl")
    write_embeddings(emb, out / "vectors.txt")
    print(f"wrote {len(docs)} documents, {len(emb.vocab) - 2} word vectors (d={emb.dim}) to {out}")
    return 0


def _load_training_data(args, cfg, extra):
    tax = read_taxonomy(args.taxonomy)
    splits = read_corpus_splits(args.corpus, tax)
    if "train" in splits:
        train = splits["train"]
        val = splits.get("val") or splits.get("validation")
        if not val:
            train, val = split_documents(train, args.val_fraction, cfg.seed)
    else:
        docs = [d for k, ds in splits.items() if k != "test" for d in ds]
        train, val = split_documents(docs, args.val_fraction, cfg.seed)
    if not train or not val:
        raise ValueError("corpus too small for a train/validation split")
    min_count = int(extra.get("min_count", args.min_count))
    vocab = build_vocabulary(train + val, tax, min_count)
    d = _embedding_dim(args.embeddings)
    emb = load_embeddings(args.embeddings, vocab, d)
    return tax, train, val, emb


def _embedding_dim(path) -> int:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                return len(parts) - 1
    raise ValueError(f"{path}: no word vectors")


def cmd_train(args) -> int:
    _require(args, "taxonomy", "corpus", "embeddings", "out")
    cfg, extra = resolve_train_config(args)
    tax, train, val, emb = _stage("load")(_load_training_data)(args, cfg, extra)
    log.info("training %d levels on %d documents (%d validation), d=%d, vocab=%d",
             tax.level_count, len(train), len(val), emb.dim, len(emb.vocab))
    model = _stage("train")(train_hierarchy)(train, val, tax, emb, cfg)

    out = Path(args.out)
    metrics_log = Path(args.metrics_log or f"{out}.metrics.jsonl")
    manifest_path = Path(args.manifest or f"{out}.manifest.json")

    @_stage("save")
    def save():
        save_model(model, out)
        with open(metrics_log, "w", encoding="utf-8") as fh:
            for h in model.histories:
                h.write_log(fh)
        manifest = {
            "command": "train",
            "version": __version__,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "ablations": {"use_fine_tuning": cfg.use_fine_tuning,
                          "use_joint_embedding": cfg.use_joint_embedding},
            "val_fraction": args.val_fraction,
            "min_count": int(extra.get("min_count", args.min_count)),
            "inputs": {name: {"path": str(getattr(args, name)), "sha256": sha256_file(getattr(args, name))}
                       for name in ("taxonomy", "corpus", "embeddings")},
            "outputs": {"model": {"path": str(out), "sha256": sha256_file(out)},
                        "metrics_log": str(metrics_log)},
            "n_train": len(train),
            "n_val": len(val),
            "best_epochs": [h.best_epoch for h in model.histories],
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    save()
    print(f"saved model to {out} (best epochs {[h.best_epoch for h in model.histories]})")
    return 0


def cmd_evaluate(args) -> int:
    _require(args, "model", "embeddings", "corpus")
    model = _stage("load")(load_model)(args.model, args.embeddings)

    @_stage("load")
    def docs():
        splits = read_corpus_splits(args.corpus, model.taxonomy)
        if args.split:
            return splits.get(args.split, [])
        return [d for ds in splits.values() for d in ds]

    report = _stage("evaluate")(evaluate)(model, docs(), args.average, args.rloss_semantics)
    print(report.table())
    if args.report:
        report.write(args.report)
    return 0


def _read_inputs(path):
    fh = sys.stdin if path == "-" else open(path, encoding="utf-8")
    try:
        out = []
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            tokens = tuple(tokenize(rec["text"]))
            if not tokens:
                raise ValueError(f"record {n} ({rec.get('id')!r}) has no tokens")
            out.append(Document(str(rec.get("id", n)), rec["text"], tokens, tuple(rec.get("path", ()))))
        return out
    finally:
        if fh is not sys.stdin:
            fh.close()


def cmd_predict(args) -> int:
    _require(args, "model", "embeddings", "input")
    model = _stage("load")(load_model)(args.model, args.embeddings)
    docs = _stage("load")(_read_inputs)(args.input)
    preds = _stage("predict")(predict_paths)(model, docs) if docs else []
    out = sys.stdout
    for doc, p in zip(docs, preds):
        rec = {
            "id": doc.doc_id,
            "path": p.path,
            "top_prob": [float(row.max()) for row in p.probs],
            "edge_consistent": model.taxonomy.validate_path(p.path),
        }
        out.write(json.dumps(rec, sort_keys=True) + "\n")
    return 0


def parameter_table(d, n, u, classes) -> dict:
    levels = [{"level": j, "classes": k, **count_params(d, n, u, k)} for j, k in enumerate(classes, start=1)]
    return {"dim": d, "hidden": n, "mlp_units": u, "levels": levels,
            "total": sum(lv["total"] for lv in levels)}


@_stage("count-params")
def cmd_count_params(args) -> int:
    if args.model:
        from .persistence import read_header
        meta = read_header(args.model)
        d = meta["embedding"]["shape"][1]
        n = meta["levels"][0]["hidden"]
        u = meta["levels"][0]["mlp_units"]
        classes = [len(lv["categories"]) for lv in meta["levels"]]
    else:
        _require(args, "dim")
        n = args.hidden or 512
        u = args.mlp_units or 500
        d = args.dim
        if args.taxonomy:
            tax = read_taxonomy(args.taxonomy)
            classes = [tax.num_classes(j) for j in range(1, tax.level_count + 1)]
        elif args.classes:
            classes = [int(k) for k in args.classes.split(",")]
        else:
            raise UsageError("give --classes, --taxonomy or --model")
    table = parameter_table(d, n, u, classes)
    if args.json:
        print(json.dumps(table, sort_keys=True))
        return 0
    print(f"d={d} n={n} u={u}")
    print(f"{'level':>5} {'classes':>8} {'onlstm':>12} {'batch_norm':>11} {'mlp':>12} {'total':>12}")
    for lv in table["levels"]:
        print(f"{lv['level']:>5} {lv['classes']:>8} {lv['onlstm']:>12} {lv['batch_norm']:>11} "
              f"{lv['mlp']:>12} {lv['total']:>12}")
    print(f"{'all':>5} {'':>8} {'':>12} {'':>11} {'':>12} {table['total']:>12}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmtc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="write a synthetic taxonomy, corpus and word vectors")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--branching", default="3,3", help="children per node at each level, e.g. 3,3")
    g.add_argument("--docs-per-leaf", type=int, default=50)
    g.add_argument("--signal-tokens", type=int, default=1)
    g.add_argument("--noise-vocab", type=int, default=20)
    g.add_argument("--doc-len", type=int, default=12)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--shared-child-signal", action="store_true",
                   help="child classes separable only given the parent")
    g.set_defaults(func=cmd_gen_synth)

    t = sub.add_parser("train", help="train all levels and save a model bundle")
    t.add_argument("--taxonomy")
    t.add_argument("--corpus")
    t.add_argument("--embeddings")
    t.add_argument("--out", help="model bundle path")
    t.add_argument("--config", help="flat key = value config file")
    t.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--metrics-log")
    t.add_argument("--manifest")
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--min-count", type=int, default=1)
    t.add_argument("--seed", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--mlp-units", dest="mlp_units", type=int)
    t.add_argument("--max-epochs", dest="max_epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--lr", dest="initial_lr", type=float)
    t.add_argument("--max-len", dest="max_len", type=int)
    t.add_argument("--early-stop-patience", dest="early_stop_patience", type=int)
    t.add_argument("--no-fine-tuning", action="store_true")
    t.add_argument("--no-joint-embedding", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a model bundle on a corpus")
    e.add_argument("--model")
    e.add_argument("--embeddings")
    e.add_argument("--corpus")
    e.add_argument("--split", help="only records whose split field equals this")
    e.add_argument("--average", choices=AVERAGING, default="macro")
    e.add_argument("--rloss-semantics", choices=RLOSS_SEMANTICS, default="as_printed")
    e.add_argument("--report", help="write the report as line-delimited JSON")
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("predict", help="predict label paths for {id, text} records")
    pr.add_argument("--model")
    pr.add_argument("--embeddings")
    pr.add_argument("--input", help="line-delimited JSON records, or - for stdin")
    pr.set_defaults(func=cmd_predict)

    c = sub.add_parser("count-params", help="trainable parameter counts per level")
    c.add_argument("--model")
    c.add_argument("--taxonomy")
    c.add_argument("--classes", help="classes per level, e.g. 7,134")
    c.add_argument("--dim", type=int)
    c.add_argument("--hidden", type=int)
    c.add_argument("--mlp-units", dest="mlp_units", type=int)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_count_params)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hmtc: error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"hmtc: {exc.stage} failed: {exc.__cause__}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
