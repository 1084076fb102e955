import io
import json
from pathlib import Path

import pytest

from hmtc.cli import main, parameter_table
from hmtc.metrics import EvalReport

GOLDEN = Path(__file__).parent / "data" / "golden_predict.jsonl"
TRAIN_FLAGS = ["--hidden", "8", "--mlp-units", "6", "--max-epochs", "3", "--max-len", "32",
               "--batch-size", "16", "--seed", "7"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["gen-synth", "--out-dir", str(d), "--branching", "2,2", "--docs-per-leaf", "8",
                 "--dim", "8", "--seed", "7"]) == 0
    return d


def train_args(d, out, *extra):
    return ["train", "--taxonomy", str(d / "taxonomy.jsonl"), "--corpus", str(d / "corpus.jsonl"),
            "--embeddings", str(d / "vectors.txt"), "--out", str(out), *TRAIN_FLAGS, *extra]


@pytest.fixture(scope="module")
def model_path(synth_dir):
    out = synth_dir / "model.bin"
    assert main(train_args(synth_dir, out)) == 0
    return out


class TestGenSynth:
    def test_files(self, synth_dir):
        for name in ("taxonomy.jsonl", "corpus.jsonl", "vectors.txt"):
            assert (synth_dir / name).stat().st_size > 0
        assert len((synth_dir / "corpus.jsonl").read_text().splitlines()) == 32

    def test_bad_branching_is_runtime_failure(self, tmp_path, capsys):
        assert main(["gen-synth", "--out-dir", str(tmp_path), "--branching", "2,x"]) == 1
        assert "gen-synth" in capsys.readouterr().err


class TestTrain:
    def test_outputs(self, model_path):
        manifest = json.loads(Path(f"{model_path}.manifest.json").read_text())
        assert manifest["seed"] == 7
        assert set(manifest["inputs"]) == {"taxonomy", "corpus", "embeddings"}
        assert all(len(v["sha256"]) == 64 for v in manifest["inputs"].values())
        assert manifest["config"]["hidden"] == 8
        log = Path(f"{model_path}.metrics.jsonl").read_text().splitlines()
        assert {json.loads(x)["level"] for x in log} == {1, 2}

    def test_deterministic(self, synth_dir, model_path, tmp_path):
        again = tmp_path / "again.bin"
        assert main(train_args(synth_dir, again)) == 0
        assert again.read_bytes() == model_path.read_bytes()
        assert (Path(f"{again}.metrics.jsonl").read_bytes()
                == Path(f"{model_path}.metrics.jsonl").read_bytes())

    def test_ablation_manifest(self, synth_dir, tmp_path):
        out = tmp_path / "abl.bin"
        assert main(train_args(synth_dir, out, "--no-fine-tuning", "--no-joint-embedding")) == 0
        m = json.loads(Path(f"{out}.manifest.json").read_text())
        assert m["ablations"] == {"use_fine_tuning": False, "use_joint_embedding": False}

    def test_missing_embeddings_is_usage_error(self, synth_dir, tmp_path, capsys):
        args = [a for a in train_args(synth_dir, tmp_path / "m.bin")]
        i = args.index("--embeddings")
        del args[i:i + 2]
        assert main(args) == 2
        assert "--embeddings" in capsys.readouterr().err

    def test_unreadable_corpus_names_stage(self, synth_dir, tmp_path, capsys):
        args = train_args(synth_dir, tmp_path / "m.bin")
        args[args.index("--corpus") + 1] = str(tmp_path / "missing.jsonl")
        assert main(args) == 1
        assert "load" in capsys.readouterr().err

    def test_config_precedence(self, synth_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# small run\nhidden = 5\nmlp_units = 4\nmax_epochs = 1\nseed = 3\n")
        out = tmp_path / "c.bin"
        base = train_args(synth_dir, out)
        base = base[:base.index("--hidden")]  # drop the default flags
        assert main(base + ["--config", str(cfg), "--seed", "11", "--max-len", "32"]) == 0
        m = json.loads(Path(f"{out}.manifest.json").read_text())
        assert (m["config"]["hidden"], m["config"]["mlp_units"], m["seed"]) == (5, 4, 11)

    def test_bad_config_value(self, synth_dir, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("hidden = many\n")
        assert main(train_args(synth_dir, tmp_path / "m.bin", "--config", str(cfg))) == 2

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 2


class TestEvaluate:
    def test_report(self, synth_dir, model_path, tmp_path, capsys):
        rep_path = tmp_path / "r.jsonl"
        assert main(["evaluate", "--model", str(model_path), "--embeddings", str(synth_dir / "vectors.txt"),
                     "--corpus", str(synth_dir / "corpus.jsonl"), "--report", str(rep_path)]) == 0
        out = capsys.readouterr().out
        assert "ranking loss (flat" in out and "ranking loss (hierarchical" in out
        rep = EvalReport.read(rep_path)
        assert len(rep.level_accuracy) == 2

    def test_wrong_embeddings(self, synth_dir, model_path, tmp_path, capsys):
        other = tmp_path / "other"
        main(["gen-synth", "--out-dir", str(other), "--branching", "2,2", "--docs-per-leaf", "8",
              "--dim", "8", "--seed", "8"])
        code = main(["evaluate", "--model", str(model_path), "--embeddings", str(other / "vectors.txt"),
                     "--corpus", str(synth_dir / "corpus.jsonl")])
        assert code == 1
        assert "fingerprint" in capsys.readouterr().err


class TestPredict:
    def _run(self, synth_dir, model_path, inp, capsys):
        code = main(["predict", "--model", str(model_path), "--embeddings",
                     str(synth_dir / "vectors.txt"), "--input", str(inp)])
        return code, [json.loads(x) for x in capsys.readouterr().out.splitlines()]

    def test_single(self, synth_dir, model_path, tmp_path, capsys):
        inp = tmp_path / "one.jsonl"
        inp.write_text('{"id": "q", "text": "noise001 noise002"}\n')
        code, recs = self._run(synth_dir, model_path, inp, capsys)
        assert code == 0 and len(recs) == 1
        assert len(recs[0]["path"]) == 2 and len(recs[0]["top_prob"]) == 2
        assert isinstance(recs[0]["edge_consistent"], bool)

    def test_empty(self, synth_dir, model_path, tmp_path, capsys):
        inp = tmp_path / "empty.jsonl"
        inp.write_text("")
        assert self._run(synth_dir, model_path, inp, capsys) == (0, [])

    def test_stdin(self, synth_dir, model_path, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO('{"id": "s", "text": "hello"}\n'))
        code, recs = self._run(synth_dir, model_path, "-", capsys)
        assert code == 0 and recs[0]["id"] == "s"

    def test_golden(self, synth_dir, model_path, tmp_path, capsys):
        inp = tmp_path / "fixture.jsonl"
        lines = (synth_dir / "corpus.jsonl").read_text().splitlines()[::8]
        inp.write_text("\n".join(lines) + "\n")
        code, recs = self._run(synth_dir, model_path, inp, capsys)
        assert code == 0
        golden = [json.loads(x) for x in GOLDEN.read_text().splitlines()]
        assert [(r["id"], r["path"], r["edge_consistent"]) for r in recs] == \
               [(g["id"], g["path"], g["edge_consistent"]) for g in golden]
        for r, g in zip(recs, golden):
            assert r["top_prob"] == pytest.approx(g["top_prob"], rel=1e-9)


class TestCountParams:
    def test_table(self, capsys):
        assert main(["count-params", "--dim", "300", "--hidden", "512", "--mlp-units", "500",
                     "--classes", "7", "--json"]) == 0
        table = json.loads(capsys.readouterr().out)
        lv = table["levels"][0]
        assert lv["onlstm"] == 6 * (300 * 512 + 512 ** 2 + 512)
        assert lv["batch_norm"] == 1024 and lv["mlp"] == 512 * 500 + 500 + 500 * 7 + 7

    def test_from_model_matches_stored(self, model_path, capsys):
        from hmtc.persistence import read_header

        assert main(["count-params", "--model", str(model_path), "--json"]) == 0
        table = json.loads(capsys.readouterr().out)
        meta = read_header(model_path)
        data = model_path.read_bytes()
        assert table["levels"][0]["classes"] == 2 and table["levels"][1]["classes"] == 4
        # the stored tensors include the running statistics, which are not trained
        stored = _stored_scalars(data, meta)
        assert table["total"] == stored

    def test_human_table(self, capsys):
        assert main(["count-params", "--dim", "4", "--hidden", "5", "--mlp-units", "3", "--classes", "2"]) == 0
        assert "336" in capsys.readouterr().out

    def test_needs_classes(self):
        assert main(["count-params", "--dim", "4"]) == 2

    def test_taxonomy_source(self, synth_dir):
        assert main(["count-params", "--dim", "8", "--taxonomy", str(synth_dir / "taxonomy.jsonl")]) == 0

    def test_embedding_excluded(self):
        t = parameter_table(300, 512, 500, [7])
        assert t["total"] == t["levels"][0]["onlstm"] + 1024 + 512 * 500 + 500 + 500 * 7 + 7


def _stored_scalars(data, meta):
    import struct

    pos = data.find(b"end-header\n") + len(b"end-header\n")
    total = 0
    for _ in range(meta["blocks"]):
        (hlen,) = struct.unpack("<I", data[pos:pos + 4])
        head = json.loads(data[pos + 4:pos + 4 + hlen])
        (plen,) = struct.unpack("<Q", data[pos + 4 + hlen:pos + 12 + hlen])
        if not head["name"].endswith(("running_mean", "running_var")):
            total += plen // 8
        pos += 12 + hlen + plen + 4
    return total
