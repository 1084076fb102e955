# # The command-line pipeline, end to end
#
# gen-synth writes a taxonomy, a corpus and word vectors. train saves a model
# bundle, a per-epoch log and a run manifest. evaluate and predict reload
# the bundle against the same word vectors.

import json
import tempfile
from pathlib import Path

from hmtc.cli import main

work = Path(tempfile.mkdtemp())
main(["gen-synth", "--out-dir", str(work), "--branching", "2,3", "--docs-per-leaf", "20", "--seed", "1"])

files = dict(taxonomy=work / "taxonomy.jsonl", corpus=work / "corpus.jsonl", embeddings=work / "vectors.txt")
train_cmd = ["train", "--out", str(work / "model.bin"), "--hidden", "16", "--mlp-units", "8",
             "--max-epochs", "15", "--seed", "1"]
for k, v in files.items():
    train_cmd += [f"--{k}", str(v)]
assert main(train_cmd) == 0

manifest = json.loads((work / "model.bin.manifest.json").read_text())
print("manifest seed", manifest["seed"], "ablations", manifest["ablations"])

main(["evaluate", "--model", str(work / "model.bin"), "--embeddings", str(files["embeddings"]),
      "--corpus", str(files["corpus"])])

(work / "query.jsonl").write_text(json.dumps({"id": "q1", "text": "noise003 noise011"}) + "\n")
main(["predict", "--model", str(work / "model.bin"), "--embeddings", str(files["embeddings"]),
      "--input", str(work / "query.jsonl")])

# Training twice with the same seed gives the same bytes.
train_cmd[train_cmd.index("--out") + 1] = str(work / "again.bin")
main(train_cmd)
print("identical bundles:", (work / "model.bin").read_bytes() == (work / "again.bin").read_bytes())
