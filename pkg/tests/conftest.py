import sys
import time

import pytest

from hmtc.corpus import generate_synthetic_corpus, split_documents
from hmtc.trainer import TrainConfig, train_hierarchy

# the overfit configuration: 3x3 tree, 50 documents per leaf, small network
SYNTH = dict(branching=[3, 3], docs_per_leaf=50, seed=7, d=16)
SYNTH_CFG = dict(hidden=32, mlp_units=16, max_epochs=50, max_len=64, seed=7)


TIMINGS = {}


@pytest.fixture(scope="session")
def synth_data():
    tax, docs, emb = generate_synthetic_corpus(**SYNTH)
    train, val = split_documents(docs, 0.1, 7)
    return tax, docs, emb, train, val


@pytest.fixture(scope="session")
def trained(synth_data):
    """A model trained once per session on the synthetic corpus; treat as read-only."""
    tax, docs, emb, train, val = synth_data
    snapshots = {}

    def on_epoch(epoch, clf):
        if epoch == 0:
            snapshots[clf.level] = clf.rnn.copy()

    start = time.perf_counter()
    model = train_hierarchy(train, val, tax, emb, TrainConfig(**SYNTH_CFG), on_epoch)
    TIMINGS["synthetic_training"] = time.perf_counter() - start
    return model, snapshots


@pytest.fixture(scope="session")
def tiny_data():
    tax, docs, emb = generate_synthetic_corpus([2, 2], 6, seed=3, d=6, doc_len=6)
    train, val = split_documents(docs, 0.25, 3)
    return tax, docs, emb, train, val


TINY_CFG = dict(hidden=6, mlp_units=5, max_epochs=3, max_len=16, batch_size=8, seed=3)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[n])
