import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmtc.corpus import (
    PAD_ID,
    UNK_ID,
    Document,
    Vocabulary,
    build_vocabulary,
    compose_level_input,
    encode_batch,
    generate_synthetic_corpus,
    load_embeddings,
    read_corpus,
    read_corpus_splits,
    read_word_vectors,
    split_documents,
    tokenize,
    write_corpus,
    write_embeddings,
)
from hmtc.taxonomy import build_taxonomy

EDGES = [("root", "A"), ("root", "B"), ("A", "A1"), ("A", "A2"), ("B", "B1")]
LABELS = {"root": "root", "A": "Sports", "B": "Team Sport", "A1": "tennis", "A2": "golf", "B1": "rugby"}


@pytest.fixture
def tax():
    return build_taxonomy(EDGES, LABELS, "root")


class TestTokenize:
    @pytest.mark.parametrize("text,expected", [
        ("The Match, today!", ["the", "match", "today"]),
        ("", []),
        ("A-B c", ["a-b", "c"]),
        ("  ...  ", []),
        ("tab\tand\nnewline", ["tab", "and", "newline"]),
        ("'quoted' (paren)", ["quoted", "paren"]),
    ])
    def test_examples(self, text, expected):
        assert tokenize(text) == expected

    @given(st.text())
    def test_tokens_clean(self, text):
        for tok in tokenize(text):
            assert tok and tok == tok.lower() and not any(c.isspace() for c in tok)


class TestDocument:
    def test_rejects_empty(self, tax):
        with pytest.raises(ValueError, match="no tokens"):
            Document.create("d", "!!", ["A", "A1"], tax)

    def test_rejects_inconsistent_path(self, tax):
        with pytest.raises(ValueError, match="inconsistent"):
            Document.create("d", "x", ["A", "B1"], tax)

    def test_corpus_round_trip(self, tax, tmp_path):
        docs = [Document.create("1", "Ace serve", ["A", "A1"], tax),
                Document.create("2", "scrum", ["B", "B1"], tax)]
        write_corpus(docs, tmp_path / "c.jsonl")
        assert read_corpus(tmp_path / "c.jsonl", tax) == docs

    def test_split_field(self, tmp_path):
        (tmp_path / "c.jsonl").write_text(
            '{"id": "1", "text": "a", "path": ["A", "A1"], "split": "test"}\n'
            '{"id": "2", "text": "b", "path": ["B", "B1"]}\n')
        splits = read_corpus_splits(tmp_path / "c.jsonl")
        assert [d.doc_id for d in splits["test"]] == ["1"]
        assert [d.doc_id for d in splits[""]] == ["2"]

    def test_missing_field(self, tmp_path):
        (tmp_path / "c.jsonl").write_text('{"id": "1", "text": "a"}\n')
        with pytest.raises(ValueError, match="path"):
            read_corpus(tmp_path / "c.jsonl")


class TestVocabulary:
    def test_min_count_and_labels(self):
        t = build_taxonomy([("root", "s")], {"root": "root", "s": "sports"}, "root")
        docs = [Document.create("1", "a a a a a b", ["s"], t)]
        v = build_vocabulary(docs, t, min_count=2)
        assert {"<pad>", "<unk>", "a", "sports"} <= set(v.tokens)
        assert "b" not in v
        assert "b" in build_vocabulary(docs, t, min_count=1)

    def test_reserved_indices(self, tax):
        v = build_vocabulary([Document.create("1", "x", ["A", "A1"], tax)], tax)
        assert v.lookup(["<pad>", "<unk>", "never-seen"]) == [PAD_ID, UNK_ID, UNK_ID]
        assert sorted(v.index.values()) == list(range(len(v)))

    def test_empty_corpus(self, tax):
        with pytest.raises(ValueError):
            build_vocabulary([], tax)

    def test_order_independent(self, tax):
        docs = [Document.create(str(i), t, ["A", "A1"], tax) for i, t in enumerate(["z y", "b a", "m"])]
        assert build_vocabulary(docs, tax) == build_vocabulary(docs[::-1], tax)

    def test_file_round_trip(self, tax, tmp_path):
        v = build_vocabulary([Document.create("1", "x y", ["A", "A1"], tax)], tax)
        v.save(tmp_path / "v.txt")
        assert Vocabulary.load(tmp_path / "v.txt") == v

    def test_must_start_with_reserved(self):
        with pytest.raises(ValueError):
            Vocabulary(["a", "<pad>", "<unk>"])


class TestEmbeddings:
    def test_copy_and_missing(self, tmp_path):
        (tmp_path / "w.txt").write_text("cat 0.1 0.2\nunused 5 5\n")
        v = Vocabulary(["<pad>", "<unk>", "cat", "dog"])
        emb = load_embeddings(tmp_path / "w.txt", v, 2)
        np.testing.assert_array_equal(emb.matrix, [[0, 0], [0, 0], [0.1, 0.2], [0, 0]])
        assert emb.coverage == 0.5

    def test_dimension_mismatch(self, tmp_path):
        (tmp_path / "w.txt").write_text("cat 0.1 0.2 0.3\n")
        with pytest.raises(ValueError, match="expected 2"):
            load_embeddings(tmp_path / "w.txt", Vocabulary(["<pad>", "<unk>", "cat"]), 2)

    def test_unreadable(self, tmp_path):
        with pytest.raises(OSError):
            read_word_vectors(tmp_path / "nope.txt")

    def test_write_protected(self):
        _, _, emb = generate_synthetic_corpus([2], 1, seed=0, d=4)
        assert emb.frozen
        with pytest.raises(ValueError):
            emb.matrix[2, 0] = 1.0

    def test_write_read_exact(self, tmp_path):
        _, _, emb = generate_synthetic_corpus([2, 2], 2, seed=1, d=5)
        write_embeddings(emb, tmp_path / "w.txt")
        back = load_embeddings(tmp_path / "w.txt", emb.vocab, 5)
        np.testing.assert_array_equal(back.matrix, emb.matrix)


class TestCompose:
    def test_level_one(self):
        assert compose_level_input(["the", "match"], 1, None) == ["the", "match"]

    def test_parent_prepended(self):
        assert compose_level_input(["the", "match"], 2, "Sports") == ["sports", "the", "match"]

    def test_multi_token_label(self):
        assert compose_level_input(["x"], 2, "Team Sport") == ["team", "sport", "x"]

    @pytest.mark.parametrize("level,label", [(1, "Sports"), (2, ""), (2, None), (0, None)])
    def test_errors(self, level, label):
        with pytest.raises(ValueError):
            compose_level_input(["x"], level, label)

    @given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1),
           st.text(alphabet="abc XY,", min_size=1).filter(lambda s: tokenize(s)))
    def test_prefix_is_label(self, toks, label):
        out = compose_level_input(toks, 2, label)
        k = len(tokenize(label))
        assert out[:k] == tokenize(label) and out[k:] == toks


class TestEncode:
    V = Vocabulary(["<pad>", "<unk>", "a", "b", "c"])

    def test_truncate_keeps_prefix(self):
        b = encode_batch([["a", "b", "c"]], self.V, 2, 1)
        np.testing.assert_array_equal(b.ids, [[2, 3]])

    def test_right_pad(self):
        b = encode_batch([["a"]], self.V, 3, 1)
        np.testing.assert_array_equal(b.ids, [[2, 0, 0]])
        np.testing.assert_array_equal(b.mask, [[True, False, False]])

    def test_unknown(self):
        assert encode_batch([["q"]], self.V, 1, 1).ids[0, 0] == UNK_ID

    def test_targets(self):
        b = encode_batch([["a"], ["b"]], self.V, 2, 1, {"X": 0, "Y": 1}, ["Y", "X"])
        np.testing.assert_array_equal(b.targets, [1, 0])

    def test_unknown_class(self):
        with pytest.raises(ValueError, match="Z"):
            encode_batch([["a"]], self.V, 2, 1, {"X": 0}, ["Z"])

    @given(st.lists(st.lists(st.text(alphabet="abcdq", min_size=1), min_size=1), min_size=1),
           st.integers(1, 8))
    def test_indices_in_range(self, seqs, max_len):
        b = encode_batch(seqs, self.V, max_len, 1)
        assert b.ids.shape == (len(seqs), max_len)
        assert b.ids.min() >= 0 and b.ids.max() < len(self.V)


class TestSynthetic:
    def test_counts(self):
        tax, docs, emb = generate_synthetic_corpus([3, 3], 30)
        assert [tax.num_classes(1), tax.num_classes(2)] == [3, 9]
        assert len(docs) == 270

    def test_single_level(self):
        tax, docs, _ = generate_synthetic_corpus([2], 1)
        assert tax.level_count == 1 and len(docs) == 2

    def test_deterministic(self, tmp_path):
        for k in (1, 2):
            _, docs, emb = generate_synthetic_corpus([2, 3], 4, seed=5)
            write_corpus(docs, tmp_path / f"c{k}.jsonl")
            write_embeddings(emb, tmp_path / f"e{k}.txt")
        assert (tmp_path / "c1.jsonl").read_bytes() == (tmp_path / "c2.jsonl").read_bytes()
        assert (tmp_path / "e1.txt").read_bytes() == (tmp_path / "e2.txt").read_bytes()

    def test_seed_matters(self):
        a = generate_synthetic_corpus([2, 2], 3, seed=0)[1]
        b = generate_synthetic_corpus([2, 2], 3, seed=1)[1]
        assert [d.text for d in a] != [d.text for d in b]

    def test_every_path_class_signalled(self):
        tax, docs, _ = generate_synthetic_corpus([3, 2], 10, signal_fraction=0.0, doc_len=4)
        for d in docs:
            for node in d.path:
                assert any(t.startswith(f"s{node}t") for t in d.tokens)

    def test_shared_signal_hides_parent(self):
        tax, docs, _ = generate_synthetic_corpus([2, 2], 5, shared_child_signal=True)
        for d in docs:
            assert not any(t.startswith("sl1") for t in d.tokens)
        # children at the same sibling position look alike across branches
        by_pos = {}
        for d in docs:
            sig = {t for t in d.tokens if t.startswith("s")}
            by_pos.setdefault(d.path[1][-1] in "02468", set()).update(sig)
        assert all(len(s) == 1 for s in by_pos.values())

    def test_embedding_rows(self):
        _, _, emb = generate_synthetic_corpus([2], 3, d=8)
        np.testing.assert_array_equal(emb.matrix[:2], 0.0)
        assert emb.dim == 8 and emb.coverage == 1.0

    @pytest.mark.parametrize("kw", [{"branching": []}, {"branching": [0]}, {"docs_per_leaf": 0},
                                    {"doc_len": 1, "branching": [2, 2]}])
    def test_bad_args(self, kw):
        args = {"branching": [2], "docs_per_leaf": 1} | kw
        with pytest.raises(ValueError):
            generate_synthetic_corpus(**args)


def test_split_documents():
    _, docs, _ = generate_synthetic_corpus([2, 2], 10)
    keep, held = split_documents(docs, 0.1, 3)
    assert len(held) == 4 and len(keep) == 36
    assert {d.doc_id for d in keep}.isdisjoint(d.doc_id for d in held)
    assert split_documents(docs, 0.1, 3) == (keep, held)
