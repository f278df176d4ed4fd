import struct

import numpy as np
import pytest

import datagen
from sentcomp.embeddings import (
    CEMB_MAGIC,
    ContextualStore,
    EmbeddingError,
    EmbeddingTable,
    GloveFormatError,
    StoreFormatError,
    embed,
    load_contextual_store,
    load_static_table,
    write_contextual_store,
)


class TestStaticTable:
    def test_two_entry_file(self, tmp_path):
        path = tmp_path / "vecs.txt"
        path.write_text("the 0.1 0.2\ncat 0.3 0.4\n")
        table = load_static_table(str(path))
        assert table.dim == 2
        assert len(table) == 2
        assert np.allclose(table.lookup("cat"), [0.3, 0.4])

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "vecs.txt"
        path.write_text("the 0.1 0.2\ncat 0.3 0.4 0.5\n")
        with pytest.raises(GloveFormatError):
            load_static_table(str(path))

    def test_unparseable_float(self, tmp_path):
        path = tmp_path / "vecs.txt"
        path.write_text("the 0.1 oops\n")
        with pytest.raises(GloveFormatError):
            load_static_table(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "vecs.txt"
        path.write_text("")
        with pytest.raises(GloveFormatError):
            load_static_table(str(path))

    def test_large_table_loads(self, tmp_path):
        # Stand-in for a real 400k x 300 table, scaled down for test speed.
        path = tmp_path / "big.txt"
        vocab = [f"tok{i}" for i in range(5000)]
        datagen.write_random_glove(str(path), vocab, dim=300)
        table = load_static_table(str(path))
        assert table.dim == 300
        assert len(table) == 5000

    def test_lookup_falls_back_to_lowercase_then_zero(self):
        table = EmbeddingTable(dim=2, vectors={"cat": np.array([1.0, 2.0])})
        assert np.allclose(table.lookup("Cat"), [1.0, 2.0])
        assert np.array_equal(table.lookup("dog"), [0.0, 0.0])

    def test_exact_match_wins_over_lowercase(self):
        table = EmbeddingTable(
            dim=1, vectors={"Cat": np.array([1.0]), "cat": np.array([2.0])}
        )
        assert table.lookup("Cat") == np.array([1.0])


class TestContextualStore:
    def test_write_then_read_identity(self, tmp_path):
        path = tmp_path / "one.cemb"
        mat = np.arange(12, dtype=np.float32).reshape(3, 4)
        write_contextual_store([("s1", mat)], dim=4, path=str(path))
        store = load_contextual_store(str(path))
        assert store.dim == 4
        assert np.array_equal(store.entries["s1"], mat)

    def test_file_round_trip_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        entries = [
            (f"s{i}", rng.normal(size=(rng.integers(1, 9), 6)).astype(np.float32))
            for i in range(10)
        ]
        first = tmp_path / "a.cemb"
        write_contextual_store(entries, dim=6, path=str(first))
        store = load_contextual_store(str(first))
        second = tmp_path / "b.cemb"
        write_contextual_store(list(store.entries.items()), dim=store.dim, path=str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.cemb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(StoreFormatError):
            load_contextual_store(str(path))

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.cemb"
        path.write_bytes(CEMB_MAGIC + struct.pack("<IIQ", 9, 4, 0))
        with pytest.raises(StoreFormatError):
            load_contextual_store(str(path))

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.cemb"
        write_contextual_store(
            [("s1", np.zeros((3, 4), dtype=np.float32))], dim=4, path=str(path)
        )
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(StoreFormatError):
            load_contextual_store(str(path))

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "dup.cemb"
        mat = np.zeros((1, 2), dtype=np.float32)
        write_contextual_store([("s1", mat), ("s1", mat)], dim=2, path=str(path))
        with pytest.raises(StoreFormatError):
            load_contextual_store(str(path))

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "trail.cemb"
        write_contextual_store(
            [("s1", np.zeros((1, 2), dtype=np.float32))], dim=2, path=str(path)
        )
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(StoreFormatError):
            load_contextual_store(str(path))

    def test_row_count_checked_at_lookup(self):
        store = ContextualStore(dim=2, entries={"s1": np.zeros((3, 2))})
        with pytest.raises(EmbeddingError):
            store.matrix("s1", 4)


class TestEmbed:
    def test_concatenation_width_and_layout(self):
        static = EmbeddingTable(
            dim=2, vectors={"a": np.array([1.0, 2.0]), "b": np.array([3.0, 4.0])}
        )
        ctx = ContextualStore(dim=3, entries={"s": np.arange(6, dtype=float).reshape(2, 3)})
        mat = embed(["a", "b"], static, ctx, sentence_id="s")
        assert mat.shape == (2, 5)
        assert np.allclose(mat[0], [1.0, 2.0, 0.0, 1.0, 2.0])
        assert np.allclose(mat[1], [3.0, 4.0, 3.0, 4.0, 5.0])

    def test_oov_token_gets_zero_static_half(self):
        static = EmbeddingTable(dim=2, vectors={"a": np.array([1.0, 2.0])})
        mat = embed(["zzz"], static)
        assert np.array_equal(mat, [[0.0, 0.0]])

    def test_static_only_is_prefix_of_concatenated(self):
        static = EmbeddingTable(
            dim=2, vectors={"a": np.array([1.0, 2.0]), "b": np.array([3.0, 4.0])}
        )
        ctx = ContextualStore(dim=3, entries={"s": np.ones((2, 3))})
        base = embed(["a", "b"], static)
        both = embed(["a", "b"], static, ctx, sentence_id="s")
        assert np.array_equal(both[:, :2], base)
        assert np.array_equal(both[:, 2:], np.ones((2, 3)))

    def test_missing_sentence_id(self):
        static = EmbeddingTable(dim=1, vectors={"a": np.array([1.0])})
        ctx = ContextualStore(dim=1, entries={})
        with pytest.raises(EmbeddingError):
            embed(["a"], static, ctx, sentence_id="nope")

    def test_embed_does_not_mutate_providers(self):
        vec = np.array([1.0, 2.0])
        static = EmbeddingTable(dim=2, vectors={"a": vec})
        ctx_mat = np.ones((1, 2))
        ctx = ContextualStore(dim=2, entries={"s": ctx_mat})
        out = embed(["a"], static, ctx, sentence_id="s")
        out += 100.0
        assert np.array_equal(static.vectors["a"], [1.0, 2.0])
        assert np.array_equal(ctx.entries["s"], np.ones((1, 2)))
