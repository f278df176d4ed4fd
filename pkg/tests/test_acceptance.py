"""Acceptance suite: one test per exit criterion, each printing a pass/fail
line with its runtime (visible under ``pytest -s`` or in captured output).

Two criteria are defined over the real training corpus and real GloVe-300
vectors. When those artifacts are present, point SENTCOMP_DATA at the pairs
JSONL and SENTCOMP_GLOVE at the vector file and the tests use them; in their
absence the suite falls back to the statistics-matched synthetic corpus from
datagen (clearly labeled in the output) with identical thresholds.
"""

import json
import os
import re
import struct
import time
from contextlib import contextmanager

import numpy as np
import pytest

import datagen
import oracles
from sentcomp import cli, crf, model
from sentcomp.corpus import align, apply_labels, parse_pairs, tokenize
from sentcomp.embeddings import (
    CEMB_MAGIC,
    EmbeddingTable,
    StoreFormatError,
    load_contextual_store,
    write_contextual_store,
)
from sentcomp.metrics import compression_rate, deletion_f1
from sentcomp.model import CheckpointError, ModelConfig, init_params, loss_and_grads

WORKED_ORIGINAL = (
    "Floyd Mayweather is open to fighting Amir Khan in the future, despite "
    "snubbing the Bolton-born boxer in favour of a May bout with Argentine "
    "Marcos Maidana, according to promoters Golden Boy."
)
WORKED_COMPRESSION = "Floyd Mayweather is open to fighting Amir Khan in the future."


@contextmanager
def criterion(name, budget_s=None):
    t0 = time.monotonic()
    ok = False
    try:
        yield
        dt = time.monotonic() - t0
        if budget_s is not None and dt >= budget_s:
            raise AssertionError(f"runtime {dt:.1f}s exceeded budget {budget_s}s")
        ok = True
        print(f"[PASS] {name} ({dt:.1f}s)")
    finally:
        if not ok:
            print(f"[FAIL] {name}")


def real_pairs():
    """Alignable pairs from SENTCOMP_DATA, or None when not provided."""
    path = os.environ.get("SENTCOMP_DATA")
    if not path:
        return None
    with open(path, encoding="utf-8") as fh:
        pairs = parse_pairs(fh, on_error=lambda err: None)
    alignable = []
    for pair in pairs:
        try:
            align(pair)
        except Exception:
            continue
        alignable.append(pair)
        if len(alignable) >= 20000:
            break
    return alignable


def corpus_source(n):
    pairs = real_pairs()
    if pairs is not None and len(pairs) >= n:
        return pairs[:n], "real"
    return datagen.make_corpus(n, seed=0), "synthetic"


def static_table(vocab, dim=300):
    path = os.environ.get("SENTCOMP_GLOVE")
    if path:
        from sentcomp.embeddings import load_static_table

        return load_static_table(path), "real"
    return (
        EmbeddingTable(dim=dim, vectors={w: datagen.random_vector(w, dim) for w in vocab}),
        "surrogate",
    )


def test_crf_oracle_equivalence():
    with criterion("CRF oracle equivalence (500 lattices, T<=8)", budget_s=10):
        rng = np.random.default_rng(2024)
        for _ in range(500):
            T = int(rng.integers(1, 9))
            lattice = crf.CrfLattice(
                emissions=rng.normal(size=(T, 2)) * 2.0,
                transitions=rng.normal(size=(2, 2)),
                start=rng.normal(size=2),
                stop=rng.normal(size=2),
            )
            assert abs(crf.log_partition(lattice) - oracles.brute_log_partition(lattice)) < 1e-8
            assert np.max(np.abs(crf.marginals(lattice) - oracles.brute_marginals(lattice))) < 1e-8
            best_path, best_score = oracles.brute_best_path(lattice)
            decoded = crf.viterbi(lattice)
            assert decoded.labels == best_path
            assert abs(decoded.score - best_score) < 1e-8


def test_gradient_suite():
    with criterion("gradient suite (full model T=4 E=5 H=3)", budget_s=60):
        config = ModelConfig(static_dim=5, hidden_size=3)
        params = init_params(config, seed=42)
        rng = np.random.default_rng(43)
        x = rng.normal(size=(4, 5))
        gold = [0, 1, 1, 0]
        _, grads = loss_and_grads(params, x, gold)
        for name, arr in params.tensors().items():
            fd = oracles.finite_diff(lambda: loss_and_grads(params, x, gold)[0], arr, eps=1e-4)
            err = oracles.rel_err(grads[name], fd)
            assert err < 1e-4, f"{name}: rel err {err:.2e}"

        # Emission-gradient identity: marginals minus the gold one-hot.
        lattice = crf.CrfLattice(
            emissions=rng.normal(size=(7, 2)),
            transitions=rng.normal(size=(2, 2)),
            start=rng.normal(size=2),
            stop=rng.normal(size=2),
        )
        path = tuple(int(v) for v in rng.integers(0, 2, size=7))
        _, crf_grads = crf.nll_and_grad(lattice, path)
        expected = crf.marginals(lattice)
        for t, label in enumerate(path):
            expected[t, label] -= 1.0
        assert np.max(np.abs(crf_grads.emissions - expected)) < 1e-5


def detokenize(tokens):
    return re.sub(r" ([.,;:!?])", r"\1", " ".join(tokens))


def test_alignment_round_trip():
    with criterion("alignment round trip (10k pairs + worked example)", budget_s=5):
        pairs, source = corpus_source(10000)
        for pair in pairs:
            labeled = align(pair)
            assert tuple(apply_labels(labeled.tokens, labeled.labels)) == pair.compression
        print(f"  round trip on {len(pairs)} {source} pairs")

        original = tuple(tokenize(WORKED_ORIGINAL))
        compression = tuple(tokenize(WORKED_COMPRESSION))
        labeled = align(
            type(pairs[0])(id="worked", original=original, compression=compression)
        )
        kept = apply_labels(labeled.tokens, labeled.labels)
        assert tuple(kept) == compression
        assert detokenize(kept) == WORKED_COMPRESSION


def test_overfit_capacity():
    with criterion("overfit capacity (50 pairs, dim 32, H=64, 100 epochs)", budget_s=300):
        sentences = [align(p) for p in datagen.make_toy_corpus(50, seed=0)]
        vocab = sorted({t for s in sentences for t in s.tokens})
        table = EmbeddingTable(
            dim=32, vectors={w: datagen.random_vector(w, 32) for w in vocab}
        )
        config = ModelConfig(
            static_dim=32, hidden_size=64, epochs=100, patience=100, seed=0
        )
        params, report = model.train(config, sentences, table, val_set=sentences)
        pred = [model.predict(params, config, s.tokens, table)[0] for s in sentences]
        gold = [list(s.labels) for s in sentences]
        _, _, f1 = deletion_f1(pred, gold)
        initial = report.epochs[0].train_loss
        final = report.epochs[-1].train_loss
        assert f1 >= 0.99, f"training F1 {f1:.4f}"
        assert final < 0.05 * initial, f"loss {final:.4f} vs 5% of {initial:.4f}"
        print(f"  train F1={f1:.4f}, loss {initial:.3f} -> {final:.5f}")


def test_small_scale_learning_signal():
    with criterion("learning signal (1000 train / 200 held out)", budget_s=1800):
        pairs, source = corpus_source(1200)
        train_sents = [align(p) for p in pairs[:1000]]
        test_sents = [align(p) for p in pairs[1000:1200]]
        vocab = sorted({t for s in train_sents + test_sents for t in s.tokens})
        table, table_source = static_table(vocab, dim=300)
        gold = [list(s.labels) for s in test_sents]

        # Baselines the model must beat.
        delete_nothing = [["O"] * len(s.tokens) for s in test_sents]
        _, _, f1_nothing = deletion_f1(delete_nothing, gold)
        assert f1_nothing == 0.0
        majority = datagen.majority_baseline(train_sents, test_sents)
        _, _, f1_majority = deletion_f1(majority, gold)

        config = ModelConfig(
            static_dim=table.dim, hidden_size=64, epochs=4, patience=4, seed=0
        )
        params, _ = model.train(config, train_sents, table)
        pred = [model.predict(params, config, s.tokens, table)[0] for s in test_sents]
        _, _, f1 = deletion_f1(pred, gold)
        print(
            f"  data={source}, vectors={table_source}: model F1={f1:.3f}, "
            f"majority={f1_majority:.3f}, delete-nothing={f1_nothing:.3f}"
        )
        assert f1 >= 0.60, f"F1 {f1:.3f} below 0.60"
        assert f1 > f1_nothing
        assert f1 > f1_majority, f"model {f1:.3f} <= majority {f1_majority:.3f}"


def test_metrics_fixtures():
    with criterion("metrics fixtures (worked F1 case + gold compression rate)", budget_s=60):
        pred = [["O", "O", "D", "D", "O", "O"]]
        gold = [["O", "O", "D", "D", "D", "D"]]
        p, r, f1 = deletion_f1(pred, gold)
        assert p == pytest.approx(1.0)
        assert r == pytest.approx(0.5)
        assert f1 == pytest.approx(2.0 / 3.0)

        pairs, source = corpus_source(1500)
        rate = compression_rate(
            [p.compression for p in pairs], [p.original for p in pairs]
        )
        print(f"  gold compression rate on {source} pairs: {rate:.3f}")
        assert rate == pytest.approx(0.38, abs=0.03)


def _train_once(tmp_path, tag):
    workdir = tmp_path / tag
    workdir.mkdir()
    pairs = datagen.make_toy_corpus(12, seed=4)
    pairs_path = workdir / "pairs.jsonl"
    with open(pairs_path, "w") as fh:
        for pair in pairs:
            fh.write(json.dumps({
                "id": pair.id, "original": list(pair.original),
                "compression": list(pair.compression),
            }) + "\n")
    glove = workdir / "glove.txt"
    datagen.write_random_glove(str(glove), datagen.vocabulary(pairs), dim=12)
    tsv = workdir / "labels.tsv"
    assert cli.main(["align", "--input", str(pairs_path), "--output", str(tsv)]) == 0
    ckpt = workdir / "model.ckpt"
    report = workdir / "report.json"
    code = cli.main([
        "train", "--input", str(tsv), "--val-input", str(tsv),
        "--static-embeddings", str(glove), "--output", str(ckpt),
        "--report", str(report), "--epochs", "3", "--hidden", "10", "--seed", "7",
    ])
    assert code == 0
    return ckpt.read_bytes(), report.read_bytes()


def test_determinism(tmp_path):
    with criterion("determinism (two identical CLI training runs)"):
        ckpt_a, report_a = _train_once(tmp_path, "first")
        ckpt_b, report_b = _train_once(tmp_path, "second")
        assert ckpt_a == ckpt_b, "checkpoints differ between identical runs"
        assert report_a == report_b, "reports differ between identical runs"


def test_format_golden(tmp_path):
    with criterion("format golden tests (CEMB + SCMP)"):
        rng = np.random.default_rng(5)

        # CEMB: byte round trip, then magic/version corruption.
        entries = [
            (f"s{i}", rng.normal(size=(int(rng.integers(1, 7)), 5)).astype(np.float32))
            for i in range(8)
        ]
        first = tmp_path / "a.cemb"
        write_contextual_store(entries, dim=5, path=str(first))
        store = load_contextual_store(str(first))
        second = tmp_path / "b.cemb"
        write_contextual_store(list(store.entries.items()), dim=store.dim, path=str(second))
        assert first.read_bytes() == second.read_bytes()

        corrupt = tmp_path / "bad_magic.cemb"
        corrupt.write_bytes(b"XEMB" + first.read_bytes()[4:])
        with pytest.raises(StoreFormatError):
            load_contextual_store(str(corrupt))
        bad_version = tmp_path / "bad_version.cemb"
        bad_version.write_bytes(
            CEMB_MAGIC + struct.pack("<I", 99) + first.read_bytes()[8:]
        )
        with pytest.raises(StoreFormatError):
            load_contextual_store(str(bad_version))

        # SCMP: byte round trip, then magic/version corruption.
        config = ModelConfig(static_dim=6, contextual_dim=3, hidden_size=4)
        params = init_params(config, seed=6)
        ckpt_a = tmp_path / "a.ckpt"
        model.save_checkpoint(params, config, str(ckpt_a))
        loaded, loaded_config = model.load_checkpoint(str(ckpt_a))
        ckpt_b = tmp_path / "b.ckpt"
        model.save_checkpoint(loaded, loaded_config, str(ckpt_b))
        assert ckpt_a.read_bytes() == ckpt_b.read_bytes()

        data = bytearray(ckpt_a.read_bytes())
        data[0] = ord("Z")
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(bytes(data))
        with pytest.raises(CheckpointError):
            model.load_checkpoint(str(bad))
        data = bytearray(ckpt_a.read_bytes())
        data[4:8] = struct.pack("<I", 42)
        bad.write_bytes(bytes(data))
        with pytest.raises(CheckpointError):
            model.load_checkpoint(str(bad))
