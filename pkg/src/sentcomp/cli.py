"""Command-line surface: align, train, compress, eval, inspect.

Data goes to files or standard output; logs go to standard error. Every
subcommand is deterministic for identical inputs and flags, and exits 0 only
when the requested artifact was fully written.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import corpus, embeddings, model
from .errors import SentcompError
from .metrics import metrics_report

log = logging.getLogger("sentcomp")


def positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _write_atomic(path: str, payload: str | bytes) -> None:
    # Leave no partial artifact behind on failure.
    tmp = path + ".tmp"
    mode = "wb" if isinstance(payload, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(payload)
    os.replace(tmp, path)


def cmd_align(args: argparse.Namespace) -> int:
    skipped = []

    def on_skip(pair, err):
        skipped.append(pair.id)
        log.warning("skipping unalignable pair: %s", err)

    errors = []

    def on_error(err):
        errors.append(err)
        log.warning("skipping record: %s", err)

    with open(args.input, encoding="utf-8") as fh:
        pairs = corpus.parse_pairs(fh, on_error=on_error if args.skip_bad_records else None)
    labeled = list(corpus.iter_alignable(pairs, on_skip=on_skip))
    buf = io.StringIO()
    corpus.write_tsv(labeled, buf)
    _write_atomic(args.output, buf.getvalue())
    log.info("aligned=%d skipped=%d bad_records=%d", len(labeled), len(skipped), len(errors))
    return 0


def _load_providers(args) -> tuple[embeddings.EmbeddingTable, embeddings.ContextualStore | None]:
    static = embeddings.load_static_table(args.static_embeddings)
    contextual = None
    if args.contextual_store:
        contextual = embeddings.load_contextual_store(args.contextual_store)
    return static, contextual


def cmd_train(args: argparse.Namespace) -> int:
    sentences = _read_tsv_file(args.input)
    if not sentences:
        log.error("no sentences in %s", args.input)
        return 1
    static, contextual = _load_providers(args)

    if contextual is not None:
        missing = [s.id for s in sentences if s.id not in contextual.entries]
        if missing:
            log.error("contextual store is missing %d sentence ids: %s",
                      len(missing), " ".join(missing[:20]))
            return 1

    config = model.ModelConfig(
        static_dim=static.dim,
        contextual_dim=contextual.dim if contextual else 0,
        hidden_size=args.hidden,
        epochs=args.epochs,
        lr=args.lr,
        clip_norm=args.clip,
        batch_size=args.batch,
        dropout=args.dropout,
        seed=args.seed,
        head=args.head,
        patience=args.patience,
        max_len=args.max_len,
    )
    val_set = _read_tsv_file(args.val_input) if args.val_input else None

    def progress(rec: model.EpochRecord):
        log.info("epoch %d loss=%.4f val_f1=%.4f", rec.epoch, rec.train_loss, rec.val_f1)

    params, report = model.train(
        config, sentences, static, contextual, val_set=val_set, progress=progress
    )
    model.save_checkpoint(params, config, args.output)
    report_path = args.report or (os.path.splitext(args.output)[0] + ".report.json")
    _write_atomic(report_path, report.to_json() + "\n")
    log.info("best epoch %d, checkpoint %s", report.best_epoch, args.output)
    return 0


def _read_tsv_file(path: str) -> list[corpus.LabeledSentence]:
    with open(path, encoding="utf-8") as fh:
        return corpus.read_tsv(fh)


def _read_sentences_jsonl(path: str) -> list[tuple[str, tuple[str, ...]]]:
    """Sentences to compress: JSONL records with id + original tokens/text."""
    out: list[tuple[str, tuple[str, ...]]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise corpus.RecordError(line_no, f"malformed JSON ({err.msg})") from err
            if "id" not in record or "original" not in record:
                raise corpus.RecordError(line_no, "record needs 'id' and 'original'")
            value = record["original"]
            tokens = tuple(corpus.tokenize(value)) if isinstance(value, str) else tuple(value)
            if not tokens:
                raise corpus.RecordError(line_no, "no tokens")
            out.append((str(record["id"]), tokens))
    return out


def cmd_compress(args: argparse.Namespace) -> int:
    params, config = model.load_checkpoint(args.model)
    static, contextual = _load_providers(args)
    if static.dim != config.static_dim:
        log.error("static table dim %d != checkpoint dim %d", static.dim, config.static_dim)
        return 1
    if (contextual.dim if contextual else 0) != config.contextual_dim:
        log.error("contextual dim mismatch with checkpoint")
        return 1
    sentences = _read_sentences_jsonl(args.input)

    def run(item: tuple[str, tuple[str, ...]]) -> str:
        sent_id, tokens = item
        labels, compression = model.predict(
            params, config, tokens, static, contextual, sentence_id=sent_id
        )
        return json.dumps(
            {"id": sent_id, "tokens": list(tokens), "labels": labels,
             "compression": compression},
            ensure_ascii=False,
        )

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            lines = list(pool.map(run, sentences))
    else:
        lines = [run(item) for item in sentences]
    _write_atomic(args.output, "".join(line + "\n" for line in lines))
    log.info("compressed %d sentences", len(lines))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    gold = _read_tsv_file(args.gold)
    pred_by_id: dict[str, list[str]] = {}
    with open(args.pred, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            pred_by_id[str(record["id"])] = list(record["labels"])
    missing = [s.id for s in gold if s.id not in pred_by_id]
    if missing:
        log.error("predictions missing for %d gold sentences: %s",
                  len(missing), " ".join(missing[:20]))
        return 1
    pred = [pred_by_id[s.id] for s in gold]
    gold_labels = [list(s.labels) for s in gold]
    report = metrics_report(pred, gold_labels)
    payload = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.output:
        _write_atomic(args.output, payload)
    else:
        sys.stdout.write(payload)
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    path = args.input
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == model.SCMP_MAGIC:
        params, config = model.load_checkpoint(path)
        tensors = params.tensors()
        info = {
            "format": "SCMP",
            "config": model._config_to_dict(config),
            "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors.items()],
            "parameters": int(sum(a.size for a in tensors.values())),
        }
    elif magic == embeddings.CEMB_MAGIC:
        store = embeddings.load_contextual_store(path)
        rows = [m.shape[0] for m in store.entries.values()]
        info = {
            "format": "CEMB",
            "dim": store.dim,
            "sentences": len(store),
            "total_rows": int(sum(rows)),
        }
    else:
        log.error("unrecognized magic %r in %s", magic, path)
        return 1
    sys.stdout.write(json.dumps(info, sort_keys=True, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentcomp",
        description="Deletion-based sentence compression toolkit",
    )
    parser.add_argument("--log-level", default="info",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="label pairs with keep/delete tags")
    p.add_argument("--input", required=True, help="pairs JSONL")
    p.add_argument("--output", required=True, help="CoNLL-style TSV")
    p.add_argument("--skip-bad-records", action="store_true",
                   help="skip malformed records instead of aborting")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("train", help="train the tagger")
    p.add_argument("--input", required=True, help="labeled TSV")
    p.add_argument("--val-input", help="optional validation TSV (default: 5%% holdout)")
    p.add_argument("--static-embeddings", required=True, help="GloVe-format text file")
    p.add_argument("--contextual-store", help="CEMB store")
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--report", help="training report JSON (default: <output>.report.json)")
    p.add_argument("--epochs", type=positive_int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=positive_int, default=256)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--batch", type=positive_int, default=1)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patience", type=positive_int, default=10)
    p.add_argument("--head", choices=["crf", "softmax"], default="crf")
    p.add_argument("--max-len", type=positive_int, default=512)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compress", help="compress sentences with a trained model")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--input", required=True, help="sentences JSONL")
    p.add_argument("--output", required=True, help="predictions JSONL")
    p.add_argument("--static-embeddings", required=True)
    p.add_argument("--contextual-store")
    p.add_argument("--threads", type=positive_int, default=1)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--pred", required=True, help="predictions JSONL from compress")
    p.add_argument("--gold", required=True, help="gold TSV from align")
    p.add_argument("--output", help="metrics JSON (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="summarize a checkpoint or CEMB store")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        stream=sys.stderr,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except SentcompError as err:
        log.error("%s", err)
        return 1
    except OSError as err:
        log.error("%s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
