"""Sentence readers for the two upstream formats.

Pairs JSONL: one JSON object per line with ``id`` and ``original`` (token
array, or a plain string that gets whitespace-tokenized with trailing
terminal punctuation split off). Labeled TSV: ``# id = <id>`` comment, one
``token<TAB>label`` line per token, blank line between sentences; labels are
ignored here.
"""

from __future__ import annotations

import json

_TERMINAL_PUNCT = set(".,;:!?")


def split_terminal_punct(text: str) -> list[str]:
    out: list[str] = []
    for chunk in text.split():
        tail = []
        while len(chunk) > 1 and chunk[-1] in _TERMINAL_PUNCT:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        out.append(chunk)
        out.extend(reversed(tail))
    return out


def read_pairs_jsonl(path: str) -> list[tuple[str, list[str]]]:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            if "id" not in record or "original" not in record:
                raise ValueError(f"{path}:{line_no}: record needs 'id' and 'original'")
            value = record["original"]
            tokens = split_terminal_punct(value) if isinstance(value, str) else list(value)
            if not tokens:
                raise ValueError(f"{path}:{line_no}: no tokens")
            sentences.append((str(record["id"]), tokens))
    return sentences


def read_labeled_tsv(path: str) -> list[tuple[str, list[str]]]:
    sentences = []
    sent_id = None
    tokens: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                if tokens:
                    if sent_id is None:
                        raise ValueError(f"{path}: sentence block without an id line")
                    sentences.append((sent_id, tokens))
                sent_id, tokens = None, []
                continue
            if line.startswith("# id ="):
                sent_id = line[len("# id ="):].strip()
                continue
            tokens.append(line.split("\t")[0])
    if tokens:
        if sent_id is None:
            raise ValueError(f"{path}: sentence block without an id line")
        sentences.append((sent_id, tokens))
    return sentences


def read_sentences(path: str) -> list[tuple[str, list[str]]]:
    """Dispatch on content: TSV blocks vs JSONL records."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                first = line.lstrip()
                break
        else:
            return []
    if first.startswith("{"):
        return read_pairs_jsonl(path)
    return read_labeled_tsv(path)
