"""Sentence/compression pair ingestion and keep/delete label alignment.

A pair holds an original token sequence and its shorter compression. When the
compression is a token subsequence of the original, every original token can
be labeled O (keep) or D (delete) such that keeping the O tokens reproduces
the compression exactly. Pairs where that fails are unalignable and are
skipped by the training pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, TextIO

from .errors import SentcompError

LABEL_KEEP = "O"
LABEL_DELETE = "D"
LABELS = (LABEL_KEEP, LABEL_DELETE)

# Sentence-final punctuation split off as separate tokens when input arrives
# as a plain string instead of a pre-tokenized array.
_TERMINAL_PUNCT = frozenset(".,;:!?")


class RecordError(SentcompError):
    """A malformed input record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NotSubsequenceError(SentcompError):
    """The compression is not a token subsequence of the original."""

    def __init__(self, pair_id: str, token: str, position: int):
        super().__init__(
            f"pair {pair_id!r}: compression token {token!r} "
            f"(index {position}) has no remaining match in the original"
        )
        self.pair_id = pair_id
        self.token = token
        self.position = position


@dataclass(frozen=True)
class SentencePair:
    """One original sentence plus its gold compression, both tokenized."""

    id: str
    original: tuple[str, ...]
    compression: tuple[str, ...]

    def __post_init__(self):
        if not self.original:
            raise ValueError(f"pair {self.id!r}: original is empty")
        if not self.compression:
            raise ValueError(f"pair {self.id!r}: compression is empty")
        for side, tokens in (("original", self.original), ("compression", self.compression)):
            for tok in tokens:
                if not tok or any(ch.isspace() for ch in tok):
                    raise ValueError(
                        f"pair {self.id!r}: {side} token {tok!r} is empty or contains whitespace"
                    )


@dataclass(frozen=True)
class LabeledSentence:
    """Original tokens with one O/D label per token (the supervised target)."""

    id: str
    tokens: tuple[str, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.tokens):
            raise ValueError(
                f"sentence {self.id!r}: {len(self.labels)} labels for {len(self.tokens)} tokens"
            )
        for lab in self.labels:
            if lab not in LABELS:
                raise ValueError(f"sentence {self.id!r}: bad label {lab!r}")
        if LABEL_KEEP not in self.labels:
            raise ValueError(f"sentence {self.id!r}: no token is kept")

    @property
    def compression(self) -> tuple[str, ...]:
        return tuple(apply_labels(self.tokens, self.labels))


def tokenize(text: str) -> list[str]:
    """Whitespace-tokenize, splitting trailing terminal punctuation into
    separate tokens ("future," -> "future" ",")."""
    out: list[str] = []
    for chunk in text.split():
        tail: list[str] = []
        while len(chunk) > 1 and chunk[-1] in _TERMINAL_PUNCT:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        out.append(chunk)
        out.extend(reversed(tail))
    return out


def _coerce_tokens(value, field: str, line_no: int) -> tuple[str, ...]:
    if isinstance(value, str):
        tokens = tokenize(value)
    elif isinstance(value, list) and all(isinstance(t, str) for t in value):
        tokens = list(value)
    else:
        raise RecordError(line_no, f"{field} must be a string or an array of strings")
    if not tokens:
        raise RecordError(line_no, f"{field} has no tokens")
    return tuple(tokens)


def parse_pairs(
    stream: Iterable[str] | TextIO,
    on_error: Callable[[RecordError], None] | None = None,
) -> list[SentencePair]:
    """Parse JSONL records {id, original, compression} into pairs.

    Each non-empty line must be a JSON object; original/compression may be
    pre-tokenized arrays (passed through untouched) or plain strings (then
    tokenized). Malformed records raise RecordError, or are passed to
    ``on_error`` and skipped when a handler is given. Order is preserved.
    """
    pairs: list[SentencePair] = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            pairs.append(_parse_record(line, line_no))
        except RecordError as err:
            if on_error is None:
                raise
            on_error(err)
    return pairs


def _parse_record(line: str, line_no: int) -> SentencePair:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as err:
        raise RecordError(line_no, f"malformed JSON ({err.msg})") from err
    if not isinstance(record, dict):
        raise RecordError(line_no, "record is not a JSON object")
    for field in ("id", "original", "compression"):
        if field not in record:
            raise RecordError(line_no, f"missing field {field!r}")
    original = _coerce_tokens(record["original"], "original", line_no)
    compression = _coerce_tokens(record["compression"], "compression", line_no)
    try:
        return SentencePair(id=str(record["id"]), original=original, compression=compression)
    except ValueError as err:
        raise RecordError(line_no, str(err)) from err


def align(pair: SentencePair) -> LabeledSentence:
    """Derive O/D labels by greedy left-to-right subsequence matching.

    A cursor walks the original; each compression token claims the earliest
    remaining original token with an exact, case-sensitive match. Matched
    positions become O, the rest D. Raises NotSubsequenceError when a
    compression token cannot be matched.
    """
    labels = [LABEL_DELETE] * len(pair.original)
    cursor = 0
    for i, tok in enumerate(pair.compression):
        while cursor < len(pair.original) and pair.original[cursor] != tok:
            cursor += 1
        if cursor == len(pair.original):
            raise NotSubsequenceError(pair.id, tok, i)
        labels[cursor] = LABEL_KEEP
        cursor += 1
    return LabeledSentence(id=pair.id, tokens=pair.original, labels=tuple(labels))


def apply_labels(tokens: Iterable[str], labels: Iterable[str]) -> list[str]:
    """Return the tokens labeled O, in order. Lengths must match."""
    tokens = list(tokens)
    labels = list(labels)
    if len(tokens) != len(labels):
        raise ValueError(f"{len(tokens)} tokens but {len(labels)} labels")
    return [tok for tok, lab in zip(tokens, labels) if lab == LABEL_KEEP]


def write_tsv(sentences: Iterable[LabeledSentence], out: TextIO) -> None:
    """Write CoNLL-style blocks: an id comment, token<TAB>label lines, blank
    line between sentences."""
    for sent in sentences:
        out.write(f"# id = {sent.id}\n")
        for tok, lab in zip(sent.tokens, sent.labels):
            out.write(f"{tok}\t{lab}\n")
        out.write("\n")


def read_tsv(stream: Iterable[str] | TextIO) -> list[LabeledSentence]:
    """Read CoNLL-style blocks written by write_tsv."""
    sentences: list[LabeledSentence] = []
    sent_id: str | None = None
    tokens: list[str] = []
    labels: list[str] = []

    def flush(line_no: int):
        nonlocal sent_id, tokens, labels
        if not tokens:
            sent_id = None
            return
        if sent_id is None:
            raise RecordError(line_no, "sentence block has no '# id =' line")
        sentences.append(LabeledSentence(id=sent_id, tokens=tuple(tokens), labels=tuple(labels)))
        sent_id, tokens, labels = None, [], []

    line_no = 0
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(line_no)
            continue
        if line.startswith("# id ="):
            sent_id = line[len("# id ="):].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise RecordError(line_no, f"expected token<TAB>label, got {line!r}")
        tok, lab = parts
        if lab not in LABELS:
            raise RecordError(line_no, f"bad label {lab!r}")
        tokens.append(tok)
        labels.append(lab)
    flush(line_no + 1)
    return sentences


def iter_alignable(
    pairs: Iterable[SentencePair],
    on_skip: Callable[[SentencePair, NotSubsequenceError], None] | None = None,
) -> Iterator[LabeledSentence]:
    """Align pairs, skipping (and optionally reporting) unalignable ones."""
    for pair in pairs:
        try:
            yield align(pair)
        except NotSubsequenceError as err:
            if on_skip is not None:
                on_skip(pair, err)
