"""Contextual encoders that map a pre-tokenized sentence to one vector per
token.

Three families are supported:

* any Hugging Face model name or local directory (``AutoModel``); requires
  the weights to be resolvable, so typically a local path in offline setups;
* ``random-bert-{large,base,small}``: a BERT-architecture model built from a
  config with seeded random weights and a deterministic hash-based piece
  splitter; no downloads. ``random-bert-large`` has the real BERT-large
  geometry (24 layers, hidden 1024);
* ``random-flair``: forward and backward character LSTMs (2048 states each,
  concatenated to 4096 per token) with word-boundary state extraction;
  ``random-flair-small`` shrinks the state for fast tests.

Random-weight families produce features, not trained representations; they
exist so the full pipeline runs without network access and are swappable for
the pretrained equivalents by name.
"""

from __future__ import annotations

import zlib

import numpy as np
import torch

PAD_ID, CLS_ID, SEP_ID = 0, 1, 2
_VOCAB = 8192
_MAX_PIECES = 510  # position budget minus the two special tokens


class MisalignmentError(Exception):
    """A token could not be mapped to any encoder pieces."""


class ModelLoadError(Exception):
    pass


def word_pieces(token: str, width: int = 4) -> list[str]:
    return [token[i:i + width] for i in range(0, len(token), width)]


def piece_id(piece: str) -> int:
    return 3 + zlib.crc32(piece.encode("utf-8")) % (_VOCAB - 3)


def pool_pieces(
    vectors: np.ndarray, word_ids: list[int | None], n_tokens: int, pool: str
) -> np.ndarray:
    """Reduce piece vectors to one row per token (mean or first piece)."""
    if pool not in ("mean", "first"):
        raise ValueError(f"unknown pooling {pool!r}")
    groups: dict[int, list[int]] = {}
    for pos, word in enumerate(word_ids):
        if word is not None:
            groups.setdefault(word, []).append(pos)
    out = np.empty((n_tokens, vectors.shape[1]), dtype=np.float32)
    for word in range(n_tokens):
        positions = groups.get(word)
        if not positions:
            raise MisalignmentError(f"token index {word} has no pieces")
        if pool == "first":
            out[word] = vectors[positions[0]]
        else:
            out[word] = vectors[positions].mean(axis=0)
    return out


class RandomBertEncoder:
    """Seeded random-weight BERT over hash-based word pieces."""

    SIZES = {
        "large": dict(hidden_size=1024, num_hidden_layers=24,
                      num_attention_heads=16, intermediate_size=4096),
        "base": dict(hidden_size=768, num_hidden_layers=12,
                     num_attention_heads=12, intermediate_size=3072),
        "small": dict(hidden_size=256, num_hidden_layers=4,
                      num_attention_heads=4, intermediate_size=1024),
    }

    def __init__(self, size: str, seed: int = 0, layer: int = -1):
        from transformers import BertConfig, BertModel

        torch.manual_seed(seed)
        config = BertConfig(vocab_size=_VOCAB, pad_token_id=PAD_ID, **self.SIZES[size])
        self.model = BertModel(config).eval()
        self.dim = config.hidden_size
        self.layer = layer

    def _encode_ids(self, tokens: list[str]) -> tuple[list[int], list[int | None]]:
        ids: list[int] = [CLS_ID]
        word_ids: list[int | None] = [None]
        for word, token in enumerate(tokens):
            for piece in word_pieces(token):
                ids.append(piece_id(piece))
                word_ids.append(word)
        ids.append(SEP_ID)
        word_ids.append(None)
        if len(ids) > _MAX_PIECES + 2:
            raise MisalignmentError(f"{len(ids)} pieces exceed the position budget")
        return ids, word_ids

    def embed_batch(self, sentences: list[list[str]], pool: str) -> list[np.ndarray]:
        encoded = [self._encode_ids(tokens) for tokens in sentences]
        width = max(len(ids) for ids, _ in encoded)
        batch = torch.full((len(encoded), width), PAD_ID, dtype=torch.long)
        mask = torch.zeros((len(encoded), width), dtype=torch.long)
        for i, (ids, _) in enumerate(encoded):
            batch[i, :len(ids)] = torch.tensor(ids)
            mask[i, :len(ids)] = 1
        with torch.no_grad():
            out = self.model(
                input_ids=batch, attention_mask=mask, output_hidden_states=True
            )
        hidden = out.hidden_states[self.layer]
        results = []
        for i, ((ids, word_ids), tokens) in enumerate(zip(encoded, sentences)):
            vectors = hidden[i, :len(ids)].numpy()
            results.append(pool_pieces(vectors, word_ids, len(tokens), pool))
        return results


class PretrainedEncoder:
    """Any transformers model name or local path; subwords come from its own
    tokenizer and are pooled back to the input tokens."""

    def __init__(self, name_or_path: str, layer: int = -1):
        from transformers import AutoModel, AutoTokenizer

        try:
            self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
            self.model = AutoModel.from_pretrained(name_or_path).eval()
        except Exception as err:
            raise ModelLoadError(f"cannot load model {name_or_path!r}: {err}") from err
        self.dim = self.model.config.hidden_size
        self.layer = layer

    def embed_batch(self, sentences: list[list[str]], pool: str) -> list[np.ndarray]:
        enc = self.tokenizer(
            sentences, is_split_into_words=True, padding=True, truncation=True,
            return_tensors="pt",
        )
        with torch.no_grad():
            out = self.model(**enc, output_hidden_states=True)
        hidden = out.hidden_states[self.layer]
        results = []
        for i, tokens in enumerate(sentences):
            length = int(enc["attention_mask"][i].sum())
            vectors = hidden[i, :length].numpy()
            word_ids = enc.word_ids(i)[:length]
            results.append(pool_pieces(vectors, word_ids, len(tokens), pool))
        return results


class CharLstmEncoder:
    """Forward/backward character LSTMs with word-boundary extraction; the
    per-token vector is the forward state at the token's last character
    concatenated with the backward state at its first character."""

    def __init__(self, hidden: int = 2048, seed: int = 0, char_dim: int = 64):
        torch.manual_seed(seed)
        self.chars = torch.nn.Embedding(512, char_dim)
        self.fwd = torch.nn.LSTM(char_dim, hidden, batch_first=True)
        self.bwd = torch.nn.LSTM(char_dim, hidden, batch_first=True)
        for module in (self.chars, self.fwd, self.bwd):
            module.eval()
        self.dim = 2 * hidden

    def embed_batch(self, sentences: list[list[str]], pool: str) -> list[np.ndarray]:
        del pool  # character-level: no subword pieces to pool
        return [self._embed(tokens) for tokens in sentences]

    def _embed(self, tokens: list[str]) -> np.ndarray:
        text = " ".join(tokens)
        ids = torch.tensor([[min(ord(c), 511) for c in text]])
        n = ids.shape[1]
        with torch.no_grad():
            embedded = self.chars(ids)
            h_fwd, _ = self.fwd(embedded)
            h_bwd, _ = self.bwd(embedded.flip(1))
        out = np.empty((len(tokens), self.dim), dtype=np.float32)
        start = 0
        for i, token in enumerate(tokens):
            end = start + len(token)  # [start, end) within text
            out[i, :self.dim // 2] = h_fwd[0, end - 1].numpy()
            out[i, self.dim // 2:] = h_bwd[0, n - 1 - start].numpy()
            start = end + 1  # skip the joining space
        return out


def build_encoder(model: str, seed: int = 0, layer: int = -1):
    if model.startswith("random-bert-"):
        size = model[len("random-bert-"):]
        if size not in RandomBertEncoder.SIZES:
            raise ModelLoadError(f"unknown random-bert size {size!r}")
        return RandomBertEncoder(size, seed=seed, layer=layer)
    if model == "random-flair":
        return CharLstmEncoder(hidden=2048, seed=seed)
    if model == "random-flair-small":
        return CharLstmEncoder(hidden=128, seed=seed)
    return PretrainedEncoder(model, layer=layer)
