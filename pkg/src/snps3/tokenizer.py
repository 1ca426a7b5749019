"""BERT-style vocabulary loading and greedy WordPiece tokenization."""
from __future__ import annotations

import hashlib
import os
import unicodedata
from dataclasses import dataclass, field

from snps3 import kernels
from snps3.errors import ConfigurationError, FormatError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
DEFAULT_MAX_LEN = 30
MAX_INPUT_CHARS_PER_WORD = 100


def _content_hash(tokens):
    h = hashlib.sha256()
    for tok in tokens:
        h.update(tok.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass(frozen=True)
class Vocab:
    """Ordered token list; a token's id is its position."""

    tokens: tuple
    index: dict = field(repr=False, compare=False)
    special: dict = field(repr=False, compare=False)
    content_hash: str = field(repr=False, compare=False)

    @classmethod
    def from_tokens(cls, tokens) -> "Vocab":
        tokens = tuple(tokens)
        index = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise FormatError(f"duplicate token {tok!r} at lines {index[tok]} and {i}")
            index[tok] = i
        missing = [t for t in SPECIAL_TOKENS if t not in index]
        if missing:
            raise ConfigurationError(f"vocabulary lacks special tokens: {', '.join(missing)}")
        special = {t: index[t] for t in SPECIAL_TOKENS}
        return cls(tokens, index, special, _content_hash(tokens))

    def __len__(self):
        return len(self.tokens)

    @property
    def pad_id(self):
        return self.special[PAD]

    @property
    def unk_id(self):
        return self.special[UNK]

    @property
    def cls_id(self):
        return self.special[CLS]

    @property
    def sep_id(self):
        return self.special[SEP]

    @property
    def mask_id(self):
        return self.special[MASK]

    def special_mask(self) -> bytes:
        """Per-id flag (1 for the five special tokens), usable by the kernels."""
        flags = bytearray(len(self.tokens))
        for tid in self.special.values():
            flags[tid] = 1
        return bytes(flags)


def load_vocab(path) -> Vocab:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\r\n") for line in fh]
    # a trailing newline is a line terminator, not an empty token
    while tokens and tokens[-1] == "":
        tokens.pop()
    return Vocab.from_tokens(tokens)


def token_to_label(token: str, vocab: Vocab) -> int:
    return vocab.index.get(token, vocab.unk_id)


def _is_punctuation(ch):
    cp = ord(ch)
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def basic_split(text: str) -> list[str]:
    """Lowercase, strip accents, split on whitespace and isolate punctuation characters."""
    text = unicodedata.normalize("NFD", text.lower())
    words = []
    buf = []
    for ch in text:
        cat = unicodedata.category(ch)
        if cat == "Mn":
            continue
        if ch.isspace() or cat.startswith("C"):
            if buf:
                words.append("".join(buf))
                buf = []
        elif _is_punctuation(ch):
            if buf:
                words.append("".join(buf))
                buf = []
            words.append(ch)
        else:
            buf.append(ch)
    if buf:
        words.append("".join(buf))
    return words


@dataclass(frozen=True)
class TokenSeq:
    """Fixed-length id sequence: ``[CLS] pieces... [SEP] [PAD]...``.

    ``words_span[p]`` is the source-word index of position ``p`` (-1 for specials and pads).
    """

    ids: tuple
    words_span: tuple
    is_special: tuple
    words: tuple
    vocab_hash: str

    def __len__(self):
        return len(self.ids)

    @property
    def n_real(self):
        """Number of non-pad positions, including [CLS] and [SEP]."""
        return sum(1 for s in self.words_span if s >= 0) + 2


def wordpiece_tokenize(text: str, vocab: Vocab, max_len: int = DEFAULT_MAX_LEN) -> TokenSeq:
    if max_len < 2:
        raise ValueError(f"max_len must be >= 2, got {max_len}")
    if text is None:
        raise ValueError("text must not be None")
    words = basic_split(text)
    ids, spans = kernels.wordpiece_words(words, vocab.index, vocab.unk_id, MAX_INPUT_CHARS_PER_WORD)
    body = max_len - 2
    ids, spans = ids[:body], spans[:body]
    n_pad = body - len(ids)
    out_ids = (vocab.cls_id, *ids, vocab.sep_id) + (vocab.pad_id,) * n_pad
    out_spans = (-1, *spans, -1) + (-1,) * n_pad
    special = (True,) + (False,) * len(ids) + (True,) * (1 + n_pad)
    return TokenSeq(out_ids, out_spans, special, tuple(words), vocab.content_hash)
