"""Offline significant-vocabulary mining and per-caption chosen lists.

POS annotations are ingested from ``pos.jsonl`` files; :func:`lexicon_pos_tag`
is a deterministic stand-in tagger for tests and untagged corpora.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from snps3 import kernels
from snps3.errors import ConsistencyError, FormatError
from snps3.tokenizer import TokenSeq, Vocab

UPOS_TAGS = frozenset(
    "ADJ ADP ADV AUX CCONJ DET INTJ NOUN NUM PART PRON PROPN PUNCT SCONJ SYM VERB X".split()
)
SIGNIFICANT_TAGS = frozenset({"VERB", "ADJ", "NOUN"})
DEFAULT_K_SS = 2000


@dataclass(frozen=True)
class PosRecord:
    id: str
    words: tuple
    tags: tuple

    def __post_init__(self):
        if len(self.words) != len(self.tags):
            raise FormatError(f"record {self.id!r}: {len(self.words)} words but {len(self.tags)} tags")
        bad = [t for t in self.tags if t not in UPOS_TAGS]
        if bad:
            raise FormatError(f"record {self.id!r}: unknown POS tags {sorted(set(bad))}")


@dataclass(frozen=True)
class FrequencyTable:
    counts: np.ndarray
    vocab_hash: str

    def merge(self, other: "FrequencyTable") -> "FrequencyTable":
        if other.vocab_hash != self.vocab_hash:
            raise ConsistencyError("cannot merge frequency tables built on different vocabularies")
        return FrequencyTable(self.counts + other.counts, self.vocab_hash)


@dataclass(frozen=True)
class SignificantVocab:
    mask: np.ndarray
    k_ss: int
    threshold: int
    vocab_hash: str

    @property
    def ids(self) -> list[int]:
        return np.flatnonzero(self.mask).tolist()

    def to_json(self) -> dict:
        return {"k_ss": self.k_ss, "threshold": self.threshold, "vocab_hash": self.vocab_hash, "ids": self.ids}

    @classmethod
    def from_json(cls, obj: dict, vocab_size: int) -> "SignificantVocab":
        try:
            ids = [int(i) for i in obj["ids"]]
            k_ss, threshold, vocab_hash = int(obj["k_ss"]), int(obj["threshold"]), str(obj["vocab_hash"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed significant-vocabulary object: {exc}") from exc
        if any(i < 0 or i >= vocab_size for i in ids):
            raise FormatError("significant id outside vocabulary range")
        mask = np.zeros(vocab_size, dtype=bool)
        mask[ids] = True
        return cls(mask, k_ss, threshold, vocab_hash)


@dataclass(frozen=True)
class ChosenList:
    positions: tuple

    def __len__(self):
        return len(self.positions)


def lexicon_pos_tag(words, lexicon: dict) -> list[str]:
    return [lexicon.get(w, "X") for w in words]


def read_pos_jsonl(path) -> list[PosRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(PosRecord(str(obj["id"]), tuple(obj["words"]), tuple(obj["tags"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return records


def dedup_records(records):
    """Drop records whose word sequence already appeared (first occurrence wins)."""
    seen = set()
    out = []
    for rec in records:
        key = tuple(w.lower() for w in rec.words)
        if key not in seen:
            seen.add(key)
            out.append(rec)
    return out


def _count_chunk(records, vocab):
    counts = np.zeros(len(vocab), dtype=np.int64)
    pairs = (([w.lower() for w in r.words], r.tags) for r in records)
    kernels.count_tagged(pairs, vocab.index, SIGNIFICANT_TAGS, counts)
    return FrequencyTable(counts, vocab.content_hash)


def count_significant(corpus, vocab: Vocab, workers: int = 1, chunk_size: int = 4096) -> FrequencyTable:
    """Frequency of every vocab token used as a whole VERB/ADJ/NOUN word in ``corpus``."""
    corpus = list(corpus)
    if workers <= 1 or len(corpus) <= chunk_size:
        return _count_chunk(corpus, vocab)
    chunks = [corpus[i : i + chunk_size] for i in range(0, len(corpus), chunk_size)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        tables = list(pool.map(lambda c: _count_chunk(c, vocab), chunks))
    total = tables[0]
    for t in tables[1:]:
        total = total.merge(t)
    return total


def threshold_topk(freq: FrequencyTable, k_ss: int = DEFAULT_K_SS) -> SignificantVocab:
    """Keep every token whose count reaches the k-th largest count; ties at the threshold are kept.

    Zero counts are never significant, even when ``k_ss`` exceeds the nonzero support.
    """
    if k_ss < 1:
        raise ValueError(f"k_ss must be >= 1, got {k_ss}")
    counts = np.asarray(freq.counts)
    if k_ss <= counts.size:
        threshold = int(np.partition(counts, counts.size - k_ss)[counts.size - k_ss])
    else:
        threshold = 0
    mask = (counts >= threshold) & (counts > 0)
    return SignificantVocab(mask, k_ss, threshold, freq.vocab_hash)


def build_chosen_list(seq: TokenSeq, sig: SignificantVocab) -> ChosenList:
    if seq.vocab_hash != sig.vocab_hash:
        raise ConsistencyError("token sequence and significant vocabulary come from different vocabularies")
    skip = np.fromiter(seq.is_special, dtype=np.uint8, count=len(seq.ids))
    mask = np.ascontiguousarray(sig.mask, dtype=np.uint8)
    return ChosenList(tuple(kernels.scan_chosen(list(seq.ids), skip, mask)))
