"""Synthetic paired corpus and a toy two-tower alignment loop driven by the loss kernels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from snps3 import losses
from snps3.errors import DivergenceError
from snps3.miner import PosRecord, build_chosen_list, count_significant, lexicon_pos_tag, threshold_topk
from snps3.planner import sample_lvwm_batch
from snps3.retrieval import eval_retrieval
from snps3.tokenizer import SPECIAL_TOKENS, Vocab, wordpiece_tokenize

ADJECTIVES = (
    "red", "blue", "green", "small", "big", "young", "old", "happy",
    "wooden", "shiny", "dark", "bright", "tall", "tiny", "wet", "fluffy",
)
NOUNS = (
    "dog", "cat", "man", "woman", "boy", "girl", "car", "ball", "horse", "bird",
    "tree", "house", "boat", "plane", "bike", "table", "guitar", "kite", "chair", "river",
    "beach", "road", "field", "street",
)
VERBS = (
    "runs", "jumps", "sits", "swims", "flies", "plays", "walks", "sleeps",
    "drives", "climbs", "eats", "lands", "rides", "dances", "reads", "waits",
    "throws", "holds", "watches", "pulls", "carries", "sings", "paints", "cooks",
)
FUNCTION_WORDS = {"a": "DET", "the": "DET", "near": "ADP", "with": "ADP", "and": "CCONJ", "while": "SCONJ"}
# subword pieces so that the vocab exercises continuation matching
EXTRA_PIECES = ("skate", "##board", "##ing", "##s", "play", "jump", "##ed", ".", ",")
CONCEPT_WORDS = ADJECTIVES + NOUNS + VERBS


def synth_vocab() -> Vocab:
    tokens = list(SPECIAL_TOKENS) + list(FUNCTION_WORDS) + list(CONCEPT_WORDS) + list(EXTRA_PIECES)
    return Vocab.from_tokens(tokens)


def synth_lexicon() -> dict:
    lex = dict(FUNCTION_WORDS)
    lex.update({w: "ADJ" for w in ADJECTIVES})
    lex.update({w: "NOUN" for w in NOUNS})
    lex.update({w: "VERB" for w in VERBS})
    return lex


@dataclass(frozen=True)
class SynthRecord:
    id: str
    caption: str
    visual: np.ndarray = field(repr=False)
    concepts: tuple

    def to_json(self) -> dict:
        return {"id": self.id, "caption": self.caption, "concepts": list(self.concepts)}


def _clause(rng, taken, adj_prob=0.7):
    """One ``a [adj] noun verb [near the [adj] noun]`` clause with concepts not yet used."""

    def pick(pool):
        free = [w for w in pool if w not in taken]
        w = free[rng.integers(len(free))]
        taken.add(w)
        return w

    words = ["a"]
    if rng.random() < adj_prob:
        words.append(pick(ADJECTIVES))
    words += [pick(NOUNS), pick(VERBS)]
    if rng.random() < 0.5:
        words += [("near", "with")[rng.integers(2)], "the"]
        if rng.random() < adj_prob:
            words.append(pick(ADJECTIVES))
        words.append(pick(NOUNS))
    return words


def gen_corpus(seed: int, size: int, vocab: Vocab | None = None, clauses=(1, 2), noise: float = 0.1, prefix="s"):
    """Template captions over the concept inventory; visual = multi-hot concept indicator + Gaussian noise.

    ``vocab`` is only checked: every concept word must be a whole token so that
    mining can recover it.
    """
    if size < 2:
        raise ValueError("size must be >= 2")
    if vocab is not None:
        missing = [w for w in CONCEPT_WORDS if w not in vocab.index]
        if missing:
            raise ValueError(f"vocabulary lacks concept words: {missing[:5]}")
    concept_id = {w: i for i, w in enumerate(CONCEPT_WORDS)}
    rng = np.random.default_rng(seed)
    lo, hi = clauses
    out = []
    for n in range(size):
        taken = set()
        words = []
        for c in range(int(rng.integers(lo, hi + 1))):
            if c:
                words.append(("and", "while")[rng.integers(2)])
            words += _clause(rng, taken)
        concepts = tuple(sorted(concept_id[w] for w in words if w in concept_id))
        visual = rng.normal(0.0, noise, len(CONCEPT_WORDS))
        visual[list(concepts)] += 1.0
        out.append(SynthRecord(f"{prefix}{n:06d}", " ".join(words), visual, concepts))
    return out


def pos_records(corpus, lexicon=None) -> list[PosRecord]:
    lexicon = synth_lexicon() if lexicon is None else lexicon
    recs = []
    for r in corpus:
        words = r.caption.split()
        recs.append(PosRecord(r.id, tuple(words), tuple(lexicon_pos_tag(words, lexicon))))
    return recs


def write_corpus_jsonl(corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in corpus:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


# --- toy two-tower model -----------------------------------------------------


@dataclass
class ToyModel:
    """Affine visual encoder and affine bag-of-tokens text encoder.

    A text token at position ``p`` maps to ``emb[id_p] + b_t``; the sentence
    feature is the mean of its content-token features.
    """

    w_v: np.ndarray
    b_v: np.ndarray
    emb: np.ndarray
    b_t: np.ndarray

    def encode_visual(self, raw):
        return np.asarray(raw, dtype=np.float64) @ self.w_v + self.b_v

    def encode_text(self, bags):
        return bags @ self.emb + self.b_t

    def arrays(self):
        return [self.w_v, self.b_v, self.emb, self.b_t]


@dataclass
class TrainResult:
    model: ToyModel
    curve: list
    losses: tuple


def _bags(seqs, vocab_size):
    bags = np.zeros((len(seqs), vocab_size))
    for n, seq in enumerate(seqs):
        ids = [tid for tid, special in zip(seq.ids, seq.is_special) if not special]
        if ids:
            np.add.at(bags[n], ids, 1.0 / len(ids))
    return bags


def text_bags(corpus, vocab: Vocab, max_len: int = 30):
    return _bags([wordpiece_tokenize(r.caption, vocab, max_len) for r in corpus], len(vocab))


def _adam(params, grads, state, lr, step, b1=0.9, b2=0.999, eps=1e-8):
    for k, (p, g) in enumerate(zip(params, grads)):
        m, v = state[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1**step)
        vhat = v / (1 - b2**step)
        p -= lr * mhat / (np.sqrt(vhat) + eps)


def toy_objective(model: ToyModel, raw, bags, used, tok_ids=None, fallback=None):
    """Batch-mean objective and gradients w.r.t. ``model.arrays()``.

    ``tok_ids`` (B x N_L) are the sampled significant token ids for L5; rows
    flagged in ``fallback`` have no significant tokens and use the sentence
    feature in every slot.
    """
    b = raw.shape[0]
    vis = model.encode_visual(raw)
    txt = model.encode_text(bags)
    g_vis = np.zeros_like(vis)
    g_txt = np.zeros_like(txt)
    g_emb = np.zeros_like(model.emb)
    g_bt = np.zeros_like(model.b_t)
    value = 0.0
    if "L3" in used:
        res = losses.gvtm_free(vis, txt)
        value += res.value / b
        g_vis += res.grads["vis"] / b
        g_txt += res.grads["txt_cls"] / b
    if "L5" in used:
        keep = ~fallback
        tokens = model.emb[tok_ids] + model.b_t
        tokens[fallback] = txt[fallback][:, None, :]
        res = losses.lvwm(vis, tokens)
        value += res.value / b
        g_vis += res.grads["vis"] / b
        g_tok = res.grads["sig_tokens"] / b
        g_txt[fallback] += g_tok[fallback].sum(axis=1)
        np.add.at(g_emb, tok_ids[keep].ravel(), g_tok[keep].reshape(-1, g_tok.shape[2]))
        g_bt += g_tok[keep].sum(axis=(0, 1))
    g_emb += bags.T @ g_txt
    g_bt += g_txt.sum(axis=0)
    return value, [raw.T @ g_vis, g_vis.sum(axis=0), g_emb, g_bt]


def train_toy(
    corpus,
    vocab: Vocab,
    losses_used=("L3",),
    steps: int = 2000,
    lr: float = 1e-2,
    seed: int = 0,
    batch_size: int = 64,
    dim: int = 32,
    n_l: int = 3,
    sig=None,
    init_std: float = 0.1,
) -> TrainResult:
    """Train the toy towers on mean-over-batch L3 (and optionally L5) with Adam.

    ``sig`` defaults to the significant vocabulary mined from ``corpus`` itself
    with one slot per concept word.
    """
    used = tuple(sorted(set(losses_used)))
    if not used or not set(used) <= {"L3", "L5"}:
        raise ValueError(f"losses must be a non-empty subset of {{L3, L5}}, got {losses_used}")
    n = len(corpus)
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds corpus size {n}")
    seqs = [wordpiece_tokenize(r.caption, vocab) for r in corpus]
    bags = _bags(seqs, len(vocab))
    raw = np.stack([r.visual for r in corpus])
    if sig is None and "L5" in used:
        sig = threshold_topk(count_significant(pos_records(corpus), vocab), len(CONCEPT_WORDS))
    chosen = [build_chosen_list(s, sig) for s in seqs] if "L5" in used else None
    id_table = np.array([s.ids for s in seqs], dtype=np.int64)

    rng = np.random.default_rng(seed)
    # separate stream so that L3-only and L3+L5 runs see identical inits and batches
    lvwm_rng = np.random.default_rng([seed, 5])
    model = ToyModel(
        rng.normal(0.0, init_std, (raw.shape[1], dim)),
        np.zeros(dim),
        rng.normal(0.0, init_std, (len(vocab), dim)),
        np.zeros(dim),
    )
    state = [(np.zeros_like(p), np.zeros_like(p)) for p in model.arrays()]
    curve = []
    for step in range(1, steps + 1):
        batch = rng.choice(n, size=batch_size, replace=False)
        tok_ids = fallback = None
        if "L5" in used:
            picks, fallback = sample_lvwm_batch([chosen[i] for i in batch], n_l, lvwm_rng)
            tok_ids = id_table[batch[:, None], picks]
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
            value, grads = toy_objective(model, raw[batch], bags[batch], used, tok_ids, fallback)
        if not np.isfinite(value):
            raise DivergenceError(step)
        curve.append(value)
        if lr:
            _adam(model.arrays(), grads, state, lr, step)
    return TrainResult(model, curve, used)


def evaluate_toy(model: ToyModel, corpus, vocab: Vocab):
    vis = model.encode_visual(np.stack([r.visual for r in corpus]))
    txt = model.encode_text(text_bags(corpus, vocab))
    return eval_retrieval(vis, txt)
