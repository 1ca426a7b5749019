"""Masking plans for MLM / MSSM and significant-token sampling for LVWM."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np

from snps3.errors import NoSignificantTokens
from snps3.miner import ChosenList
from snps3.tokenizer import TokenSeq, Vocab

DEFAULT_MASK_RATE = 0.15
DEFAULT_N_L = 3
# share of selected positions replaced by [MASK] / a random token; the rest keep their token
P_TO_MASK = 0.8
P_TO_RANDOM = 0.1


class Action(str, enum.Enum):
    KEEP = "K"
    TO_MASK = "M"
    TO_RANDOM = "R"
    TO_SELF = "S"


@dataclass(frozen=True)
class MaskingPlan:
    actions: tuple
    labels: tuple
    seed_trace: int

    @property
    def masked_positions(self) -> list[int]:
        return [p for p, a in enumerate(self.actions) if a is not Action.KEEP]

    def codes(self) -> str:
        return "".join(a.value for a in self.actions)


@dataclass(frozen=True)
class LvwmSample:
    indices: tuple


def record_seed(global_seed: int, record_id: str) -> int:
    """Stable 63-bit seed for one record, independent of batch composition."""
    digest = hashlib.sha256(f"{int(global_seed)}\x00{record_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _candidates(seq: TokenSeq) -> list[int]:
    return [p for p, special in enumerate(seq.is_special) if not special]


def _plan(seq: TokenSeq, candidates, rate, rng_seed) -> MaskingPlan:
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    rng = np.random.default_rng(rng_seed)
    n = len(seq.ids)
    actions = [Action.KEEP] * n
    labels = [None] * n
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size:
        picked = cand[rng.random(cand.size) < rate]
        kinds = rng.random(picked.size)
        if picked.size == 0:
            # forced minimum: one uniform candidate always goes to [MASK]
            picked = cand[[rng.integers(cand.size)]]
            kinds = np.zeros(1)
        for pos, u in zip(picked.tolist(), kinds.tolist()):
            if u < P_TO_MASK:
                actions[pos] = Action.TO_MASK
            elif u < P_TO_MASK + P_TO_RANDOM:
                actions[pos] = Action.TO_RANDOM
            else:
                actions[pos] = Action.TO_SELF
            labels[pos] = seq.ids[pos]
    return MaskingPlan(tuple(actions), tuple(labels), int(rng_seed))


def plan_mlm(seq: TokenSeq, rate: float = DEFAULT_MASK_RATE, rng_seed: int = 0) -> MaskingPlan:
    """Conventional MLM: every non-special position is a candidate."""
    return _plan(seq, _candidates(seq), rate, rng_seed)


def plan_mssm(seq: TokenSeq, chosen: ChosenList, rate: float = DEFAULT_MASK_RATE, rng_seed: int = 0) -> MaskingPlan:
    """MLM restricted to the chosen significant positions.

    An empty chosen list falls back to :func:`plan_mlm` with the same seed.
    """
    if not chosen.positions:
        return plan_mlm(seq, rate, rng_seed)
    special = seq.is_special
    for p in chosen.positions:
        if p >= len(special) or special[p]:
            raise ValueError(f"chosen position {p} is not a content position of the sequence")
    return _plan(seq, sorted(chosen.positions), rate, rng_seed)


def apply_plan(seq: TokenSeq, plan: MaskingPlan, vocab: Vocab) -> list[int]:
    """Corrupted input ids. Random replacements come from a stream derived from ``plan.seed_trace``."""
    rng = np.random.default_rng([plan.seed_trace, 1])
    regular = np.flatnonzero(~np.frombuffer(vocab.special_mask(), dtype=np.uint8).astype(bool))
    out = list(seq.ids)
    for pos, action in enumerate(plan.actions):
        if action is Action.TO_MASK:
            out[pos] = vocab.mask_id
        elif action is Action.TO_RANDOM:
            out[pos] = int(regular[rng.integers(regular.size)])
    return out


def sample_lvwm(chosen: ChosenList, n_l: int = DEFAULT_N_L, rng_seed: int = 0) -> LvwmSample:
    """Pick exactly ``n_l`` chosen positions: subsample without replacement, or cover all and over-sample."""
    if n_l < 1:
        raise ValueError(f"n_l must be >= 1, got {n_l}")
    pos = np.asarray(sorted(chosen.positions), dtype=np.int64)
    if pos.size == 0:
        raise NoSignificantTokens("caption has no significant tokens")
    rng = np.random.default_rng(rng_seed)
    if pos.size > n_l:
        idx = np.sort(rng.choice(pos, size=n_l, replace=False))
    elif pos.size == n_l:
        idx = pos
    else:
        extra = rng.choice(pos, size=n_l - pos.size, replace=True)
        idx = np.sort(np.concatenate([pos, extra]))
    return LvwmSample(tuple(int(i) for i in idx))


def sample_lvwm_batch(chosen_lists, n_l: int, rng: np.random.Generator):
    """Vectorized :func:`sample_lvwm` over a batch, drawing from one generator.

    Returns ``(indices, empty)``: an ``len(chosen_lists) x n_l`` array of positions
    (rows for empty lists are zero) and a boolean flag per row marking empty lists.
    Each row follows the same rule as :func:`sample_lvwm`.
    """
    if n_l < 1:
        raise ValueError(f"n_l must be >= 1, got {n_l}")
    b = len(chosen_lists)
    sizes = np.array([len(c.positions) for c in chosen_lists], dtype=np.int64)
    width = max(int(sizes.max(initial=0)), 1)
    table = np.zeros((b, width), dtype=np.int64)
    for r, c in enumerate(chosen_lists):
        table[r, : sizes[r]] = sorted(c.positions)
    # random keys give a uniform permutation of each row's valid prefix
    keys = rng.random((b, width))
    keys[np.arange(width)[None, :] >= sizes[:, None]] = np.inf
    order = np.argsort(keys, axis=1, kind="stable")
    cols = np.empty((b, n_l), dtype=np.int64)
    take = min(n_l, width)
    cols[:, :take] = order[:, :take]
    if n_l > width:
        cols[:, width:] = 0
    # rows shorter than n_l: keep every element once, fill the rest uniformly with replacement
    short = sizes < n_l
    if np.any(short):
        extra = np.floor(rng.random((b, n_l)) * np.maximum(sizes, 1)[:, None]).astype(np.int64)
        slot = np.arange(n_l)[None, :]
        fill = short[:, None] & (slot >= sizes[:, None])
        base = np.where(slot < sizes[:, None], slot, 0)
        cols = np.where(short[:, None], np.where(fill, extra, base), cols)
    indices = np.take_along_axis(table, cols, axis=1)
    empty = sizes == 0
    indices[empty] = 0
    return np.sort(indices, axis=1), empty
