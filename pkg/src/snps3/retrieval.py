"""Text-to-video retrieval metrics: Recall@K and median rank."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_KS = (1, 5, 10)


@dataclass(frozen=True)
class RetrievalMetrics:
    r_at: dict
    mdr: float

    def to_json(self) -> dict:
        out = {f"r{k}": float(v) for k, v in sorted(self.r_at.items())}
        out["mdr"] = float(self.mdr)
        return out


def true_pair_ranks(vis, txt) -> np.ndarray:
    """1-based rank of video ``i`` for text anchor ``i``; ties go to the lower video index."""
    v = np.asarray(vis, dtype=np.float64)
    t = np.asarray(txt, dtype=np.float64)
    if v.ndim != 2 or v.shape != t.shape:
        raise ValueError(f"vis {v.shape} and txt {t.shape} must be matching n x d matrices")
    n = v.shape[0]
    if n == 0:
        raise ValueError("cannot evaluate retrieval on zero pairs")
    scores = t @ v.T  # scores[i, j]: text i against video j
    own = np.diag(scores)[:, None]
    beats = scores > own
    ties_before = (scores == own) & (np.arange(n)[None, :] < np.arange(n)[:, None])
    return 1 + beats.sum(axis=1) + ties_before.sum(axis=1)


def eval_retrieval(vis, txt, ks=DEFAULT_KS) -> RetrievalMetrics:
    ranks = true_pair_ranks(vis, txt)
    r_at = {k: float(np.mean(ranks <= k)) for k in ks}
    return RetrievalMetrics(r_at, float(np.median(ranks)))
