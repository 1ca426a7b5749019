"""Alignment and masked-prediction losses with analytic gradients.

Inputs may be stored as float32; every kernel accumulates in float64. The
contrastive sums follow the one-directional form: for each text anchor ``i``
the negatives range over the visual rows ``j != i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from snps3.errors import EmptyMaskError


@dataclass
class LossResult:
    value: float
    grads: dict = field(default_factory=dict)


def _as_matrix(x, name, ndim=2):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _softmax(a, axis):
    e = np.exp(a - np.max(a, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def masked_ce(logits, labels) -> LossResult:
    """Mean cross-entropy over the masked rows; ``logits`` is |Q| x V."""
    z = _as_matrix(logits, "logits")
    y = np.asarray(labels, dtype=np.int64)
    q = z.shape[0]
    if q == 0:
        raise EmptyMaskError("no masked positions")
    if y.shape != (q,):
        raise ValueError(f"expected {q} labels, got shape {y.shape}")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise ValueError("label outside [0, V)")
    rows = np.arange(q)
    lse = _logsumexp(z, axis=1)
    value = float(np.sum(lse - z[rows, y]) / q)
    g = _softmax(z, axis=1)
    g[rows, y] -= 1.0
    return LossResult(value, {"logits": g / q})


def _column_contrast(s):
    """Loss and gradient of ``-sum_i log softmax_j(s[:, i])[i]``."""
    n = s.shape[0]
    diag = np.arange(n)
    value = float(np.sum(_logsumexp(s, axis=0) - s[diag, diag]))
    g = _softmax(s, axis=0)
    g[diag, diag] -= 1.0
    return value, g


def gvtm_free(vis, txt_cls, scale: float = 1.0) -> LossResult:
    """Parameter-free global matching over raw dot products ``scale * <v_j, t_i>``."""
    v = _as_matrix(vis, "vis")
    t = _as_matrix(txt_cls, "txt_cls")
    if v.shape != t.shape or v.shape[0] < 1:
        raise ValueError(f"vis {v.shape} and txt_cls {t.shape} must share a non-empty shape")
    s = scale * (v @ t.T)  # s[j, i] = <v_j, t_i>
    value, g = _column_contrast(s)
    return LossResult(value, {"vis": scale * (g @ t), "txt_cls": scale * (g.T @ v)})


def gvtm_scored(scores) -> LossResult:
    """Matching loss over a precomputed score matrix, ``scores[j][i]`` for pair (visual j, text i)."""
    s = _as_matrix(scores, "scores")
    if s.shape[0] != s.shape[1]:
        raise ValueError(f"scores must be square, got {s.shape}")
    value, g = _column_contrast(s)
    return LossResult(value, {"scores": g})


def lvwm(vis, sig_tokens, scale: float = 1.0) -> LossResult:
    """Local matching of each visual row against the sampled significant-token features.

    ``sig_tokens`` is B x N_L x d; the positive mass for anchor ``i`` is pooled over its
    N_L tokens in the numerator, and every (visual row, token) pair enters the denominator.
    """
    v = _as_matrix(vis, "vis")
    tok = _as_matrix(sig_tokens, "sig_tokens", ndim=3)
    b, n_l, d = tok.shape
    if n_l == 0:
        raise ValueError("sig_tokens needs n_l >= 1")
    if v.shape != (b, d):
        raise ValueError(f"vis {v.shape} inconsistent with sig_tokens {tok.shape}")
    flat_tok = tok.reshape(b * n_l, d)
    s = scale * (v @ flat_tok.T).reshape(b, b, n_l)  # s[j, i, l] = <v_j, t_i^l>
    diag = np.arange(b)
    flat = s.transpose(1, 0, 2).reshape(b, b * n_l)  # per anchor i, all (j, l)
    pos = s[diag, diag, :]  # b x n_l
    value = float(np.sum(_logsumexp(flat, axis=1) - _logsumexp(pos, axis=1)))
    g = _softmax(flat, axis=1).reshape(b, b, n_l).transpose(1, 0, 2)  # back to [j, i, l]
    g[diag, diag, :] -= _softmax(pos, axis=1)
    g2 = g.reshape(b, b * n_l)
    g_vis = scale * (g2 @ flat_tok)
    g_tok = scale * (g2.T @ v).reshape(b, n_l, d)
    return LossResult(value, {"vis": g_vis, "sig_tokens": g_tok})


def total_loss(*terms) -> float:
    """Unweighted sum of the five objectives; ``None`` marks an omitted term."""
    vals = [0.0 if t is None else float(t) for t in terms]
    if not all(np.isfinite(vals)):
        raise ValueError("loss terms must be finite")
    return float(sum(vals))


# --- matching head -------------------------------------------------------


@dataclass
class MlpParams:
    """Two affine maps around a GELU: d -> hidden -> 1."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, d: int, hidden: int | None = None, seed: int = 0, std: float = 0.02) -> "MlpParams":
        hidden = d if hidden is None else hidden
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(0.0, std, (d, hidden)),
            np.zeros(hidden),
            rng.normal(0.0, std, (hidden, 1)),
            np.zeros(1),
        )

    def as_dict(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def n_params(self) -> int:
        return sum(int(np.size(a)) for a in self.as_dict().values())


_GELU_C = np.sqrt(2.0 / np.pi)


def _gelu(x):
    inner = _GELU_C * (x + 0.044715 * x**3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _gelu_grad(x):
    inner = _GELU_C * (x + 0.044715 * x**3)
    th = np.tanh(inner)
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)


def _check_mlp(x, params):
    d = x.shape[1]
    if params.w1.shape[0] != d or params.b1.shape != (params.w1.shape[1],):
        raise ValueError("first layer shape does not match the feature width")
    if params.w2.shape != (params.w1.shape[1], 1) or np.size(params.b2) != 1:
        raise ValueError("second layer must map hidden -> 1")


def mlp_score(pair_features, params: MlpParams) -> np.ndarray:
    """Score every row of ``pair_features`` (n x d); returns n x 1."""
    x = _as_matrix(pair_features, "pair_features")
    _check_mlp(x, params)
    return _gelu(x @ params.w1 + params.b1) @ params.w2 + params.b2.reshape(1, 1)


def mlp_score_backward(pair_features, params: MlpParams, grad_out) -> dict:
    """Vector-Jacobian product of :func:`mlp_score` for upstream gradient ``grad_out`` (n x 1)."""
    x = _as_matrix(pair_features, "pair_features")
    _check_mlp(x, params)
    go = np.asarray(grad_out, dtype=np.float64).reshape(-1, 1)
    pre = x @ params.w1 + params.b1
    h = _gelu(pre)
    dh = go @ params.w2.T
    dpre = dh * _gelu_grad(pre)
    return {
        "pair_features": dpre @ params.w1.T,
        "w1": x.T @ dpre,
        "b1": dpre.sum(axis=0),
        "w2": h.T @ go,
        "b2": go.sum(axis=0),
    }


def gvtm_mlp(pair_features, params: MlpParams) -> LossResult:
    """Parameter-employed matching: MLP scores over a B x B x d grid of pooled cross-modal features.

    ``pair_features[j, i]`` is the pooled feature of pair (visual j, text i).
    """
    x = np.asarray(pair_features, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != x.shape[1]:
        raise ValueError(f"pair_features must be B x B x d, got {x.shape}")
    b, _, d = x.shape
    flat = x.reshape(b * b, d)
    scores = mlp_score(flat, params).reshape(b, b)
    res = gvtm_scored(scores)
    back = mlp_score_backward(flat, params, res.grads["scores"].reshape(-1, 1))
    grads = {k: v for k, v in back.items() if k != "pair_features"}
    grads["pair_features"] = back["pair_features"].reshape(b, b, d)
    return LossResult(res.value, grads)
