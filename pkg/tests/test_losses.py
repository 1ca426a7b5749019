import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snps3.errors import EmptyMaskError, GradCheckError
from snps3.gradcheck import grad_check
from snps3.losses import (
    LossResult,
    MlpParams,
    gvtm_free,
    gvtm_mlp,
    gvtm_scored,
    lvwm,
    masked_ce,
    mlp_score,
    mlp_score_backward,
    total_loss,
)
from oracles import naive_ce, naive_gvtm, naive_lvwm

TWO_PAIR = 2 * math.log(1 + math.exp(-1))  # 0.626523...


def test_ce_saturated_and_uniform():
    logits = np.zeros((1, 5))
    logits[0, 2] = 1e6
    assert masked_ce(logits, [2]).value == pytest.approx(0.0, abs=1e-12)
    assert masked_ce(np.zeros((1, 2)), [0]).value == pytest.approx(math.log(2), abs=1e-12)


def test_ce_matches_naive():
    rng = np.random.default_rng(1)
    logits = rng.normal(0, 3, (2, 7))
    labels = [3, 6]
    assert masked_ce(logits, labels).value == pytest.approx(naive_ce(logits.tolist(), labels), rel=1e-6)


def test_ce_errors():
    with pytest.raises(EmptyMaskError):
        masked_ce(np.zeros((0, 3)), [])
    with pytest.raises(ValueError):
        masked_ce(np.zeros((1, 3)), [3])


def test_gvtm_closed_forms():
    eye = np.eye(2)
    assert gvtm_free(eye, eye).value == pytest.approx(TWO_PAIR, abs=1e-12)
    assert gvtm_scored(eye).value == pytest.approx(TWO_PAIR, abs=1e-12)
    assert TWO_PAIR == pytest.approx(0.626523, abs=1e-6)
    rng = np.random.default_rng(0)
    assert gvtm_free(rng.normal(size=(1, 4)), rng.normal(size=(1, 4))).value == 0.0
    assert gvtm_scored(rng.normal(size=(1, 1))).value == 0.0


def test_gvtm_matches_naive():
    rng = np.random.default_rng(2)
    v, t = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
    assert gvtm_free(v, t).value == pytest.approx(naive_gvtm(v, t), rel=1e-9)


def test_gvtm_free_is_one_directional():
    # negatives range over visual rows for each text anchor: scores[j, i] = <v_j, t_i>
    rng = np.random.default_rng(3)
    v, t = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    assert gvtm_free(v, t).value == pytest.approx(gvtm_scored(v @ t.T).value, rel=1e-12)
    assert gvtm_free(v, t).value != pytest.approx(gvtm_free(t, v).value, rel=1e-6)


def test_gvtm_scored_decreases_with_diagonal_shift():
    rng = np.random.default_rng(4)
    s = rng.normal(size=(4, 4))
    vals = [gvtm_scored(s + c * np.eye(4)).value for c in (0, 1, 2)]
    assert vals[0] > vals[1] > vals[2]


def test_shape_and_finiteness_errors():
    with pytest.raises(ValueError):
        gvtm_free(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        gvtm_free(np.array([[np.nan]]), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        gvtm_scored(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        lvwm(np.zeros((2, 3)), np.zeros((2, 0, 3)))


def test_lvwm_degenerate_and_reduction():
    rng = np.random.default_rng(5)
    assert lvwm(rng.normal(size=(1, 4)), rng.normal(size=(1, 3, 4))).value == pytest.approx(0.0, abs=1e-12)
    v, t = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    assert lvwm(v, t[:, None, :]).value == pytest.approx(gvtm_free(v, t).value, rel=1e-9)


def test_lvwm_matches_triple_loop():
    v = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]])
    tok = np.array([[[1.0, 1.0, 0.0], [0.0, 2.0, 1.0]], [[-1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]])
    assert lvwm(v, tok).value == pytest.approx(naive_lvwm(v, tok), rel=1e-6)


def test_total_loss():
    assert total_loss(0, 0, 0, 0, 0) == 0
    assert total_loss(1, 2, 3, 4, 5) == 15
    assert total_loss(None, 2, 3, 4, 5) == 14
    with pytest.raises(ValueError):
        total_loss(float("inf"), 0, 0, 0, 0)


def test_mlp_zero_and_hand_value():
    x = np.eye(3)
    zero = MlpParams(np.zeros((3, 3)), np.zeros(3), np.zeros((3, 1)), np.zeros(1))
    assert not mlp_score(x, zero).any()
    # identity first layer, second layer picks hidden unit 0, bias 0.5: score = gelu(1) + 0.5 for e_0
    p = MlpParams(np.eye(3), np.zeros(3), np.array([[1.0], [0.0], [0.0]]), np.array([0.5]))
    gelu1 = 0.5 * (1 + math.tanh(math.sqrt(2 / math.pi) * (1 + 0.044715)))
    out = mlp_score(np.array([[1.0, 0.0, 0.0]]), p)
    assert out.shape == (1, 1) and out[0, 0] == pytest.approx(gelu1 + 0.5, rel=1e-12)


def test_mlp_shape_error():
    p = MlpParams.init(4)
    with pytest.raises(ValueError):
        mlp_score(np.zeros((2, 3)), p)


def _mlp_probe(weights):
    def f(pair_features, w1, b1, w2, b2):
        p = MlpParams(w1, b1, w2, b2)
        s = mlp_score(pair_features, p)
        g = mlp_score_backward(pair_features, p, weights)
        return LossResult(float(np.sum(weights * s)), g)

    return f


def test_mlp_gradient_vs_finite_differences():
    rng = np.random.default_rng(6)
    p = MlpParams.init(5, 4, seed=1, std=0.7)
    x = rng.normal(size=(6, 5))
    err = grad_check(_mlp_probe(rng.normal(size=(6, 1))), {"pair_features": x, **p.as_dict()})
    assert err < 1e-4


def test_gvtm_mlp_gradient():
    rng = np.random.default_rng(7)
    p = MlpParams.init(4, seed=2, std=0.6)

    def f(pair_features, **kw):
        return gvtm_mlp(pair_features, MlpParams(**kw))

    assert grad_check(f, {"pair_features": rng.normal(size=(3, 3, 4)), **p.as_dict()}) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_grad_checks(seed):
    rng = np.random.default_rng(seed)
    b, d = 4, 8
    assert grad_check(gvtm_free, {"vis": rng.normal(size=(b, d)), "txt_cls": rng.normal(size=(b, d))}) < 1e-4
    assert grad_check(lvwm, {"vis": rng.normal(size=(3, d)), "sig_tokens": rng.normal(size=(3, 3, d))}) < 1e-4
    assert grad_check(gvtm_scored, {"scores": rng.normal(size=(b, b))}) < 1e-4
    logits = rng.normal(size=(3, 6))
    assert grad_check(lambda logits: masked_ce(logits, [0, 5, 2]), {"logits": logits}) < 1e-4


def test_grad_check_eps_range_and_nonfinite():
    with pytest.raises(ValueError):
        grad_check(gvtm_scored, {"scores": np.eye(2)}, eps=1e-1)

    def bad(x):
        with np.errstate(over="ignore"):
            return LossResult(float(np.exp(1e3 * x[0, 0])), {"x": np.ones_like(x)})

    with pytest.raises(GradCheckError) as info:
        grad_check(bad, {"x": np.ones((1, 1))})
    assert info.value.index == (0, 0)


def test_grad_check_detects_wrong_gradient():
    def wrong(scores):
        res = gvtm_scored(scores)
        return LossResult(res.value, {"scores": 2 * res.grads["scores"]})

    assert grad_check(wrong, {"scores": np.random.default_rng(0).normal(size=(3, 3))}) > 1e-2


def test_large_inputs_stay_finite():
    rng = np.random.default_rng(8)
    d = 1024
    v = rng.uniform(-50, 50, (4, d))
    t = rng.uniform(-50, 50, (4, d))
    for res in (gvtm_free(v, t), lvwm(v, np.stack([t] * 2, axis=1)), gvtm_scored(rng.uniform(-50, 50, (4, 4))),
                masked_ce(rng.uniform(-50, 50, (3, d)), [0, 1, 2])):
        assert np.isfinite(res.value)
        assert all(np.all(np.isfinite(g)) for g in res.grads.values())


def test_float32_inputs_accumulate_in_float64():
    rng = np.random.default_rng(9)
    v, t = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
    a = gvtm_free(v.astype(np.float32), t.astype(np.float32)).value
    b = gvtm_free(v.astype(np.float32).astype(np.float64), t.astype(np.float32).astype(np.float64)).value
    assert a == b


small = st.integers(min_value=1, max_value=5)


@settings(max_examples=60, deadline=None)
@given(small, small, st.integers(1, 6), st.integers(0, 2**32))
def test_permutation_equivariance_and_nonnegativity(b, n_l, d, seed):
    rng = np.random.default_rng(seed)
    v, t = rng.normal(size=(b, d)), rng.normal(size=(b, d))
    tok = rng.normal(size=(b, n_l, d))
    perm = rng.permutation(b)
    r1, r2 = gvtm_free(v, t), gvtm_free(v[perm], t[perm])
    assert r1.value == pytest.approx(r2.value, rel=1e-9, abs=1e-12)
    assert np.allclose(r1.grads["vis"][perm], r2.grads["vis"])
    l1, l2 = lvwm(v, tok), lvwm(v[perm], tok[perm])
    assert l1.value == pytest.approx(l2.value, rel=1e-9, abs=1e-12)
    assert np.allclose(l1.grads["sig_tokens"][perm], l2.grads["sig_tokens"])
    s = rng.normal(size=(b, b))
    assert gvtm_scored(s).value == pytest.approx(gvtm_scored(s[np.ix_(perm, perm)]).value, rel=1e-9, abs=1e-12)
    for val in (r1.value, l1.value, gvtm_scored(s).value, masked_ce(rng.normal(size=(b, d)), [0] * b).value):
        assert val >= -1e-9
