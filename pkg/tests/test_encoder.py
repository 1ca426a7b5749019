import json
from pathlib import Path

import numpy as np
import pytest

from snps3.encoder import (
    EncoderConfig,
    VisualFeatures,
    count_params,
    forward_crossmodal,
    forward_text,
    init_params,
    output_hash,
    reduction,
)
from snps3.errors import ConfigurationError
from snps3.synth import synth_vocab
from snps3.tokenizer import wordpiece_tokenize

GOLDEN = json.loads((Path(__file__).parent / "fixtures" / "golden_forward.json").read_text())
TOY = dict(layers=2, hidden=8, heads=2, ffn=16, vocab_size=16, max_positions=32, n_t=10)


def toy(variant="SNP", **kw):
    return EncoderConfig(**{**TOY, "variant": variant, "cross_layers": 1, **kw})


def _ids(n_t=10, vocab=16, seed=0):
    return np.random.default_rng(seed).integers(0, vocab, n_t)


def test_init_deterministic():
    a, b = init_params(toy(), 7), init_params(toy(), 7)
    ta, tb = a.tensors(), b.tensors()
    assert ta.keys() == tb.keys()
    assert all(np.array_equal(ta[k], tb[k]) for k in ta)
    c = init_params(toy(), 8).tensors()
    assert not np.array_equal(ta["embeddings.token"], c["embeddings.token"])


def test_snp_paths_share_parameters():
    p = init_params(toy("SNP"), 0)
    assert p.cross_stack is p.text_stack
    assert p.mlm_heads["text"] is p.mlm_heads["cross"]
    assert p.path_tensor_ids("text") == p.path_tensor_ids("cross")
    q = init_params(toy("P3E"), 0)
    assert not (q.path_tensor_ids("text") & q.path_tensor_ids("cross"))


def test_toy_shapes():
    p = init_params(toy(), 1)
    assert p.embeddings["token"].shape == (16, 8)
    assert p.embeddings["position"].shape == (32, 8)
    assert len(p.text_stack) == 2
    layer = p.text_stack[0]
    assert layer["wq"].shape == (8, 8) and layer["w1"].shape == (8, 16) and layer["w2"].shape == (16, 8)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        init_params(toy(hidden=9), 0)
    with pytest.raises(ConfigurationError):
        init_params(toy("P3E", cross_layers=0), 0)
    with pytest.raises(ConfigurationError):
        EncoderConfig.from_json({"layers": 2, "depth": 3})
    d = EncoderConfig()
    assert (d.hidden, d.layers, d.cross_layers, d.n_t) == (768, 12, 3, 30)


def test_forward_text_shape_and_errors():
    p = init_params(toy(), 2)
    assert forward_text(p, _ids()).shape == (10, 8)
    with pytest.raises(ValueError):
        forward_text(p, _ids(n_t=9))
    with pytest.raises(ValueError):
        forward_text(p, np.full(10, 16))


@pytest.mark.parametrize("variant", ["SNP", "P3E"])
@pytest.mark.parametrize("n_v", [1, 4, 16])
def test_crossmodal_shape(variant, n_v):
    p = init_params(toy(variant), 3)
    vis = VisualFeatures(np.random.default_rng(0).normal(size=(n_v, 8)))
    assert forward_crossmodal(p, _ids(), vis).shape == (10 + n_v, 8)


def test_crossmodal_dim_mismatch():
    p = init_params(toy(), 3)
    with pytest.raises(ValueError):
        forward_crossmodal(p, _ids(), VisualFeatures(np.zeros((2, 7))))
    with pytest.raises(ValueError):
        VisualFeatures(np.zeros((0, 8)))


def test_visual_tokens_have_no_position():
    # permuting visual tokens permutes their output rows and leaves text rows unchanged
    p = init_params(toy(), 4)
    v = np.random.default_rng(1).normal(size=(3, 8))
    a = forward_crossmodal(p, _ids(), VisualFeatures(v))
    b = forward_crossmodal(p, _ids(), VisualFeatures(v[::-1]))
    assert np.allclose(a[:10], b[:10], atol=1e-5)
    assert np.allclose(a[10:], b[10:][::-1], atol=1e-5)


def test_shared_weight_perturbation_moves_both_paths():
    p = init_params(toy("SNP"), 5)
    ids = _ids()
    vis = VisualFeatures(np.ones((2, 8)))
    t0, m0 = forward_text(p, ids), forward_crossmodal(p, ids, vis)
    p.text_stack[1]["w2"][0, 0] += 0.5
    assert not np.allclose(forward_text(p, ids), t0)
    assert not np.allclose(forward_crossmodal(p, ids, vis), m0)


def test_p3e_cross_weight_leaves_text_path():
    p = init_params(toy("P3E"), 5)
    ids = _ids()
    t0 = forward_text(p, ids)
    m0 = forward_crossmodal(p, ids, VisualFeatures(np.ones((2, 8))))
    p.cross_stack[0]["w2"][0, 0] += 0.5
    assert np.array_equal(forward_text(p, ids), t0)
    assert not np.allclose(forward_crossmodal(p, ids, VisualFeatures(np.ones((2, 8)))), m0)


def test_different_captions_give_different_cls():
    vocab = synth_vocab()
    p = init_params(EncoderConfig(**{**TOY, "vocab_size": len(vocab), "n_t": 12}), 6)
    a = forward_text(p, wordpiece_tokenize("a red dog runs", vocab, 12))
    b = forward_text(p, wordpiece_tokenize("the old man sleeps", vocab, 12))
    assert not np.allclose(a[0], b[0])


def test_padding_is_masked():
    vocab = synth_vocab()
    p = init_params(EncoderConfig(**{**TOY, "vocab_size": len(vocab), "n_t": 12}), 6)
    seq = wordpiece_tokenize("a red dog", vocab, 12)
    out = forward_text(p, seq)
    p.embeddings["token"][vocab.pad_id] += 3.0
    out2 = forward_text(p, seq)
    n = seq.n_real
    assert np.allclose(out[:n], out2[:n], atol=1e-6)


@pytest.mark.parametrize("variant", ["SNP", "P3E"])
def test_golden_hashes(variant):
    cfg = EncoderConfig(**GOLDEN["config"], variant=variant)
    p = init_params(cfg, GOLDEN["seed"])
    ids = np.array(GOLDEN["token_ids"])
    vis = VisualFeatures(np.random.default_rng(GOLDEN["visual_seed"]).normal(size=(GOLDEN["n_v"], cfg.hidden)))
    assert output_hash(forward_text(p, ids)) == GOLDEN["hashes"][variant]["text"]
    assert output_hash(forward_crossmodal(p, ids, vis)) == GOLDEN["hashes"][variant]["cross"]


def test_hand_counted_toy_totals():
    # embedder 416, layer 600, MLM head 232, matching 81 (d=8, ffn=16, V=16, P=32)
    assert count_params(toy("SNP"), 0).total == 416 + 2 * 600 + 232 + 81
    assert count_params(toy("P3E"), 0).total == 416 + 3 * 600 + 2 * 232 + 81


@pytest.mark.parametrize("variant", ["SNP", "P3E"])
@pytest.mark.parametrize("cross_layers", [1, 2])
def test_count_matches_enumeration(variant, cross_layers):
    cfg = toy(variant, cross_layers=cross_layers)
    report = count_params(cfg, 1234)
    assert report.total == sum(report.items.values())
    assert report.total - 1234 == init_params(cfg, 0).n_elements()


def test_zero_cross_layers_equals_snp():
    assert count_params(EncoderConfig(variant="P3E", cross_layers=0)).total == count_params(EncoderConfig()).total


def test_reduction_bert_base():
    snp, p3e = count_params(EncoderConfig()), count_params(EncoderConfig(variant="P3E"))
    assert 0.19 <= reduction(snp, p3e) <= 0.25
    assert len(snp.assumptions) >= 5
