"""Forward-only shared encoder (SNP) versus separate cross-modal encoder (P3E), plus parameter accounting."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from snps3.errors import ConfigurationError
from snps3.tokenizer import TokenSeq

# ResNet-50 including its 1000-way classifier, the usual 25.6M figure
R50_PARAMS = 25_557_032
VARIANTS = ("SNP", "P3E")
_LAYER_KEYS = (
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b",
    "w1", "b1", "w2", "b2", "ln2_g", "ln2_b",
)


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 12
    hidden: int = 768
    heads: int = 12
    ffn: int = 3072
    vocab_size: int = 30522
    max_positions: int = 512
    variant: str = "SNP"
    cross_layers: int = 3
    type_vocab: int = 2
    n_t: int = 30

    def validate(self, allow_empty_cross: bool = False) -> "EncoderConfig":
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("layers", "hidden", "heads", "ffn", "vocab_size", "max_positions", "type_vocab", "n_t"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.hidden % self.heads:
            raise ConfigurationError(f"hidden={self.hidden} is not divisible by heads={self.heads}")
        if self.variant == "P3E" and self.cross_layers < (0 if allow_empty_cross else 1):
            raise ConfigurationError("P3E needs cross_layers >= 1")
        if self.n_t > self.max_positions:
            raise ConfigurationError("n_t exceeds max_positions")
        return self

    @property
    def has_cross_stack(self) -> bool:
        return self.variant == "P3E" and self.cross_layers > 0

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown encoder config fields: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class EncoderParams:
    """Named weight blocks. For SNP, ``cross_stack is text_stack`` and the two MLM heads are one object."""

    config: EncoderConfig
    embeddings: dict
    text_stack: list
    cross_stack: list
    mlm_heads: dict
    matching: dict
    seed: int

    def tensors(self) -> dict:
        """Every distinct tensor, keyed by a path; shared tensors appear once."""
        out = {}
        seen = set()

        def add(prefix, block):
            for k, v in block.items():
                if id(v) not in seen:
                    seen.add(id(v))
                    out[f"{prefix}.{k}"] = v

        add("embeddings", self.embeddings)
        for i, layer in enumerate(self.text_stack):
            add(f"text.{i}", layer)
        for i, layer in enumerate(self.cross_stack):
            add(f"cross.{i}", layer)
        for name, head in self.mlm_heads.items():
            add(f"mlm_head.{name}", head)
        add("matching", self.matching)
        return out

    def path_tensor_ids(self, path: str) -> set:
        """Identities of the transformer-stack tensors a forward path runs through."""
        stack = self.text_stack if path == "text" else self.cross_stack
        return {id(t) for layer in stack for t in layer.values()}

    def n_elements(self) -> int:
        return sum(int(t.size) for t in self.tensors().values())


def _layer(rng, d, f, std):
    return {
        "wq": rng.normal(0, std, (d, d)), "bq": np.zeros(d),
        "wk": rng.normal(0, std, (d, d)), "bk": np.zeros(d),
        "wv": rng.normal(0, std, (d, d)), "bv": np.zeros(d),
        "wo": rng.normal(0, std, (d, d)), "bo": np.zeros(d),
        "ln1_g": np.ones(d), "ln1_b": np.zeros(d),
        "w1": rng.normal(0, std, (d, f)), "b1": np.zeros(f),
        "w2": rng.normal(0, std, (f, d)), "b2": np.zeros(d),
        "ln2_g": np.ones(d), "ln2_b": np.zeros(d),
    }


def _mlm_head(rng, d, v, std):
    return {
        "dense_w": rng.normal(0, std, (d, d)), "dense_b": np.zeros(d),
        "ln_g": np.ones(d), "ln_b": np.zeros(d),
        "decoder_w": rng.normal(0, std, (d, v)), "decoder_b": np.zeros(v),
    }


def init_params(config: EncoderConfig, seed: int = 0, std: float = 0.02) -> EncoderParams:
    cfg = config.validate()
    rng = np.random.default_rng(seed)
    d, f = cfg.hidden, cfg.ffn
    embeddings = {
        "token": rng.normal(0, std, (cfg.vocab_size, d)),
        "position": rng.normal(0, std, (cfg.max_positions, d)),
        "segment": rng.normal(0, std, (cfg.type_vocab, d)),
        "ln_g": np.ones(d),
        "ln_b": np.zeros(d),
    }
    text_stack = [_layer(rng, d, f, std) for _ in range(cfg.layers)]
    text_head = _mlm_head(rng, d, cfg.vocab_size, std)
    if cfg.has_cross_stack:
        cross_stack = [_layer(rng, d, f, std) for _ in range(cfg.cross_layers)]
        cross_head = _mlm_head(rng, d, cfg.vocab_size, std)
    else:
        cross_stack = text_stack
        cross_head = text_head
    matching = {
        "w1": rng.normal(0, std, (d, d)), "b1": np.zeros(d),
        "w2": rng.normal(0, std, (d, 1)), "b2": np.zeros(1),
    }
    return EncoderParams(cfg, embeddings, text_stack, cross_stack, {"text": text_head, "cross": cross_head}, matching, seed)


# --- forward ---------------------------------------------------------------


def _layer_norm(x, g, b, eps=1e-12):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def _block(x, layer, heads, key_mask):
    n, d = x.shape
    hd = d // heads
    q = (x @ layer["wq"] + layer["bq"]).reshape(n, heads, hd).transpose(1, 0, 2)
    k = (x @ layer["wk"] + layer["bk"]).reshape(n, heads, hd).transpose(1, 0, 2)
    v = (x @ layer["wv"] + layer["bv"]).reshape(n, heads, hd).transpose(1, 0, 2)
    att = q @ k.transpose(0, 2, 1) / np.sqrt(hd)
    att = np.where(key_mask[None, None, :], att, -1e9)
    att = np.exp(att - att.max(axis=-1, keepdims=True))
    att /= att.sum(axis=-1, keepdims=True)
    ctx = (att @ v).transpose(1, 0, 2).reshape(n, d)
    x = _layer_norm(x + ctx @ layer["wo"] + layer["bo"], layer["ln1_g"], layer["ln1_b"])
    h = _gelu(x @ layer["w1"] + layer["b1"]) @ layer["w2"] + layer["b2"]
    return _layer_norm(x + h, layer["ln2_g"], layer["ln2_b"])


def _run(stack, x, heads, key_mask):
    for layer in stack:
        x = _block(x, layer, heads, key_mask)
    return x


def _ids_and_mask(params, token_ids):
    cfg = params.config
    if isinstance(token_ids, TokenSeq):
        ids = np.asarray(token_ids.ids, dtype=np.int64)
        mask = np.arange(len(ids)) < token_ids.n_real
    else:
        ids = np.asarray(token_ids, dtype=np.int64)
        mask = np.ones(len(ids), dtype=bool)
    if ids.shape != (cfg.n_t,):
        raise ValueError(f"expected {cfg.n_t} token ids, got {ids.shape[0] if ids.ndim else 'scalar'}")
    if np.any(ids < 0) or np.any(ids >= cfg.vocab_size):
        raise ValueError("token id outside the vocabulary")
    return ids, mask


def _embed_text(params, ids):
    e = params.embeddings
    x = e["token"][ids] + e["position"][: len(ids)] + e["segment"][0]
    return _layer_norm(x, e["ln_g"], e["ln_b"])


def _embed_visual(params, tokens):
    # visual tokens carry no position embedding and use segment 1
    e = params.embeddings
    return _layer_norm(tokens + e["segment"][min(1, params.config.type_vocab - 1)], e["ln_g"], e["ln_b"])


@dataclass(frozen=True)
class VisualFeatures:
    tokens: np.ndarray
    zero_position_flag: bool = field(default=True, init=False)

    def __post_init__(self):
        t = np.asarray(self.tokens, dtype=np.float64)
        if t.ndim == 1:
            t = t[None, :]
        if t.ndim != 2 or t.shape[0] < 1:
            raise ValueError(f"visual tokens must be N_V x d with N_V >= 1, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("visual tokens must be finite")
        object.__setattr__(self, "tokens", t)


def forward_text(params: EncoderParams, token_ids) -> np.ndarray:
    """Text features, N_t x d."""
    ids, mask = _ids_and_mask(params, token_ids)
    x = _run(params.text_stack, _embed_text(params, ids), params.config.heads, mask)
    return x.astype(np.float32)


def forward_crossmodal(params: EncoderParams, token_ids, visual: VisualFeatures) -> np.ndarray:
    """Cross-modal features, (N_t + N_V) x d; row 0 is the pooled [CLS] state.

    SNP feeds ``[embedded text, visual]`` through the shared stack. P3E first
    encodes the text with the text stack and then runs the separate cross stack.
    """
    if not isinstance(visual, VisualFeatures):
        visual = VisualFeatures(visual)
    cfg = params.config
    if visual.tokens.shape[1] != cfg.hidden:
        raise ValueError(f"visual width {visual.tokens.shape[1]} != hidden {cfg.hidden}")
    ids, mask = _ids_and_mask(params, token_ids)
    text = _embed_text(params, ids)
    if cfg.has_cross_stack:
        text = _run(params.text_stack, text, cfg.heads, mask)
    x = np.concatenate([text, _embed_visual(params, visual.tokens)])
    full_mask = np.concatenate([mask, np.ones(visual.tokens.shape[0], dtype=bool)])
    return _run(params.cross_stack, x, cfg.heads, full_mask).astype(np.float32)


def output_hash(features, decimals: int = 4) -> str:
    """Digest of rounded float32 output, stable against last-bit BLAS differences."""
    a = np.round(np.asarray(features, dtype=np.float64), decimals).astype("<f4")
    return hashlib.sha256(a.tobytes()).hexdigest()


# --- parameter accounting --------------------------------------------------


@dataclass(frozen=True)
class ParamReport:
    variant: str
    items: dict
    total: int
    assumptions: tuple

    def to_json(self) -> dict:
        return {"variant": self.variant, "items": dict(self.items), "total": self.total, "assumptions": list(self.assumptions)}


def layer_params(d: int, f: int) -> int:
    return 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d


def mlm_head_params(d: int, v: int) -> int:
    return (d * d + d) + 2 * d + (d * v + v)


def count_params(config: EncoderConfig, visual_constant: int = R50_PARAMS) -> ParamReport:
    """Closed-form parameter count under the documented model.

    The model counts: a visual backbone as a constant; one embedder; the text
    stack; for P3E a separate cross stack that owns its own MLM head; one
    untied MLM head for the text path; and the matching MLP (d -> d -> 1).
    Poolers and visual projections are excluded.
    """
    cfg = config.validate(allow_empty_cross=True)
    if visual_constant < 0:
        raise ValueError("visual_constant must be >= 0")
    d, f, v = cfg.hidden, cfg.ffn, cfg.vocab_size
    per_layer = layer_params(d, f)
    head = mlm_head_params(d, v)
    cross = cfg.has_cross_stack
    items = {
        "visual_encoder": int(visual_constant),
        "embedder": v * d + cfg.max_positions * d + cfg.type_vocab * d + 2 * d,
        "text_stack": cfg.layers * per_layer,
        "cross_stack": cfg.cross_layers * per_layer if cross else 0,
        "mlm_heads": head * (2 if cross else 1),
        "matching_mlp": d * d + d + d + 1,
    }
    assumptions = (
        f"visual encoder counted as a constant {visual_constant} (R50-class incl. classifier by default)",
        "token/position/segment embeddings + LayerNorm counted once; shared by both paths",
        f"text stack: {cfg.layers} post-LN transformer layers of width {d}, FFN {f}",
        "SNP: cross-modal path reuses the text stack and its MLM head"
        if not cross
        else f"P3E: separate {cfg.cross_layers}-layer cross stack with its own untied MLM head",
        "MLM head: dense d->d + LayerNorm + untied decoder d->V with bias",
        "matching MLP: d->d GELU d->1",
        "no pooler, no visual projection",
    )
    return ParamReport(cfg.variant, items, int(sum(items.values())), assumptions)


def reduction(snp: ParamReport, p3e: ParamReport) -> float:
    """Relative parameter saving of SNP against P3E."""
    return (p3e.total - snp.total) / p3e.total


def load_config(path) -> EncoderConfig:
    with open(path, encoding="utf-8") as fh:
        return EncoderConfig.from_json(json.load(fh))
