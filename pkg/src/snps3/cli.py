"""Command-line entry point: ``snps3 <subcommand> ...``.

Artifacts are JSON / JSONL (one header line carrying input hashes, then one
record per line) except bulk features, which use the binary feature format::

    {"cols": d, "dtype": "f32", "order": "row-major", "rows": n}\\n<n*d little-endian float32>

Exit codes: 0 ok, 2 missing file, 3 format/configuration error, 4 vocabulary hash mismatch.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from snps3 import __version__, kernels
from snps3.encoder import R50_PARAMS, EncoderConfig, count_params, load_config, reduction
from snps3.errors import ConsistencyError, FormatError, NoSignificantTokens, Snps3Error
from snps3.featio import read_features, write_features
from snps3.losses import gvtm_free, gvtm_scored, lvwm, masked_ce
from snps3.miner import (
    DEFAULT_K_SS,
    ChosenList,
    PosRecord,
    SignificantVocab,
    build_chosen_list,
    count_significant,
    dedup_records,
    lexicon_pos_tag,
    read_pos_jsonl,
    threshold_topk,
)
from snps3.planner import DEFAULT_MASK_RATE, DEFAULT_N_L, apply_plan, plan_mlm, plan_mssm, record_seed, sample_lvwm
from snps3.tokenizer import DEFAULT_MAX_LEN, basic_split, load_vocab, wordpiece_tokenize

SEED_ENV = "SNPS3_SEED"


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _header(command, **inputs):
    return {"tool": "snps3", "version": __version__, "command": command, **inputs}


def _dump_json(obj, path):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_jsonl(path, header, records):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_header": header}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path):
    """Records of a JSONL artifact, skipping header lines."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if isinstance(obj, dict) and "_header" in obj:
                continue
            out.append(obj)
    return out


def _read_corpus(path):
    recs = read_jsonl(path)
    try:
        return [(str(r["id"]), str(r["caption"])) for r in recs]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: corpus records need 'id' and 'caption': {exc}") from exc


def _load_sig(path, vocab):
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    sig = SignificantVocab.from_json(obj, len(vocab))
    if sig.vocab_hash != vocab.content_hash:
        raise ConsistencyError(f"{path} was mined against a different vocabulary")
    return sig


def resolve_seed(value):
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else 0


# --- subcommands -------------------------------------------------------------


def cmd_mine(args):
    vocab = load_vocab(args.vocab)
    if args.pos:
        records = read_pos_jsonl(args.pos)
        source = {"pos_hash": file_hash(args.pos)}
    else:
        if not args.lexicon:
            raise FormatError("--corpus requires --lexicon (word -> POS tag JSON)")
        with open(args.lexicon, encoding="utf-8") as fh:
            lexicon = json.load(fh)
        records = []
        for rid, caption in _read_corpus(args.corpus):
            words = basic_split(caption)
            records.append(PosRecord(rid, tuple(words), tuple(lexicon_pos_tag(words, lexicon))))
        source = {"corpus_hash": file_hash(args.corpus), "lexicon_hash": file_hash(args.lexicon)}
    if args.dedup:
        records = dedup_records(records)
    freq = count_significant(records, vocab, workers=args.workers)
    sig = threshold_topk(freq, args.k)
    out = sig.to_json()
    out["header"] = _header("mine", vocab_file_hash=file_hash(args.vocab), dedup=bool(args.dedup), **source)
    _dump_json(out, args.out)
    if args.freq_out:
        _dump_json({"vocab_hash": freq.vocab_hash, "counts": freq.counts.tolist()}, args.freq_out)
    return 0


def _tokenized(args, vocab):
    return [(rid, wordpiece_tokenize(cap, vocab, args.max_len)) for rid, cap in _read_corpus(args.corpus)]


def cmd_chosen(args):
    vocab = load_vocab(args.vocab)
    sig = _load_sig(args.sig, vocab)
    recs = []
    for rid, seq in _tokenized(args, vocab):
        recs.append({"id": rid, "token_ids": list(seq.ids), "positions": list(build_chosen_list(seq, sig).positions)})
    header = _header("chosen", vocab_hash=vocab.content_hash, sig_hash=file_hash(args.sig), corpus_hash=file_hash(args.corpus))
    _write_jsonl(args.out, header, recs)
    return 0


def cmd_plan(args):
    vocab = load_vocab(args.vocab)
    seed = resolve_seed(args.seed)
    sig = None
    if args.mode == "mssm":
        if not args.sig:
            raise FormatError("--mode mssm requires --sig")
        sig = _load_sig(args.sig, vocab)
    recs = []
    for rid, seq in _tokenized(args, vocab):
        rs = record_seed(seed, rid)
        if sig is None:
            plan = plan_mlm(seq, args.rate, rs)
        else:
            plan = plan_mssm(seq, build_chosen_list(seq, sig), args.rate, rs)
        recs.append(
            {
                "id": rid,
                "token_ids": list(seq.ids),
                "input_ids": apply_plan(seq, plan, vocab),
                "actions": [a.value for a in plan.actions],
                "labels": list(plan.labels),
                "seed_trace": plan.seed_trace,
            }
        )
    header = _header(
        "plan", mode=args.mode, rate=args.rate, seed=seed, vocab_hash=vocab.content_hash,
        corpus_hash=file_hash(args.corpus), sig_hash=file_hash(args.sig) if args.sig else None,
    )
    _write_jsonl(args.out, header, recs)
    return 0


def cmd_lvwm(args):
    seed = resolve_seed(args.seed)
    recs = []
    for rec in read_jsonl(args.chosen):
        try:
            rid, positions = str(rec["id"]), rec["positions"]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{args.chosen}: chosen records need 'id' and 'positions'") from exc
        rs = record_seed(seed, rid)
        try:
            sample = sample_lvwm(ChosenList(tuple(positions)), args.n_l, rs)
            recs.append({"id": rid, "indices": list(sample.indices), "seed_trace": rs})
        except NoSignificantTokens:
            recs.append({"id": rid, "indices": None, "fallback": "global", "seed_trace": rs})
    _write_jsonl(args.out, _header("lvwm", n_l=args.n_l, seed=seed, chosen_hash=file_hash(args.chosen)), recs)
    return 0


def cmd_loss(args):
    inputs = {}
    if args.kind == "masked-ce":
        logits = read_features(args.logits)
        with open(args.labels, encoding="utf-8") as fh:
            labels = json.load(fh)
        res = masked_ce(logits, labels)
        inputs = {"logits": args.logits, "labels": args.labels}
    elif args.kind == "gvtm-free":
        res = gvtm_free(read_features(args.vis), read_features(args.txt), args.scale)
        inputs = {"vis": args.vis, "txt_cls": args.txt}
    elif args.kind == "gvtm-scored":
        res = gvtm_scored(read_features(args.scores))
        inputs = {"scores": args.scores}
    else:
        res = lvwm(read_features(args.vis), read_features(args.tokens), args.scale)
        inputs = {"vis": args.vis, "sig_tokens": args.tokens}
    for name, path in inputs.items():
        if path is None:
            raise FormatError(f"missing input file for {name}")
    out = {
        "kind": args.kind,
        "value": res.value,
        "grad_norms": {k: float(np.linalg.norm(g)) for k, g in sorted(res.grads.items())},
        "header": _header("loss", scale=args.scale, **{f"{k}_hash": file_hash(p) for k, p in inputs.items()}),
    }
    if args.grad_dir:
        os.makedirs(args.grad_dir, exist_ok=True)
        for name, g in res.grads.items():
            write_features(os.path.join(args.grad_dir, f"grad_{name}.f32"), g)
    _dump_json(out, args.out)
    return 0


def cmd_count_params(args):
    base = load_config(args.config) if args.config else EncoderConfig()
    fields = base.to_json()
    snp = count_params(EncoderConfig(**{**fields, "variant": "SNP"}), args.visual_constant)
    p3e = count_params(EncoderConfig(**{**fields, "variant": "P3E"}), args.visual_constant)
    comparison = {"snp_total": snp.total, "p3e_total": p3e.total, "reduction": reduction(snp, p3e)}
    header = _header("count-params", config_hash=file_hash(args.config) if args.config else None)
    if args.variant == "both":
        out = {"snp": snp.to_json(), "p3e": p3e.to_json(), "comparison": comparison, "header": header}
    else:
        out = (snp if args.variant == "snp" else p3e).to_json()
        out["comparison"] = comparison
        out["header"] = header
    _dump_json(out, args.out)
    return 0


def cmd_demo(args):
    from snps3 import synth

    seed = resolve_seed(args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    vocab = synth.synth_vocab()
    train = synth.gen_corpus(seed, args.train_size, vocab, prefix="train")
    test = synth.gen_corpus(seed + 1, args.test_size, vocab, prefix="test")
    with open(os.path.join(args.out_dir, "vocab.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(vocab.tokens) + "\n")
    synth.write_corpus_jsonl(train, os.path.join(args.out_dir, "corpus.jsonl"))
    with open(os.path.join(args.out_dir, "pos.jsonl"), "w", encoding="utf-8") as fh:
        for rec in synth.pos_records(train):
            fh.write(json.dumps({"id": rec.id, "words": list(rec.words), "tags": list(rec.tags)}) + "\n")
    sig = threshold_topk(count_significant(synth.pos_records(train), vocab), len(synth.CONCEPT_WORDS))
    _dump_json(sig.to_json(), os.path.join(args.out_dir, "sigvocab.json"))
    write_features(os.path.join(args.out_dir, "train_visual.f32"), np.stack([r.visual for r in train]))
    summary = {"seed": seed, "runs": {}}
    for used in (("L3",), ("L3", "L5")):
        res = synth.train_toy(train, vocab, used, steps=args.steps, lr=args.lr, seed=seed, sig=sig)
        metrics = synth.evaluate_toy(res.model, test, vocab).to_json()
        tag = "+".join(used)
        _dump_json(metrics, os.path.join(args.out_dir, f"metrics_{tag.replace('+', '_')}.json"))
        vis = res.model.encode_visual(np.stack([r.visual for r in test]))
        txt = res.model.encode_text(synth.text_bags(test, vocab))
        write_features(os.path.join(args.out_dir, f"test_vis_{tag.replace('+', '_')}.f32"), vis)
        write_features(os.path.join(args.out_dir, f"test_txt_{tag.replace('+', '_')}.f32"), txt)
        summary["runs"][tag] = {"initial_loss": res.curve[0], "final_loss": res.curve[-1], **metrics}
    _dump_json(summary, os.path.join(args.out_dir, "summary.json"))
    _dump_json(summary, None)
    return 0


# --- parser ------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="snps3",
        description="Significant-semantic mining, masking plans, losses and parameter counts.",
        epilog=(
            "Formats: vocab.txt one token per line (line index = id); pos.jsonl {id, words, tags}; "
            "corpus.jsonl {id, caption}; sigvocab.json {k_ss, threshold, vocab_hash, ids}; "
            "plan.jsonl {id, token_ids, actions (K/M/R/S), labels, seed_trace}; features: JSON header "
            "line {rows, cols, dtype: f32, order: row-major[, n_l]} then raw little-endian float32."
        ),
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mine", help="mine the significant vocabulary into sigvocab.json")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--pos", help="pre-tagged pos.jsonl")
    src.add_argument("--corpus", help="untagged corpus.jsonl (needs --lexicon)")
    m.add_argument("--lexicon", help="JSON map word -> POS tag for --corpus")
    m.add_argument("--vocab", required=True)
    m.add_argument("--k", type=int, default=DEFAULT_K_SS, help="number of significant tokens (default 2000)")
    m.add_argument("--out", required=True)
    m.add_argument("--freq-out", help="also write the raw frequency table")
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--dedup", action="store_true", help="drop repeated captions before counting")
    m.set_defaults(func=cmd_mine)

    c = sub.add_parser("chosen", help="per-caption significant positions (chosen.jsonl)")
    c.add_argument("--corpus", required=True)
    c.add_argument("--vocab", required=True)
    c.add_argument("--sig", required=True)
    c.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_chosen)

    pl = sub.add_parser("plan", help="MLM / MSSM masking plans (plan.jsonl)")
    pl.add_argument("--mode", choices=("mlm", "mssm"), required=True)
    pl.add_argument("--corpus", required=True)
    pl.add_argument("--vocab", required=True)
    pl.add_argument("--sig", help="sigvocab.json, required for mssm")
    pl.add_argument("--rate", type=float, default=DEFAULT_MASK_RATE)
    pl.add_argument("--seed", type=int)
    pl.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plan)

    lv = sub.add_parser("lvwm", help="sample N_L significant positions per caption")
    lv.add_argument("--chosen", required=True)
    lv.add_argument("--n-l", type=int, default=DEFAULT_N_L)
    lv.add_argument("--seed", type=int)
    lv.add_argument("--out", required=True)
    lv.set_defaults(func=cmd_lvwm)

    lo = sub.add_parser("loss", help="evaluate one loss kernel on feature files")
    lo.add_argument("--kind", choices=("masked-ce", "gvtm-free", "gvtm-scored", "lvwm"), required=True)
    lo.add_argument("--logits")
    lo.add_argument("--labels", help="JSON list of label ids")
    lo.add_argument("--vis")
    lo.add_argument("--txt")
    lo.add_argument("--scores")
    lo.add_argument("--tokens", help="token-block feature file (header has n_l)")
    lo.add_argument("--scale", type=float, default=1.0)
    lo.add_argument("--grad-dir", help="write gradients as feature files here")
    lo.add_argument("--out", default="-")
    lo.set_defaults(func=cmd_loss)

    cp = sub.add_parser("count-params", help="itemized parameter report for SNP / P3E")
    cp.add_argument("--variant", choices=("snp", "p3e", "both"), default="both")
    cp.add_argument("--config", help="EncoderConfig JSON")
    cp.add_argument("--visual-constant", type=int, default=R50_PARAMS)
    cp.add_argument("--out", default="-")
    cp.set_defaults(func=cmd_count_params)

    d = sub.add_parser("demo", help="synthetic corpus, mining and toy alignment training")
    d.add_argument("--out-dir", required=True)
    d.add_argument("--seed", type=int)
    d.add_argument("--steps", type=int, default=2000)
    d.add_argument("--lr", type=float, default=1e-2)
    d.add_argument("--train-size", type=int, default=256)
    d.add_argument("--test-size", type=int, default=64)
    d.set_defaults(func=cmd_demo)
    return p


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail("missing_file", str(exc.filename or exc), 2)
    except Snps3Error as exc:
        return _fail(exc.kind, str(exc), exc.exit_code)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail("format", str(exc), 3)


if __name__ == "__main__":
    sys.exit(main())
