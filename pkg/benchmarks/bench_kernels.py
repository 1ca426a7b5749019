"""Time the compiled and pure-Python kernels on the same synthetic workload.

    python3 benchmarks/bench_kernels.py [--captions N] [--repeat R] [--json]
"""
import argparse
import json
import timeit

import numpy as np

from snps3 import _pykernels
from snps3.miner import SIGNIFICANT_TAGS, count_significant, threshold_topk
from snps3.synth import CONCEPT_WORDS, gen_corpus, pos_records, synth_vocab
from snps3.tokenizer import MAX_INPUT_CHARS_PER_WORD, basic_split, wordpiece_tokenize

try:
    from snps3 import _speedups
except ImportError:
    _speedups = None


def workload(n):
    vocab = synth_vocab()
    corpus = gen_corpus(0, n, vocab, clauses=(2, 4))
    # glue some words together so the greedy matcher has subwords to split
    words = [basic_split(r.caption.replace(" and ", " skateboarding ")) for r in corpus]
    records = [([w.lower() for w in r.words], r.tags) for r in pos_records(corpus)]
    sig = threshold_topk(count_significant(pos_records(corpus), vocab), len(CONCEPT_WORDS))
    seqs = [wordpiece_tokenize(r.caption, vocab, 64) for r in corpus]
    scans = [(list(s.ids), np.fromiter(s.is_special, dtype=np.uint8), np.ascontiguousarray(sig.mask, dtype=np.uint8))
             for s in seqs]
    return vocab, words, records, scans


def cases(mod, vocab, words, records, scans):
    def tokenize():
        for ws in words:
            mod.wordpiece_words(ws, vocab.index, vocab.unk_id, MAX_INPUT_CHARS_PER_WORD)

    def count():
        mod.count_tagged(iter(records), vocab.index, SIGNIFICANT_TAGS, np.zeros(len(vocab), dtype=np.int64))

    def scan():
        for ids, skip, mask in scans:
            mod.scan_chosen(ids, skip, mask)

    return {"wordpiece_words": tokenize, "count_tagged": count, "scan_chosen": scan}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--captions", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print machine-readable results")
    args = ap.parse_args(argv)

    data = workload(args.captions)
    backends = {"python": _pykernels}
    if _speedups is not None:
        backends["cython"] = _speedups
    results = {}
    for name, mod in backends.items():
        for kernel, fn in cases(mod, *data).items():
            results.setdefault(kernel, {})[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))

    if args.json:
        print(json.dumps({"captions": args.captions, "seconds": results}, indent=2))
        return
    print(f"{args.captions} captions, best of {args.repeat}")
    print(f"{'kernel':<18}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for kernel, t in results.items():
        cy = t.get("cython")
        speed = f"{t['python'] / cy:8.1f}x" if cy else "     n/a"
        print(f"{kernel:<18}{t['python']:>10.4f}{(cy or float('nan')):>10.4f}{speed}")
    if _speedups is None:
        print("compiled core not built; only the fallback was timed")


if __name__ == "__main__":
    main()
