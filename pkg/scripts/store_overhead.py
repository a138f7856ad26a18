#!/usr/bin/env python3
"""Per-backup metadata access (update / index / loading) for MLE and the combined scheme.

Cache sizes are given as fractions of the plaintext corpus' fingerprint metadata.
"""
import argparse
import csv
import sys

from dedupfa.config import derive_seed
from dedupfa.defenses import SegmentParams, apply_scheme
from dedupfa.store import StoreParams, replay_corpus
from dedupfa.trace import SyntheticCorpusParams, generate_synthetic


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--caches", type=float, nargs="+", default=[0.25, 2.0])
    ap.add_argument("--warm", action="store_true", help="keep the cache across backups")
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    corpus = generate_synthetic(SyntheticCorpusParams(rng_seed=args.seed))
    unique = len({c.fp for t in corpus for c in t.chunks})
    sink = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["scheme", "cache_fraction", "backup", "update_bytes", "index_bytes",
                "loading_bytes", "total_bytes"])
    for scheme in ("mle", "minhash+scramble"):
        traces = [apply_scheme(scheme, t, SegmentParams(),
                               derive_seed(args.seed, f"scramble:{t.label}")).cipher_trace
                  for t in corpus]
        for frac in args.caches:
            params = StoreParams(cache_capacity=int(frac * unique * 32),
                                 cold_cache_per_backup=not args.warm)
            s = replay_corpus(traces, params)
            for r in s.history + [s.total()]:
                st = r.stats
                w.writerow([scheme, frac, r.label, st.update_bytes, st.index_bytes,
                            st.loading_bytes, st.total])
            sink.flush()


if __name__ == "__main__":
    main()
