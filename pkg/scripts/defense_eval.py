#!/usr/bin/env python3
"""Inference rates and storage saving under MLE, MinHash, and MinHash + scrambling."""
import argparse
import csv
import sys

from dedupfa.attacks import (KNOWN_PLAINTEXT, AttackParams, advanced_locality_attack,
                             locality_attack, sample_leakage)
from dedupfa.config import derive_seed
from dedupfa.defenses import SCHEMES, SegmentParams, apply_scheme
from dedupfa.metrics import corpus_storage_saving, inference_rate
from dedupfa.trace import SyntheticCorpusParams, generate_synthetic


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--leak", type=float, nargs="+", default=[0.0005, 0.001, 0.002])
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    corpus = generate_synthetic(SyntheticCorpusParams(rng_seed=args.seed))
    M = corpus[-2]
    sink = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["scheme", "storage_saving", "leak", "locality_kp", "advanced_kp"])
    seg = SegmentParams()
    for scheme in SCHEMES:
        outs = [apply_scheme(scheme, t, seg, derive_seed(args.seed, f"scramble:{t.label}"))
                for t in corpus]
        saving = corpus_storage_saving([o.cipher_trace for o in outs])
        C, gt = outs[-1].cipher_trace, outs[-1].ground_truth
        for rate in args.leak:
            leak = sample_leakage(gt, C, rate, 1)
            kp = AttackParams(mode=KNOWN_PLAINTEXT)
            w.writerow([scheme, f"{saving:.4f}", rate,
                        f"{inference_rate(locality_attack(C, M, kp, leak), gt, C):.6f}",
                        f"{inference_rate(advanced_locality_attack(C, M, kp, leak), gt, C):.6f}"])
            sink.flush()


if __name__ == "__main__":
    main()
