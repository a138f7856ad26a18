"""Command line: gen, chunk, defend, attack, store, compare, run-all."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import attacks, defenses, metrics, store, trace
from .config import ExperimentConfig, derive_seed

log = logging.getLogger("dedupfa")


# -- helpers ----------------------------------------------------------------

def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    cfg.subcommand = args.command
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.output = str(args.out)
    return cfg


def _replace(obj, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return dataclasses.replace(obj, **kw) if kw else obj


def _segment_params(args, cfg: ExperimentConfig) -> defenses.SegmentParams:
    return _replace(cfg.segment, min=args.seg_min, avg=args.seg_avg, max=args.seg_max,
                    divisor=args.seg_divisor)


def _unique_count(traces) -> int:
    return len({c.fp for t in traces for c in t.chunks})


def _resolve_trace(ref: str, manifest: str | None) -> Path:
    """A path, or an index / label looked up in a manifest."""
    if manifest:
        paths = trace.read_manifest(manifest)
        if ref.isdigit():
            idx = int(ref)
            if not 0 <= idx < len(paths):
                raise ValueError(f"backup index {idx} outside manifest of {len(paths)}")
            return paths[idx]
        for p in paths:
            if p.stem == ref or p.name == ref:
                return p
    p = Path(ref)
    if not p.exists():
        raise FileNotFoundError(f"no trace {ref!r}")
    return p


# -- subcommands ------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _load_config(args)
    params = _replace(cfg.gen, snapshots=args.snapshots, initial_total_size=args.initial_size,
                      initial_file_count=args.files, mean_chunk_size=args.mean_chunk,
                      file_pick_fraction=args.pick, content_modify_fraction=args.modify,
                      added_bytes_per_snapshot=args.added_bytes)
    params = dataclasses.replace(params, rng_seed=derive_seed(cfg.seed, "gen"))
    cfg.gen = params
    out = Path(cfg.output)
    corpus = trace.generate_synthetic(params)
    manifest = trace.save_corpus(corpus, out)
    cfg.save(out / "config.txt")
    ratio = metrics.corpus_dedup_ratio(corpus)
    print(f"wrote {len(corpus)} snapshots to {manifest} (dedup ratio {ratio:.2f}x)")
    return 0


def cmd_chunk(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for src in args.inputs:
        src = Path(src)
        t = trace.chunk_file(src.read_bytes(), args.min, args.avg, args.max, args.width,
                             label=src.name)
        p = out / f"{src.name}.trace"
        trace.write_trace(t, p)
        paths.append(p)
    trace.write_manifest(out / "manifest.txt", paths)
    print(f"chunked {len(paths)} file(s) into {out}")
    return 0


def defend_corpus(corpus, scheme: str, seg: defenses.SegmentParams, root_seed: int, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    paths = []
    for t in corpus:
        enc = defenses.apply_scheme(scheme, t, seg, derive_seed(root_seed, f"scramble:{t.label}"))
        paths.append(enc.write(out, t.label)["trace"])
        outputs.append(enc)
    trace.write_manifest(out / "manifest.txt", paths)
    return outputs


def cmd_defend(args) -> int:
    cfg = _load_config(args)
    seg = _segment_params(args, cfg)
    cfg.segment = seg
    corpus = trace.load_corpus(args.corpus)
    out = Path(cfg.output)
    outputs = defend_corpus(corpus, args.scheme, seg, cfg.seed, out)
    cfg.inputs = [str(args.corpus)]
    cfg.save(out / "config.txt")
    ratio = metrics.corpus_dedup_ratio([o.cipher_trace for o in outputs])
    print(f"{args.scheme}: wrote {len(outputs)} backups to {out} (dedup ratio {ratio:.2f}x)")
    return 0


def run_attack_cell(kind: str, C: trace.BackupTrace, M: trace.BackupTrace,
                    gt: dict, params: attacks.AttackParams, leak_rate: float,
                    seed: int, defense: str = ""):
    leak = None
    if params.mode == attacks.KNOWN_PLAINTEXT:
        leak = attacks.sample_leakage(gt, C, leak_rate, seed)
    T = attacks.run_attack(kind, C, M, params, leak)
    rate = metrics.inference_rate(T, gt, C)
    result = metrics.EvalResult(kind, defense, M.label, C.label, params.mode,
                                leak.leakage_rate if leak else 0.0, rate, len(T))
    return T, leak, result


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    mode = attacks.KNOWN_PLAINTEXT if args.leak else args.mode
    params = _replace(cfg.attack, u=args.u, v=args.v, w=args.w, mode=mode)
    cfg.attack = params
    aux_path = _resolve_trace(args.aux, args.corpus)
    target_path = _resolve_trace(args.target, args.defended)
    gt_path = Path(args.ground_truth) if args.ground_truth else target_path.with_suffix(".gt")
    if not gt_path.exists():
        raise FileNotFoundError(f"ground truth {gt_path} missing; inference rate needs it")
    M = trace.parse_trace(aux_path, label=aux_path.stem)
    C = trace.parse_trace(target_path, label=target_path.stem)
    gt = defenses.read_ground_truth(gt_path)
    seed = derive_seed(cfg.seed, f"leak:{C.label}")
    T, leak, result = run_attack_cell(args.kind, C, M, gt, params, args.leak or 0.0, seed,
                                      defense=args.defense)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"attack-{args.kind}-{M.label}-{C.label}"
    with open(out / f"{stem}.csv", "w", newline="") as f:
        T.write_csv(f)
    summary = {
        "kind": args.kind, "params": dataclasses.asdict(params), "aux": str(aux_path),
        "target": str(target_path), "inferred_pairs": len(T),
        "leaked_pairs": len(leak) if leak else 0,
        "leakage_rate": result.leakage_rate, "inference_rate": result.inference_rate,
    }
    (out / f"{stem}.summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    results_csv = out / "results.csv"
    previous = metrics.read_results(results_csv) if results_csv.exists() else []
    metrics.compare_runs(previous + [result], results_csv)
    cfg.save(out / "config.txt")
    print(f"{args.kind} ({params.mode}): |T|={len(T)} "
          f"leaked={summary['leaked_pairs']} inference rate={result.inference_rate:.6f}")
    return 0


def store_params_for(base: store.StoreParams, cache_size: int | None,
                     cache_fraction: float | None, unique_fps: int) -> store.StoreParams:
    if cache_size is None and cache_fraction is not None:
        cache_size = max(base.fp_metadata_size,
                         int(cache_fraction * unique_fps * base.fp_metadata_size))
    return _replace(base, cache_capacity=cache_size)


def cmd_store(args) -> int:
    cfg = _load_config(args)
    corpus = trace.load_corpus(args.corpus)
    unique = _unique_count(corpus)
    params = store_params_for(_replace(cfg.store, container_size=args.container_size),
                              args.cache_size, args.cache_fraction, unique)
    cfg.store = params
    out = Path(cfg.output)
    s = store.replay_corpus(corpus, params, args.expected or unique, root=out,
                            event_log=args.events)
    s.index.compact()
    cfg.save(out / "config.txt")
    tot = s.total()
    print(f"stored {len(corpus)} backups: saving {tot.storage_saving:.4f}, metadata "
          f"update={tot.stats.update_bytes} index={tot.stats.index_bytes} "
          f"loading={tot.stats.loading_bytes}")
    return 0


def cmd_compare(args) -> int:
    rows = []
    for path in args.inputs:
        rows.extend(metrics.read_results(path))
    metrics.compare_runs(rows, args.out if args.out else sys.stdout)
    return 0


def cmd_run_all(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    gen = _replace(cfg.gen, snapshots=args.snapshots, initial_total_size=args.initial_size,
                   initial_file_count=args.files)
    gen = dataclasses.replace(gen, rng_seed=derive_seed(cfg.seed, "gen"))
    cfg.gen = gen
    cfg.save(out / "config.txt")
    corpus = trace.generate_synthetic(gen)
    trace.save_corpus(corpus, out / "plain")
    log.info("generated %d snapshots", len(corpus))
    if len(corpus) < 2:
        raise ValueError("run-all needs at least two snapshots")

    aux, target = len(corpus) - 2, len(corpus) - 1
    results: list[metrics.EvalResult] = []
    store_rows = []
    unique_plain = _unique_count(corpus)
    for scheme in defenses.SCHEMES:
        encs = defend_corpus(corpus, scheme, cfg.segment, cfg.seed, out / scheme)
        cipher = [e.cipher_trace for e in encs]
        saving = metrics.corpus_storage_saving(cipher)
        C, gt, M = cipher[target], encs[target].ground_truth, corpus[aux]
        for kind in ("basic", "locality", "advanced"):
            modes = [attacks.CIPHERTEXT_ONLY]
            if kind != "basic":
                modes.append(attacks.KNOWN_PLAINTEXT)
            for mode in modes:
                if mode == attacks.KNOWN_PLAINTEXT and int(args.leak * len(C)) == 0:
                    log.warning("leak rate %s yields no pairs on %s; skipping %s",
                                args.leak, C.label, mode)
                    continue
                params = dataclasses.replace(cfg.attack, mode=mode)
                _, _, r = run_attack_cell(kind, C, M, gt, params, args.leak,
                                          derive_seed(cfg.seed, f"leak:{C.label}"), scheme)
                r.storage_saving = saving
                r.dedup_ratio = 1.0 / (1.0 - saving)
                results.append(r)
                log.info("%s %s %s: %.4f", scheme, kind, mode, r.inference_rate)
        if scheme in ("mle", "minhash+scramble"):
            unique = _unique_count(cipher)
            for name, frac in (("small", args.small_cache), ("large", args.large_cache)):
                params = store_params_for(cfg.store, None, frac, unique_plain)
                s = store.replay_corpus(cipher, params, unique,
                                        root=out / "store" / f"{scheme}-{name}")
                tot = s.total()
                store_rows.append({"scheme": scheme, "cache": name,
                                   "cache_bytes": params.cache_capacity,
                                   **store.report_row(tot)})
    metrics.compare_runs(results, out / "results.csv")
    with open(out / "store_summary.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(store_rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(store_rows)
    print(f"run-all finished: {out / 'results.csv'}, {out / 'store_summary.csv'}")
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dedupfa", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, help="root seed")
        sp.add_argument("--out", required=out_required, help="output directory")

    def seg(sp):
        sp.add_argument("--seg-min", type=int)
        sp.add_argument("--seg-avg", type=int)
        sp.add_argument("--seg-max", type=int)
        sp.add_argument("--seg-divisor", type=int)

    g = sub.add_parser("gen", help="generate a synthetic snapshot corpus")
    common(g)
    g.add_argument("--snapshots", type=int)
    g.add_argument("--initial-size", type=int)
    g.add_argument("--files", type=int)
    g.add_argument("--mean-chunk", type=int)
    g.add_argument("--pick", type=float)
    g.add_argument("--modify", type=float)
    g.add_argument("--added-bytes", type=int)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("chunk", help="content-defined chunking of raw files")
    c.add_argument("inputs", nargs="+")
    c.add_argument("--out", required=True)
    c.add_argument("--min", type=int, default=2048)
    c.add_argument("--avg", type=int, default=8192)
    c.add_argument("--max", type=int, default=65536)
    c.add_argument("--width", type=int, default=trace.DEFAULT_FP_WIDTH)
    c.set_defaults(func=cmd_chunk)

    d = sub.add_parser("defend", help="encrypt a corpus (mle, minhash, minhash+scramble)")
    common(d)
    d.add_argument("--corpus", required=True, help="plaintext corpus manifest")
    d.add_argument("--scheme", choices=defenses.SCHEMES, default="minhash+scramble")
    seg(d)
    d.set_defaults(func=cmd_defend)

    a = sub.add_parser("attack", help="run an inference attack on one (aux, target) cell")
    common(a)
    a.add_argument("--kind", choices=sorted(attacks.ATTACKS), default="locality")
    a.add_argument("--mode", choices=attacks.MODES, default=attacks.CIPHERTEXT_ONLY)
    a.add_argument("--aux", required=True, help="plaintext trace path, or index/label in --corpus")
    a.add_argument("--target", required=True,
                   help="cipher trace path, or index/label in --defended")
    a.add_argument("--corpus", help="plaintext corpus manifest")
    a.add_argument("--defended", help="cipher corpus manifest")
    a.add_argument("--ground-truth", help="cipher,plain map (default: <target>.gt)")
    a.add_argument("--leak", type=float, help="leakage rate; implies known-plaintext mode")
    a.add_argument("--defense", default="", help="label recorded in results.csv")
    a.add_argument("--u", type=int)
    a.add_argument("--v", type=int)
    a.add_argument("--w", type=int)
    a.set_defaults(func=cmd_attack)

    s = sub.add_parser("store", help="replay a cipher corpus through the dedup store")
    common(s)
    s.add_argument("--corpus", required=True, help="cipher corpus manifest")
    s.add_argument("--cache-size", type=int, help="fingerprint cache bytes")
    s.add_argument("--cache-fraction", type=float,
                   help="cache bytes as a fraction of the corpus fingerprint metadata")
    s.add_argument("--container-size", type=int)
    s.add_argument("--expected", type=int, help="Bloom filter sizing hint (fingerprints)")
    s.add_argument("--events", action="store_true", help="write events.log")
    s.set_defaults(func=cmd_store)

    cm = sub.add_parser("compare", help="merge results CSVs")
    cm.add_argument("inputs", nargs="+")
    cm.add_argument("--out")
    cm.set_defaults(func=cmd_compare)

    r = sub.add_parser("run-all", help="gen -> defend -> attack -> store -> compare")
    common(r)
    r.add_argument("--snapshots", type=int)
    r.add_argument("--initial-size", type=int)
    r.add_argument("--files", type=int)
    r.add_argument("--leak", type=float, default=0.002)
    r.add_argument("--small-cache", type=float, default=0.25,
                   help="small cache as a fraction of plaintext fingerprint metadata")
    r.add_argument("--large-cache", type=float, default=2.0)
    r.set_defaults(func=cmd_run_all)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"dedupfa {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
