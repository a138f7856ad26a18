"""Evaluation quantities: inference rate, storage saving, dedup ratio, result tables."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .store import StoreReport
from .trace import BackupTrace


def inference_rate(T, ground_truth: Mapping[bytes, bytes], target: BackupTrace) -> float:
    """Fraction of the target's unique cipher chunks whose inferred plaintext is correct.

    ``T`` is anything with a ``get(cipher)`` (an InferredPairSet or a dict).
    """
    unique = target.unique()
    if not unique:
        return 0.0
    hits = 0
    for c in unique:
        m = T.get(c)
        if m is not None and ground_truth.get(c) == m:
            hits += 1
    return hits / len(unique)


def storage_saving(report: StoreReport) -> float:
    if not report.logical_bytes:
        raise ValueError("storage saving undefined for zero logical bytes")
    return 1.0 - report.physical_bytes / report.logical_bytes


def dedup_ratio(report: StoreReport) -> float:
    if not report.physical_bytes:
        raise ValueError("dedup ratio undefined for zero physical bytes")
    return report.logical_bytes / report.physical_bytes


def corpus_sizes(traces: Iterable[BackupTrace]) -> tuple[int, int]:
    """(logical, physical) bytes of a corpus by exact set deduplication."""
    logical = 0
    seen: dict[bytes, int] = {}
    for t in traces:
        for fp, size in t.chunks:
            logical += size
            seen.setdefault(fp, size)
    return logical, sum(seen.values())


def corpus_dedup_ratio(traces: Iterable[BackupTrace]) -> float:
    logical, physical = corpus_sizes(traces)
    return logical / physical


def corpus_storage_saving(traces: Iterable[BackupTrace]) -> float:
    logical, physical = corpus_sizes(traces)
    return 1.0 - physical / logical


@dataclass
class EvalResult:
    attack: str
    defense: str
    aux: str
    target: str
    mode: str = "ciphertext-only"
    leakage_rate: float = 0.0
    inference_rate: float = 0.0
    inferred_pairs: int = 0
    storage_saving: float | None = None
    dedup_ratio: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.inference_rate <= 1.0:
            raise ValueError("inference_rate outside [0, 1]")
        if not 0.0 <= self.leakage_rate <= 1.0:
            raise ValueError("leakage_rate outside [0, 1]")


RESULT_FIELDS = [f.name for f in fields(EvalResult)]


def compare_runs(results: Sequence[EvalResult], sink) -> None:
    """CSV with one row per result in a fixed column order; ``sink`` is a path or text stream."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="") as f:
            compare_runs(results, f)
        return
    writer = csv.DictWriter(sink, fieldnames=RESULT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        row = asdict(r)
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})


def read_results(source) -> list[EvalResult]:
    with open(source, newline="") as f:
        rows = list(csv.DictReader(f))
    out = []
    for row in rows:
        kw = {}
        for name in RESULT_FIELDS:
            v = row.get(name, "")
            if name in ("leakage_rate", "inference_rate", "storage_saving", "dedup_ratio"):
                kw[name] = float(v) if v != "" else None
            elif name == "inferred_pairs":
                kw[name] = int(v) if v != "" else 0
            else:
                kw[name] = v
        if kw["leakage_rate"] is None:
            kw["leakage_rate"] = 0.0
        if kw["inference_rate"] is None:
            kw["inference_rate"] = 0.0
        out.append(EvalResult(**kw))
    return out


def sliding_window(labels: Sequence[str], steps: Iterable[int]) -> list[tuple[str, str]]:
    """(auxiliary, target) pairs with target t+s for every valid t and each step s."""
    out = []
    for s in steps:
        for t in range(len(labels) - s):
            out.append((labels[t], labels[t + s]))
    return out
