"""Chunk frequency / neighbour co-occurrence tables and rank-pairing frequency analysis."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Iterable, Mapping, NamedTuple

from .trace import BackupTrace

BLOCK_SIZE = 16

FrequencyTable = Counter  # fingerprint -> occurrences
NeighborTable = dict  # fingerprint -> Counter(neighbour fingerprint -> co-occurrences)


class InferredPair(NamedTuple):
    cipher: bytes
    plain: bytes


class Tables(NamedTuple):
    freq: Counter
    left: dict
    right: dict


def count(trace: BackupTrace | Iterable[bytes]) -> Tables:
    """Frequency table plus left and right neighbour tables of a chunk sequence.

    ``left[X][Y]`` counts how often Y immediately precedes X; ``right[X][Y]``
    how often Y immediately follows X.
    """
    fps = trace.fingerprints if isinstance(trace, BackupTrace) else list(trace)
    freq = Counter(fps)
    left: dict[bytes, Counter] = defaultdict(Counter)
    right: dict[bytes, Counter] = defaultdict(Counter)
    for a, b in zip(fps, fps[1:]):
        right[a][b] += 1
        left[b][a] += 1
    return Tables(freq, dict(left), dict(right))


def rank(table: Mapping[bytes, int]) -> list[bytes]:
    """Keys by descending count; ties broken by ascending fingerprint bytes."""
    return sorted(table, key=lambda fp: (-table[fp], fp))


def freq_analysis(yc: Mapping[bytes, int], ym: Mapping[bytes, int], x: int,
                  *, ranked_c: list[bytes] | None = None,
                  ranked_m: list[bytes] | None = None) -> list[InferredPair]:
    """Pair the i-th most frequent ciphertext with the i-th most frequent plaintext.

    Returns ``min(x, |yc|, |ym|)`` pairs.  Pre-ranked key lists may be passed
    to skip the sort.
    """
    if x < 1:
        raise ValueError("x must be >= 1")
    n = min(x, len(yc), len(ym))
    if n == 0:
        return []
    rc = ranked_c if ranked_c is not None else rank(yc)
    rm = ranked_m if ranked_m is not None else rank(ym)
    return [InferredPair(rc[i], rm[i]) for i in range(n)]


def block_count(size: int, block_size: int = BLOCK_SIZE) -> int:
    return math.ceil(size / block_size)


def classify(table: Mapping[bytes, int], sizes: Mapping[bytes, int],
             block_size: int = BLOCK_SIZE) -> dict[int, dict[bytes, int]]:
    """Group a frequency table by number of cipher blocks per chunk."""
    classes: dict[int, dict[bytes, int]] = defaultdict(dict)
    for fp, n in table.items():
        classes[block_count(sizes[fp], block_size)][fp] = n
    return dict(classes)


def size_aware_freq_analysis(yc: Mapping[bytes, int], ym: Mapping[bytes, int], x: int,
                             sizes_c: Mapping[bytes, int], sizes_m: Mapping[bytes, int],
                             block_size: int = BLOCK_SIZE) -> list[InferredPair]:
    """Rank-pair within each size class; up to ``x`` pairs per class, classes ascending.

    The total can exceed ``x`` when several classes are populated on both sides.
    """
    if x < 1:
        raise ValueError("x must be >= 1")
    bc = classify(yc, sizes_c, block_size)
    bm = classify(ym, sizes_m, block_size)
    out: list[InferredPair] = []
    for s in sorted(bc.keys() & bm.keys()):
        out.extend(freq_analysis(bc[s], bm[s], x))
    return out


def dump_table(table: Mapping[bytes, int], sink) -> None:
    """Debug dump: ``<hex fp> <count>`` lines in rank order."""
    for fp in rank(table):
        sink.write(f"{fp.hex()} {table[fp]}\n")
