"""Inference attacks against deterministic encrypted deduplication.

* :func:`basic_attack` rank-pairs global chunk frequencies.
* :func:`locality_attack` seeds an inferred queue and repeatedly rank-pairs
  the left / right neighbours of every inferred pair.
* :func:`advanced_locality_attack` does the same but only pairs chunks that
  occupy the same number of 16-byte cipher blocks.

Every attack returns an :class:`InferredPairSet`, which also keeps a
provenance record of how each pair was reached.
"""
from __future__ import annotations

import csv
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

from .freq import BLOCK_SIZE, InferredPair, block_count, count, freq_analysis, rank
from .trace import BackupTrace

CIPHERTEXT_ONLY = "ciphertext-only"
KNOWN_PLAINTEXT = "known-plaintext"
MODES = (CIPHERTEXT_ONLY, KNOWN_PLAINTEXT)


@dataclass(frozen=True)
class AttackParams:
    u: int = 1
    v: int = 15
    w: int = 200_000
    mode: str = CIPHERTEXT_ONLY
    size_aware: bool = False
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if self.u < 1 or self.v < 1 or self.w < 1:
            raise ValueError("u, v and w must all be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


class Provenance(NamedTuple):
    cipher: bytes
    plain: bytes
    parent: bytes | None  # cipher fingerprint of the pair this one was inferred from
    side: str  # seed | leak | rank | left | right
    iteration: int


class InferredPairSet:
    """Cipher -> plain mapping where the first inference for a cipher wins."""

    def __init__(self):
        self.pairs: dict[bytes, bytes] = {}
        self.provenance: list[Provenance] = []

    def add(self, cipher: bytes, plain: bytes, parent: bytes | None = None,
            side: str = "seed", iteration: int = 0) -> bool:
        if cipher in self.pairs:
            return False
        self.pairs[cipher] = plain
        self.provenance.append(Provenance(cipher, plain, parent, side, iteration))
        return True

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, cipher):
        return cipher in self.pairs

    def __getitem__(self, cipher):
        return self.pairs[cipher]

    def get(self, cipher, default=None):
        return self.pairs.get(cipher, default)

    def items(self):
        return self.pairs.items()

    def as_set(self) -> set[InferredPair]:
        return {InferredPair(c, m) for c, m in self.pairs.items()}

    def write_csv(self, sink) -> None:
        """``cipher_fp,plain_fp,parent_fp,side,iteration`` rows in inference order."""
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["cipher_fp", "plain_fp", "parent_fp", "side", "iteration"])
        for rec in self.provenance:
            writer.writerow([rec.cipher.hex(), rec.plain.hex(),
                             rec.parent.hex() if rec.parent else "", rec.side, rec.iteration])


@dataclass(frozen=True)
class LeakageSet:
    pairs: tuple[InferredPair, ...]
    leakage_rate: float

    def __len__(self):
        return len(self.pairs)


def sample_leakage(ground_truth: Mapping[bytes, bytes], target: BackupTrace,
                   rate: float, seed: int) -> LeakageSet:
    """Uniformly sample ``floor(rate * len(target))`` true pairs of the target backup."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("leakage rate must lie in [0, 1]")
    n = math.floor(rate * len(target) + 1e-9)
    candidates = [c for c in target.unique() if c in ground_truth]
    if n > len(candidates):
        raise ValueError(f"leakage rate {rate} needs {n} pairs but only "
                         f"{len(candidates)} are known")
    picked = random.Random(seed).sample(candidates, n)
    pairs = tuple(InferredPair(c, ground_truth[c]) for c in picked)
    return LeakageSet(pairs, len(pairs) / len(target) if len(target) else 0.0)


def basic_attack(C: BackupTrace, M: BackupTrace) -> InferredPairSet:
    fc = count(C).freq
    fm = count(M).freq
    result = InferredPairSet()
    x = min(len(fc), len(fm))
    if x:
        for c, m in freq_analysis(fc, fm, x):
            result.add(c, m, side="rank")
    return result


class _Analyzer:
    """Frequency analysis with per-table rank caching.

    A plaintext chunk can be dequeued many times paired with different
    ciphertexts, so its neighbour rankings are computed once.
    """

    def __init__(self, size_aware: bool, sizes_c: Mapping[bytes, int] | None,
                 sizes_m: Mapping[bytes, int] | None, block_size: int):
        self.size_aware = size_aware
        self.sizes = (sizes_c, sizes_m)
        self.block_size = block_size
        self.cache: dict = {}

    def _ranked(self, key, table: Mapping[bytes, int], side: int):
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if not self.size_aware:
            out = rank(table)
        else:
            sizes = self.sizes[side]
            classes: dict[int, dict[bytes, int]] = {}
            for fp, n in table.items():
                classes.setdefault(block_count(sizes[fp], self.block_size), {})[fp] = n
            out = {s: rank(members) for s, members in classes.items()}
        self.cache[key] = out
        return out

    def __call__(self, key_c, yc, key_m, ym, x: int) -> list[InferredPair]:
        if not yc or not ym:
            return []
        rc = self._ranked(("c",) + key_c, yc, 0)
        rm = self._ranked(("m",) + key_m, ym, 1)
        if not self.size_aware:
            n = min(x, len(rc), len(rm))
            return [InferredPair(rc[i], rm[i]) for i in range(n)]
        out = []
        for s in sorted(rc.keys() & rm.keys()):
            a, b = rc[s], rm[s]
            n = min(x, len(a), len(b))
            out.extend(InferredPair(a[i], b[i]) for i in range(n))
        return out


def locality_attack(C: BackupTrace, M: BackupTrace, params: AttackParams | None = None,
                    leak: LeakageSet | Iterable[InferredPair] | None = None) -> InferredPairSet:
    """Locality-based inference.

    ``C`` is the ciphertext target backup, ``M`` the auxiliary plaintext
    backup.  In known-plaintext mode every leaked pair is recorded in the
    result; the ones whose chunks occur in both ``C`` and ``M`` seed the
    queue.  ``params.size_aware`` selects the size-class frequency analysis.
    """
    params = params or AttackParams()
    leaked = list(leak.pairs if isinstance(leak, LeakageSet) else (leak or ()))
    if params.mode == KNOWN_PLAINTEXT and not leaked:
        raise ValueError("known-plaintext mode needs a non-empty leakage set")
    if params.mode == CIPHERTEXT_ONLY and leaked:
        raise ValueError("ciphertext-only mode takes no leakage set")

    result = InferredPairSet()
    if not len(C) or not len(M):
        for c, m in leaked:
            result.add(c, m, side="leak")
        return result

    fc, lc, rc = count(C)
    fm, lm, rm = count(M)
    analyze = _Analyzer(params.size_aware,
                        C.size_map() if params.size_aware else None,
                        M.size_map() if params.size_aware else None,
                        params.block_size)
    queue: deque[InferredPair] = deque()

    if params.mode == CIPHERTEXT_ONLY:
        for c, m in analyze(("F",), fc, ("F",), fm, params.u):
            if result.add(c, m, side="seed") and len(queue) < params.w:
                queue.append(InferredPair(c, m))
    else:
        for c, m in leaked:
            if result.add(c, m, side="leak") and c in fc and m in fm and len(queue) < params.w:
                queue.append(InferredPair(c, m))

    iteration = 0
    empty: dict = {}
    while queue:
        iteration += 1
        c, m = queue.popleft()
        t_left = analyze(("L", c), lc.get(c, empty), ("L", m), lm.get(m, empty), params.v)
        t_right = analyze(("R", c), rc.get(c, empty), ("R", m), rm.get(m, empty), params.v)
        for side, found in (("left", t_left), ("right", t_right)):
            for nc, nm in found:
                if result.add(nc, nm, parent=c, side=side, iteration=iteration):
                    if len(queue) < params.w:
                        queue.append(InferredPair(nc, nm))
    return result


def advanced_locality_attack(C: BackupTrace, M: BackupTrace,
                             params: AttackParams | None = None,
                             leak: LeakageSet | Iterable[InferredPair] | None = None
                             ) -> InferredPairSet:
    params = params or AttackParams()
    if not params.size_aware:
        params = AttackParams(params.u, params.v, params.w, params.mode, True, params.block_size)
    return locality_attack(C, M, params, leak)


ATTACKS = {
    "basic": lambda C, M, params=None, leak=None: basic_attack(C, M),
    "locality": locality_attack,
    "advanced": advanced_locality_attack,
}


def run_attack(kind: str, C: BackupTrace, M: BackupTrace, params: AttackParams | None = None,
               leak: LeakageSet | None = None) -> InferredPairSet:
    try:
        fn = ATTACKS[kind]
    except KeyError:
        raise ValueError(f"unknown attack {kind!r}; choose from {sorted(ATTACKS)}") from None
    return fn(C, M, params, leak)
