"""Encryption models over fingerprint traces: MLE, MinHash encryption, scrambling.

Encryption is simulated on fingerprints.  MLE maps a chunk to
``trunc(SHA-256(fp))``; MinHash encryption maps it to
``trunc(SHA-256(h || fp))`` where ``h`` is the minimum fingerprint of the
chunk's segment, so a plaintext chunk only deduplicates against copies that
landed in a segment with the same minimum.
"""
from __future__ import annotations

import hashlib
import hmac
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .trace import BackupTrace, ChunkRecord, write_trace

KiB = 1024
MiB = 1024 * KiB

# Stands in for the key manager's secret; only key identifiers depend on it.
SYSTEM_SECRET = b"dedupfa-key-manager"


@dataclass(frozen=True)
class SegmentParams:
    min: int = 512 * KiB
    avg: int = 1 * MiB
    max: int = 2 * MiB
    divisor: int | None = None  # None: derived from mean_chunk_size
    mean_chunk_size: int = 8 * KiB

    def __post_init__(self):
        if not 0 < self.min <= self.avg <= self.max:
            raise ValueError("segment sizes need 0 < min <= avg <= max")
        if self.mean_chunk_size < 1 or (self.divisor is not None and self.divisor < 1):
            raise ValueError("divisor and mean_chunk_size must be >= 1")

    @property
    def effective_divisor(self) -> int:
        """Divisor giving an expected segment size of ~avg once min is reached."""
        if self.divisor is not None:
            return self.divisor
        return max(1, round((self.avg - self.min) / self.mean_chunk_size))


@dataclass(frozen=True)
class Segment:
    chunks: tuple[ChunkRecord, ...]

    @property
    def h(self) -> bytes:
        return min(c.fp for c in self.chunks)

    @property
    def size(self) -> int:
        return sum(c.size for c in self.chunks)

    def __len__(self):
        return len(self.chunks)


@dataclass
class EncryptionOutput:
    cipher_trace: BackupTrace
    ground_truth: dict[bytes, bytes]
    key_recipe: list[tuple[int, str, int]] = field(default_factory=list)  # (segment, key id, chunks)
    file_recipe: list[bytes] = field(default_factory=list)

    def write(self, directory, stem: str) -> dict[str, str]:
        """Write ``<stem>.trace``, ``<stem>.gt`` and ``<stem>.recipe`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "trace": directory / f"{stem}.trace",
            "ground_truth": directory / f"{stem}.gt",
            "recipe": directory / f"{stem}.recipe",
        }
        write_trace(self.cipher_trace, paths["trace"])
        write_ground_truth(self.ground_truth, paths["ground_truth"])
        paths["recipe"].write_text("".join(fp.hex() + "\n" for fp in self.file_recipe))
        return {k: str(v) for k, v in paths.items()}


def write_ground_truth(gt: Mapping[bytes, bytes], path) -> None:
    Path(path).write_text("".join(f"{c.hex()},{m.hex()}\n" for c, m in gt.items()))


def read_ground_truth(path) -> dict[bytes, bytes]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        c, sep, m = line.partition(",")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected '<cipher hex>,<plain hex>'")
        out[bytes.fromhex(c)] = bytes.fromhex(m)
    return out


def read_recipe(path) -> list[bytes]:
    return [bytes.fromhex(line) for line in Path(path).read_text().split()]


def segment(trace: BackupTrace, p: SegmentParams | None = None) -> list[Segment]:
    """Variable-size segmentation keyed on chunk fingerprints.

    A segment closes after chunk X when it holds at least ``p.min`` bytes and
    ``int(X.fp) % d == d - 1``, or before X when adding X would push it past
    ``p.max``.
    """
    p = p or SegmentParams()
    d = p.effective_divisor
    out: list[Segment] = []
    cur: list[ChunkRecord] = []
    size = 0
    for rec in trace.chunks:
        if cur and size + rec.size > p.max:
            out.append(Segment(tuple(cur)))
            cur, size = [], 0
        cur.append(rec)
        size += rec.size
        if size >= p.min and int.from_bytes(rec.fp, "big") % d == d - 1:
            out.append(Segment(tuple(cur)))
            cur, size = [], 0
    if cur:
        out.append(Segment(tuple(cur)))
    return out


def _trunc_sha256(data: bytes, width: int) -> bytes:
    return hashlib.sha256(data).digest()[:width]


def segment_key(h: bytes) -> bytes:
    """Deterministic per-segment key derived from the segment minimum."""
    return hmac.new(SYSTEM_SECRET, h, hashlib.sha256).digest()


def mle_encrypt(trace: BackupTrace, label: str | None = None) -> EncryptionOutput:
    cipher = []
    gt: dict[bytes, bytes] = {}
    for fp, size in trace.chunks:
        c = _trunc_sha256(fp, len(fp))
        gt[c] = fp
        cipher.append(ChunkRecord(c, size))
    return EncryptionOutput(BackupTrace(trace.label if label is None else label, tuple(cipher)),
                            gt, [], trace.fingerprints)


def _encrypt_segments(segments: Sequence[Segment], label: str,
                      file_recipe: list[bytes]) -> EncryptionOutput:
    cipher = []
    gt: dict[bytes, bytes] = {}
    keys = []
    for i, seg in enumerate(segments):
        h = seg.h
        keys.append((i, segment_key(h)[:8].hex(), len(seg)))
        for fp, size in seg.chunks:
            c = _trunc_sha256(h + fp, len(fp))
            gt[c] = fp
            cipher.append(ChunkRecord(c, size))
    return EncryptionOutput(BackupTrace(label, tuple(cipher)), gt, keys, file_recipe)


def minhash_encrypt(trace: BackupTrace, p: SegmentParams | None = None,
                    label: str | None = None) -> EncryptionOutput:
    return _encrypt_segments(segment(trace, p), trace.label if label is None else label,
                             trace.fingerprints)


def scramble_segment(chunks: Iterable[ChunkRecord], draws: Iterable[int]) -> list[ChunkRecord]:
    """Odd draw puts the chunk at the front, even draw at the back."""
    out: deque = deque()
    for rec, r in zip(chunks, draws):
        if r & 1:
            out.appendleft(rec)
        else:
            out.append(rec)
    return list(out)


def _draws(rng: random.Random) -> Iterator[int]:
    while True:
        yield rng.getrandbits(32)


def scramble_segments(segments: Sequence[Segment], seed: int) -> list[Segment]:
    draws = _draws(random.Random(seed))
    return [Segment(tuple(scramble_segment(seg.chunks, draws))) for seg in segments]


def scramble(trace: BackupTrace, p: SegmentParams | None = None, seed: int = 0) -> BackupTrace:
    chunks = [c for seg in scramble_segments(segment(trace, p), seed) for c in seg.chunks]
    return BackupTrace(trace.label, tuple(chunks))


def defend(trace: BackupTrace, p: SegmentParams | None = None, seed: int = 0,
           label: str | None = None) -> EncryptionOutput:
    """Scramble each segment, then MinHash-encrypt it, reusing the pre-scramble boundaries."""
    segs = scramble_segments(segment(trace, p), seed)
    return _encrypt_segments(segs, trace.label if label is None else label, trace.fingerprints)


def reconstruct(restored: BackupTrace, output: EncryptionOutput) -> BackupTrace:
    """Decrypt a restored cipher trace and put chunks back in file-recipe order."""
    plain_sizes: dict[bytes, int] = {}
    available: Counter = Counter()
    for c, size in restored.chunks:
        m = output.ground_truth[c]
        plain_sizes[m] = size
        available[m] += 1
    chunks = []
    for m in output.file_recipe:
        if available[m] <= 0:
            raise ValueError(f"recipe references {m.hex()} more often than restored data holds it")
        available[m] -= 1
        chunks.append(ChunkRecord(m, plain_sizes[m]))
    if sum(available.values()):
        raise ValueError("restored data holds chunks the recipe does not reference")
    return BackupTrace(restored.label, tuple(chunks))


SCHEMES = ("mle", "minhash", "minhash+scramble")


def apply_scheme(scheme: str, trace: BackupTrace, p: SegmentParams | None = None,
                 seed: int = 0) -> EncryptionOutput:
    if scheme == "mle":
        return mle_encrypt(trace)
    if scheme == "minhash":
        return minhash_encrypt(trace, p)
    if scheme == "minhash+scramble":
        return defend(trace, p, seed)
    raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
