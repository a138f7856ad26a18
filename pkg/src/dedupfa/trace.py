"""Backup chunk traces: model, text format, synthetic corpora, and content-defined chunking.

A trace is the logical (pre-deduplication) sequence of chunk records of one
backup.  Each record carries an opaque fixed-width fingerprint and the chunk
size in bytes.  On disk a trace is one ``<lowercase hex>,<size>`` line per
chunk; a corpus is a manifest listing trace files in chronological order.
"""
from __future__ import annotations

import hashlib
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

MIN_FP_WIDTH = 4
MAX_FP_WIDTH = 32
DEFAULT_FP_WIDTH = 8


class TraceParseError(ValueError):
    """Raised for malformed trace input; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ChunkRecord(NamedTuple):
    fp: bytes
    size: int


@dataclass(frozen=True)
class BackupTrace:
    label: str
    chunks: tuple[ChunkRecord, ...] = ()

    def __post_init__(self):
        if not isinstance(self.chunks, tuple):
            object.__setattr__(self, "chunks", tuple(self.chunks))

    def __len__(self) -> int:
        return len(self.chunks)

    def __iter__(self) -> Iterator[ChunkRecord]:
        return iter(self.chunks)

    @property
    def width(self) -> int | None:
        return len(self.chunks[0].fp) if self.chunks else None

    @property
    def fingerprints(self) -> list[bytes]:
        return [c.fp for c in self.chunks]

    @property
    def logical_bytes(self) -> int:
        return sum(c.size for c in self.chunks)

    def unique(self) -> dict[bytes, int]:
        """First-seen size of every distinct fingerprint, in order of first appearance."""
        out: dict[bytes, int] = {}
        for fp, size in self.chunks:
            out.setdefault(fp, size)
        return out

    def size_map(self) -> dict[bytes, int]:
        return self.unique()


def _open_text(stream) -> Iterable[str]:
    if isinstance(stream, (str, os.PathLike)):
        return Path(stream).read_text(encoding="utf-8").splitlines()
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream).decode("utf-8").splitlines()
    if isinstance(stream, io.TextIOBase):
        return stream
    # binary file-like
    return io.TextIOWrapper(stream, encoding="utf-8")


def parse_trace(stream, width: int | None = None, label: str = "",
                max_chunk_size: int | None = None) -> BackupTrace:
    """Parse ``<hex>,<size>`` lines.

    ``stream`` may be a path, raw bytes, or a text/binary file object.  When
    ``width`` is None it is inferred from the first record and then enforced.
    Blank lines are ignored.
    """
    chunks = []
    for lineno, raw in enumerate(_open_text(stream), start=1):
        line = raw.strip()
        if not line:
            continue
        hexpart, sep, sizepart = line.partition(",")
        if not sep:
            raise TraceParseError(lineno, "expected '<hex>,<size>'")
        try:
            fp = bytes.fromhex(hexpart.strip())
        except ValueError:
            raise TraceParseError(lineno, f"malformed hex fingerprint {hexpart!r}") from None
        if width is None:
            width = len(fp)
            if not MIN_FP_WIDTH <= width <= MAX_FP_WIDTH:
                raise TraceParseError(lineno, f"fingerprint width {width} outside [4, 32]")
        if len(fp) != width:
            raise TraceParseError(lineno, f"fingerprint width {len(fp)} != {width}")
        try:
            size = int(sizepart.strip(), 10)
        except ValueError:
            raise TraceParseError(lineno, f"malformed size {sizepart!r}") from None
        if size <= 0:
            raise TraceParseError(lineno, f"non-positive size {size}")
        if max_chunk_size is not None and size > max_chunk_size:
            raise TraceParseError(lineno, f"size {size} exceeds maximum {max_chunk_size}")
        chunks.append(ChunkRecord(fp, size))
    return BackupTrace(label, tuple(chunks))


def format_trace(trace: BackupTrace) -> str:
    return "".join(f"{fp.hex()},{size}\n" for fp, size in trace.chunks)


def write_trace(trace: BackupTrace, stream) -> None:
    text = format_trace(trace)
    if isinstance(stream, (str, os.PathLike)):
        Path(stream).write_text(text, encoding="utf-8")
    elif isinstance(stream, io.TextIOBase):
        stream.write(text)
    else:
        stream.write(text.encode("utf-8"))


def read_manifest(path) -> list[Path]:
    """Trace paths listed in a manifest, resolved relative to the manifest's directory."""
    path = Path(path)
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            p = Path(line)
            out.append(p if p.is_absolute() else path.parent / p)
    return out


def write_manifest(path, trace_paths: Sequence) -> None:
    path = Path(path)
    lines = []
    for p in trace_paths:
        p = Path(p)
        try:
            p = p.relative_to(path.parent)
        except ValueError:
            pass
        lines.append(str(p))
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_corpus(manifest) -> list[BackupTrace]:
    return [parse_trace(p, label=p.stem) for p in read_manifest(manifest)]


def save_corpus(traces: Sequence[BackupTrace], directory, manifest_name="manifest.txt") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in traces:
        p = directory / f"{t.label}.trace"
        write_trace(t, p)
        paths.append(p)
    manifest = directory / manifest_name
    write_manifest(manifest, paths)
    return manifest


# ---------------------------------------------------------------------------
# Synthetic snapshots

@dataclass(frozen=True)
class SyntheticCorpusParams:
    """Knobs of the snapshot generator.

    ``snapshots`` counts every trace produced, the initial image included.
    The ``shared_*`` and ``duplicate_file_fraction`` knobs shape the
    within-image redundancy (common blocks, copied files) that gives the
    initial image a skewed chunk-frequency distribution.  ``free_space_*``
    places a few zero-filled regions (unused disk space) between the files
    of the initial image; their single repeated chunk is the most frequent one.
    """

    initial_file_count: int = 2000
    initial_total_size: int = 256 * 2**20
    snapshots: int = 11
    file_pick_fraction: float = 0.02
    content_modify_fraction: float = 0.025
    added_bytes_per_snapshot: int | None = None  # None: 1% of initial_total_size
    mean_chunk_size: int = 8192
    rng_seed: int = 0
    fp_width: int = DEFAULT_FP_WIDTH
    shared_chunk_fraction: float = 0.05
    shared_pool_size: int = 2000
    shared_zipf_exponent: float = 1.1
    shared_run_length: float = 20.0
    duplicate_file_fraction: float = 0.03
    free_space_regions: int = 2
    free_space_region_size: int = 256 * 2**10
    label_prefix: str = "snapshot-"

    def __post_init__(self):
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")
        if self.initial_file_count < 1 or self.initial_total_size <= 0:
            raise ValueError("initial image must contain at least one file and one byte")
        if self.mean_chunk_size < 4:
            raise ValueError("mean_chunk_size too small")
        for name in ("file_pick_fraction", "content_modify_fraction",
                     "shared_chunk_fraction", "duplicate_file_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.added_bytes_per_snapshot is not None and self.added_bytes_per_snapshot < 0:
            raise ValueError("added_bytes_per_snapshot must be non-negative")
        if not MIN_FP_WIDTH <= self.fp_width <= MAX_FP_WIDTH:
            raise ValueError("fp_width outside [4, 32]")
        if self.shared_run_length < 1:
            raise ValueError("shared_run_length must be >= 1")
        if self.free_space_regions < 0 or self.free_space_region_size < 0:
            raise ValueError("free space knobs must be non-negative")
        if self.shared_pool_size < 1 or self.shared_zipf_exponent <= 0:
            raise ValueError("shared pool must be non-empty with a positive exponent")

    @property
    def added_bytes(self) -> int:
        if self.added_bytes_per_snapshot is None:
            return self.initial_total_size // 100
        return self.added_bytes_per_snapshot

    @property
    def min_chunk_size(self) -> int:
        return max(1, self.mean_chunk_size // 4)

    @property
    def max_chunk_size(self) -> int:
        return 4 * self.mean_chunk_size


class _SnapshotGenerator:
    def __init__(self, params: SyntheticCorpusParams):
        self.p = params
        self.rng = np.random.default_rng(params.rng_seed)
        self.seen: set[bytes] = set()
        weights = 1.0 / np.arange(1, params.shared_pool_size + 1) ** params.shared_zipf_exponent
        self.pool_cdf = np.cumsum(weights / weights.sum())
        # runs of distinct chunks (common libraries, templates) shared by many files
        self.pool = [
            tuple(self.fresh_chunk() for _ in range(self.run_length()))
            for _ in range(params.shared_pool_size)
        ]
        mean_run = params.shared_run_length
        f = params.shared_chunk_fraction
        self.shared_prob = f / (mean_run * (1 - f) + f) if f else 0.0

    def run_length(self) -> int:
        return int(self.rng.geometric(1.0 / self.p.shared_run_length))

    def fresh_fp(self) -> bytes:
        while True:
            fp = self.rng.bytes(self.p.fp_width)
            if fp not in self.seen:
                self.seen.add(fp)
                return fp

    def chunk_size(self) -> int:
        lo, hi = self.p.min_chunk_size, self.p.max_chunk_size
        # shifted exponential with mean == mean_chunk_size before clamping
        size = lo + int(self.rng.exponential(self.p.mean_chunk_size - lo))
        return min(size, hi)

    def fresh_chunk(self) -> ChunkRecord:
        return ChunkRecord(self.fresh_fp(), self.chunk_size())

    def content(self, count: int) -> list[ChunkRecord]:
        out: list[ChunkRecord] = []
        while len(out) < count:
            if self.rng.random() < self.shared_prob:
                idx = int(np.searchsorted(self.pool_cdf, self.rng.random(), side="right"))
                idx = min(idx, len(self.pool) - 1)
                out.extend(self.pool[idx])
            else:
                out.append(self.fresh_chunk())
        return out

    def file_chunk_counts(self, total_bytes: int, n_files: int) -> list[int]:
        mean_chunks = max(1.0, total_bytes / self.p.mean_chunk_size / n_files)
        sigma = 1.0
        raw = self.rng.lognormal(math.log(mean_chunks) - sigma**2 / 2, sigma, size=n_files)
        return [max(1, int(round(c))) for c in raw]

    def new_files(self, total_bytes: int, n_files: int,
                  existing: list[list[ChunkRecord]] | None = None) -> list[list[ChunkRecord]]:
        files: list[list[ChunkRecord]] = []
        for count in self.file_chunk_counts(total_bytes, n_files):
            pool = (existing or []) + files
            if pool and self.rng.random() < self.p.duplicate_file_fraction:
                files.append(list(pool[int(self.rng.integers(len(pool)))]))
            else:
                files.append(self.content(count))
        return files

    def initial(self) -> list[list[ChunkRecord]]:
        files = self.new_files(self.p.initial_total_size, self.p.initial_file_count)
        n_zero = self.p.free_space_region_size // self.p.mean_chunk_size
        if self.p.free_space_regions and n_zero:
            zero = ChunkRecord(self.fresh_fp(), self.p.mean_chunk_size)
            for _ in range(self.p.free_space_regions):
                files.insert(int(self.rng.integers(0, len(files) + 1)), [zero] * n_zero)
        return files

    def derive(self, files: list[list[ChunkRecord]]) -> list[list[ChunkRecord]]:
        files = [list(f) for f in files]
        n_pick = int(round(self.p.file_pick_fraction * len(files)))
        if n_pick:
            for idx in self.rng.choice(len(files), size=n_pick, replace=False):
                f = files[int(idx)]
                run = max(1, int(round(self.p.content_modify_fraction * len(f))))
                start = int(self.rng.integers(0, len(f) - run + 1))
                for j in range(start, start + run):
                    f[j] = ChunkRecord(self.fresh_fp(), self._similar_size(f[j].size))
        added = self.p.added_bytes
        if added > 0:
            avg_file_bytes = self.p.initial_total_size / self.p.initial_file_count
            n_new = max(1, int(round(added / avg_file_bytes)))
            for f in self.new_files(added, n_new):
                files.insert(int(self.rng.integers(0, len(files) + 1)), f)
        return files

    def _similar_size(self, size: int) -> int:
        jitter = int(self.rng.integers(-size // 8, size // 8 + 1))
        return min(self.p.max_chunk_size, max(self.p.min_chunk_size, size + jitter))


def generate_synthetic(params: SyntheticCorpusParams) -> list[BackupTrace]:
    """Generate ``params.snapshots`` traces; trace i+1 is derived from trace i.

    Files are lists of chunk records.  Each derived snapshot rewrites a
    contiguous run of ``content_modify_fraction`` of the chunks in
    ``file_pick_fraction`` of the files with fresh chunks of similar size,
    then inserts new files totalling ``added_bytes`` at random positions.
    """
    gen = _SnapshotGenerator(params)
    files = gen.initial()
    out = []
    for i in range(params.snapshots):
        if i:
            files = gen.derive(files)
        chunks = tuple(c for f in files for c in f)
        out.append(BackupTrace(f"{params.label_prefix}{i:02d}", chunks))
    return out


# ---------------------------------------------------------------------------
# Content-defined chunking

def _gear_table() -> list[int]:
    table = []
    for i in range(256):
        d = hashlib.sha256(b"gear" + bytes([i])).digest()
        table.append(int.from_bytes(d[:8], "big"))
    return table


_GEAR = _gear_table()
_MASK64 = (1 << 64) - 1


def cut_points(data: bytes, min_size: int, avg_size: int, max_size: int) -> list[int]:
    """End offsets of content-defined chunks using a gear rolling hash.

    A boundary is declared once at least ``min_size`` bytes are in the chunk
    and the top bits of the rolling hash are zero; ``max_size`` forces one.
    The hash only depends on the last 64 bytes, so boundaries resynchronise
    after an edit.
    """
    if not 0 < min_size <= avg_size <= max_size:
        raise ValueError("need 0 < min <= avg <= max")
    bits = max(1, round(math.log2(max(2, avg_size - min_size + 1))))
    mask = ((1 << bits) - 1) << (64 - bits)
    gear = _GEAR
    cuts = []
    n = len(data)
    start = 0
    while start < n:
        end = min(n, start + max_size)
        if end - start <= min_size:
            cuts.append(end)
            start = end
            continue
        h = 0
        # warm the window so the hash is position-independent at the min boundary
        i = max(start, start + min_size - 64)
        for i in range(i, start + min_size):
            h = ((h << 1) + gear[data[i]]) & _MASK64
        cut = end
        for i in range(start + min_size, end):
            h = ((h << 1) + gear[data[i]]) & _MASK64
            if not h & mask:
                cut = i + 1
                break
        cuts.append(cut)
        start = cut
    return cuts


def chunk_file(content: bytes, min_size: int = 2048, avg_size: int = 8192,
               max_size: int = 65536, width: int = DEFAULT_FP_WIDTH,
               label: str = "") -> BackupTrace:
    """Chunk raw bytes; fingerprint = SHA-1 of the chunk truncated to ``width`` bytes."""
    if isinstance(content, (str, os.PathLike)):
        content = Path(content).read_bytes()
    elif hasattr(content, "read"):
        content = content.read()
    content = bytes(content)
    chunks = []
    start = 0
    for end in cut_points(content, min_size, avg_size, max_size):
        piece = content[start:end]
        chunks.append(ChunkRecord(hashlib.sha1(piece).digest()[:width], len(piece)))
        start = end
    return BackupTrace(label, tuple(chunks))
