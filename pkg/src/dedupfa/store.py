"""DDFS-style deduplicating store simulator with metadata-access accounting.

Per incoming chunk the store runs:

S1  fingerprint cache hit -> duplicate, no disk traffic.
S2  Bloom filter miss -> unique: buffer the chunk; a full buffer is flushed as
    a container and its fingerprints are written to the on-disk index
    (update access).
S3  Bloom filter hit -> look the fingerprint up on disk (index access); a
    miss means a false positive and the chunk is stored as in S2.
S4  index hit -> load the fingerprints of the owning container into the
    cache (loading access), evicting least-recently-used entries.

Chunk payloads are never materialised; only sizes and fingerprints flow.
"""
from __future__ import annotations

import csv
import hashlib
import math
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple

from .trace import BackupTrace, ChunkRecord

KiB = 1024
MiB = 1024 * KiB


class IntegrityError(KeyError):
    def __init__(self, fp: bytes):
        super().__init__(f"fingerprint {fp.hex()} is not stored")
        self.fp = fp


@dataclass(frozen=True)
class StoreParams:
    container_size: int = 4 * MiB
    cache_capacity: int = 512 * MiB
    bloom_fp_rate: float = 0.01
    bloom_hashes: int = 7
    fp_metadata_size: int = 32
    # True: every backup starts with an empty fingerprint cache (one dedup
    # session per backup); False: the cache carries over between backups
    cold_cache_per_backup: bool = True

    def __post_init__(self):
        if min(self.container_size, self.cache_capacity, self.bloom_hashes,
               self.fp_metadata_size) <= 0:
            raise ValueError("store parameters must be positive")
        if not 0.0 < self.bloom_fp_rate < 1.0:
            raise ValueError("bloom_fp_rate must lie in (0, 1)")

    @property
    def cache_entries(self) -> int:
        return self.cache_capacity // self.fp_metadata_size


class BloomFilter:
    """Bit-array Bloom filter with k positions by double hashing over BLAKE2b."""

    def __init__(self, expected_items: int, fp_rate: float = 0.01, hashes: int = 7):
        n = max(1, expected_items)
        self.m = max(8, math.ceil(-n * math.log(fp_rate) / math.log(2) ** 2))
        self.k = hashes
        self.bits = bytearray((self.m + 7) // 8)
        self.count = 0

    def _positions(self, fp: bytes):
        d = hashlib.blake2b(fp, digest_size=16).digest()
        h1 = int.from_bytes(d[:8], "little")
        h2 = int.from_bytes(d[8:], "little") | 1
        m = self.m
        return [(h1 + i * h2) % m for i in range(self.k)]

    def insert(self, fp: bytes) -> None:
        bits = self.bits
        for pos in self._positions(fp):
            bits[pos >> 3] |= 1 << (pos & 7)
        self.count += 1

    def query(self, fp: bytes) -> bool:
        bits = self.bits
        return all(bits[pos >> 3] & (1 << (pos & 7)) for pos in self._positions(fp))

    __contains__ = query

    @property
    def size_bytes(self) -> int:
        return len(self.bits)


class FingerprintCache:
    """In-memory fingerprint -> container map with per-entry LRU eviction."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._entries: OrderedDict[bytes, int] = OrderedDict()
        self.evictions = 0

    def get(self, fp: bytes) -> int | None:
        cid = self._entries.get(fp)
        if cid is not None:
            self._entries.move_to_end(fp)
        return cid

    def put(self, fp: bytes, cid: int) -> None:
        entries = self._entries
        if fp in entries:
            entries.move_to_end(fp)
            entries[fp] = cid
            return
        if self.capacity <= 0:
            return
        entries[fp] = cid
        if len(entries) > self.capacity:
            entries.popitem(last=False)
            self.evictions += 1

    def __contains__(self, fp):
        return fp in self._entries

    def __len__(self):
        return len(self._entries)


@dataclass
class Container:
    id: int
    entries: list[ChunkRecord] = field(default_factory=list)

    @property
    def payload(self) -> int:
        return sum(e.size for e in self.entries)

    _HEADER = struct.Struct("<QIB")

    def to_bytes(self) -> bytes:
        width = len(self.entries[0].fp) if self.entries else 0
        out = [self._HEADER.pack(self.id, len(self.entries), width)]
        out.extend(e.fp + struct.pack("<I", e.size) for e in self.entries)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Container":
        cid, n, width = cls._HEADER.unpack_from(data)
        off = cls._HEADER.size
        entries = []
        for _ in range(n):
            fp = data[off:off + width]
            (size,) = struct.unpack_from("<I", data, off + width)
            entries.append(ChunkRecord(fp, size))
            off += width + 4
        return cls(cid, entries)


class FingerprintIndex:
    """Fingerprint -> container id map persisted as an append log plus a sorted snapshot.

    Updates arrive in batches at container flush.  Without a directory the
    index lives in memory only.
    """

    _REC = struct.Struct("<BQ")

    def __init__(self, directory: Path | None = None):
        self._map: dict[bytes, int] = {}
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._load()

    @property
    def log_path(self) -> Path:
        return self.directory / "index.log"

    @property
    def sorted_path(self) -> Path:
        return self.directory / "index.sorted"

    def _load(self):
        for path in (self.sorted_path, self.log_path):
            if path.exists():
                self._map.update(self._decode(path.read_bytes()))

    def _encode(self, items: Iterable[tuple[bytes, int]]) -> bytes:
        return b"".join(self._REC.pack(len(fp), cid) + fp for fp, cid in items)

    def _decode(self, data: bytes):
        off = 0
        while off < len(data):
            width, cid = self._REC.unpack_from(data, off)
            off += self._REC.size
            yield data[off:off + width], cid
            off += width

    def add_batch(self, items: list[tuple[bytes, int]]) -> None:
        for fp, cid in items:
            self._map[fp] = cid
        if self.directory is not None:
            with open(self.log_path, "ab") as f:
                f.write(self._encode(items))

    def compact(self) -> None:
        """Fold the log into the sorted snapshot."""
        if self.directory is None:
            return
        self.sorted_path.write_bytes(self._encode(sorted(self._map.items())))
        self.log_path.write_bytes(b"")

    def lookup(self, fp: bytes) -> int | None:
        return self._map.get(fp)

    def __contains__(self, fp):
        return fp in self._map

    def __len__(self):
        return len(self._map)


@dataclass
class MetadataAccessStats:
    update_bytes: int = 0
    index_bytes: int = 0
    loading_bytes: int = 0

    @property
    def total(self) -> int:
        return self.update_bytes + self.index_bytes + self.loading_bytes

    def __sub__(self, other: "MetadataAccessStats") -> "MetadataAccessStats":
        return MetadataAccessStats(self.update_bytes - other.update_bytes,
                                   self.index_bytes - other.index_bytes,
                                   self.loading_bytes - other.loading_bytes)

    def copy(self) -> "MetadataAccessStats":
        return replace(self)


@dataclass
class StoreReport:
    label: str
    logical_bytes: int = 0
    physical_bytes: int = 0
    unique_chunks: int = 0
    duplicate_chunks: int = 0
    stats: MetadataAccessStats = field(default_factory=MetadataAccessStats)

    @property
    def storage_saving(self) -> float:
        if not self.logical_bytes:
            raise ValueError("storage saving undefined for zero logical bytes")
        return 1.0 - self.physical_bytes / self.logical_bytes

    @property
    def dedup_ratio(self) -> float:
        if not self.physical_bytes:
            raise ValueError("dedup ratio undefined for zero physical bytes")
        return self.logical_bytes / self.physical_bytes


class MetadataEvent(NamedTuple):
    backup: str
    kind: str  # update | index | loading
    nbytes: int
    fp: str
    container: int


REPORT_FIELDS = ["label", "logical_bytes", "physical_bytes", "unique_chunks",
                 "duplicate_chunks", "update_bytes", "index_bytes", "loading_bytes"]


class DedupStore:
    """One-writer deduplicating store.

    ``expected_fingerprints`` sizes the Bloom filter.  With ``root`` set,
    containers, the index, ``report.csv`` and (optionally) ``events.log`` are
    written under it.
    """

    def __init__(self, params: StoreParams | None = None, expected_fingerprints: int = 1 << 20,
                 root=None, event_log: bool = False):
        self.params = params or StoreParams()
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            (self.root / "containers").mkdir(parents=True, exist_ok=True)
        self.bloom = BloomFilter(expected_fingerprints, self.params.bloom_fp_rate,
                                 self.params.bloom_hashes)
        self.cache = FingerprintCache(self.params.cache_entries)
        self.index = FingerprintIndex(self.root / "index" if self.root is not None else None)
        self.containers: list[Container] = []
        self._container_maps: list[dict[bytes, int]] = []
        self._buffer: list[ChunkRecord] = []
        self._buffer_fps: set[bytes] = set()
        self._buffer_payload = 0
        self.stats = MetadataAccessStats()
        self.history: list[StoreReport] = []
        self.events: list[MetadataEvent] | None = [] if event_log else None
        self._label = ""

    # -- accounting -------------------------------------------------------
    def _touch(self, kind: str, nbytes: int, fp: bytes, cid: int) -> None:
        if kind == "update":
            self.stats.update_bytes += nbytes
        elif kind == "index":
            self.stats.index_bytes += nbytes
        else:
            self.stats.loading_bytes += nbytes
        if self.events is not None:
            self.events.append(MetadataEvent(self._label, kind, nbytes, fp.hex(), cid))

    # -- write path -------------------------------------------------------
    def _flush(self) -> None:
        if not self._buffer:
            return
        cid = len(self.containers)
        container = Container(cid, self._buffer)
        self.containers.append(container)
        self._container_maps.append({e.fp: e.size for e in container.entries})
        if self.root is not None:
            (self.root / "containers" / f"{cid:08d}.ctr").write_bytes(container.to_bytes())
        md = self.params.fp_metadata_size
        for e in container.entries:
            self._touch("update", md, e.fp, cid)
        self.index.add_batch([(e.fp, cid) for e in container.entries])
        self._buffer = []
        self._buffer_fps = set()
        self._buffer_payload = 0

    def _store_unique(self, rec: ChunkRecord, report: StoreReport) -> None:
        self.bloom.insert(rec.fp)
        if self._buffer and self._buffer_payload + rec.size > self.params.container_size:
            self._flush()
        self._buffer.append(rec)
        self._buffer_fps.add(rec.fp)
        self._buffer_payload += rec.size
        report.unique_chunks += 1
        report.physical_bytes += rec.size

    def _load_container(self, cid: int, fp: bytes) -> None:
        entries = self.containers[cid].entries
        self._touch("loading", self.params.fp_metadata_size * len(entries), fp, cid)
        for e in entries:
            self.cache.put(e.fp, cid)

    def write_chunk(self, rec: ChunkRecord, report: StoreReport) -> None:
        fp = rec.fp
        report.logical_bytes += rec.size
        # S1
        if self.cache.get(fp) is not None:
            report.duplicate_chunks += 1
            return
        # chunk still waiting in the write buffer: in-memory duplicate
        if fp in self._buffer_fps:
            report.duplicate_chunks += 1
            return
        # S2
        if not self.bloom.query(fp):
            self._store_unique(rec, report)
            return
        # S3
        self._touch("index", self.params.fp_metadata_size, fp, -1)
        cid = self.index.lookup(fp)
        if cid is None:
            self._store_unique(rec, report)
            return
        # S4
        self._load_container(cid, fp)
        self.cache.get(fp)
        report.duplicate_chunks += 1

    def write_backup(self, trace: BackupTrace) -> StoreReport:
        """Deduplicate one backup; returns that backup's report (its own traffic only)."""
        self._label = trace.label
        if self.params.cold_cache_per_backup:
            self.cache = FingerprintCache(self.params.cache_entries)
        before = self.stats.copy()
        report = StoreReport(trace.label)
        for rec in trace.chunks:
            self.write_chunk(rec, report)
        self._flush()
        report.stats = self.stats - before
        self.history.append(report)
        if self.root is not None:
            self._write_report()
            if self.events is not None:
                with open(self.root / "events.log", "a") as f:
                    for ev in self.events:
                        if ev.backup == trace.label:
                            f.write(",".join(map(str, ev)) + "\n")
        return report

    # -- read path --------------------------------------------------------
    def chunk_size(self, fp: bytes) -> int:
        cid = self.index.lookup(fp)
        if cid is None:
            raise IntegrityError(fp)
        return self._container_maps[cid][fp]

    def restore(self, recipe: Iterable[bytes], label: str = "") -> BackupTrace:
        return BackupTrace(label, tuple(ChunkRecord(fp, self.chunk_size(fp)) for fp in recipe))

    # -- reporting --------------------------------------------------------
    def total(self) -> StoreReport:
        out = StoreReport("total")
        for r in self.history:
            out.logical_bytes += r.logical_bytes
            out.physical_bytes += r.physical_bytes
            out.unique_chunks += r.unique_chunks
            out.duplicate_chunks += r.duplicate_chunks
        out.stats = self.stats.copy()
        return out

    def _write_report(self) -> None:
        write_report_csv(self.history, self.root / "report.csv")


def report_row(r: StoreReport) -> dict:
    return {"label": r.label, "logical_bytes": r.logical_bytes,
            "physical_bytes": r.physical_bytes, "unique_chunks": r.unique_chunks,
            "duplicate_chunks": r.duplicate_chunks, "update_bytes": r.stats.update_bytes,
            "index_bytes": r.stats.index_bytes, "loading_bytes": r.stats.loading_bytes}


def write_report_csv(reports: Iterable[StoreReport], sink) -> None:
    """Per-backup ``report.csv``; ``sink`` is a path or a text stream."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="") as f:
            write_report_csv(reports, f)
        return
    writer = csv.DictWriter(sink, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(report_row(r))


def replay_events(events: Iterable[MetadataEvent]) -> MetadataAccessStats:
    out = MetadataAccessStats()
    for ev in events:
        setattr(out, f"{ev.kind}_bytes", getattr(out, f"{ev.kind}_bytes") + ev.nbytes)
    return out


def replay_corpus(traces: Iterable[BackupTrace], params: StoreParams | None = None,
                  expected_fingerprints: int | None = None, root=None,
                  event_log: bool = False) -> DedupStore:
    traces = list(traces)
    if expected_fingerprints is None:
        expected_fingerprints = len({c.fp for t in traces for c in t.chunks})
    store = DedupStore(params, expected_fingerprints, root=root, event_log=event_log)
    for t in traces:
        store.write_backup(t)
    return store
