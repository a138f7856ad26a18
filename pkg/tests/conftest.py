from __future__ import annotations

import hashlib

import pytest

from dedupfa.trace import BackupTrace, ChunkRecord, SyntheticCorpusParams, generate_synthetic

# one line per acceptance criterion, printed at the end of the session
CRITERIA: list[str] = []


def fp_of(name: str, width: int = 8) -> bytes:
    return hashlib.sha1(name.encode()).digest()[:width]


def make_trace(names, sizes=None, label="t") -> BackupTrace:
    """Trace from symbolic chunk names; ``sizes`` maps name -> size (default 8192)."""
    sizes = sizes or {}
    return BackupTrace(label, tuple(ChunkRecord(fp_of(n), sizes.get(n, 8192)) for n in names))


@pytest.fixture(scope="session")
def small_corpus():
    params = SyntheticCorpusParams(initial_file_count=60, initial_total_size=4 * 2**20,
                                   snapshots=4, rng_seed=7, shared_pool_size=50)
    return generate_synthetic(params)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
