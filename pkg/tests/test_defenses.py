from collections import Counter

import pytest

from dedupfa.defenses import (
    SegmentParams,
    apply_scheme,
    defend,
    minhash_encrypt,
    mle_encrypt,
    read_ground_truth,
    read_recipe,
    reconstruct,
    scramble,
    scramble_segment,
    segment,
)
from dedupfa.trace import BackupTrace, ChunkRecord, parse_trace

from .conftest import fp_of, make_trace

SMALL = SegmentParams(min=4 * 8192, avg=8 * 8192, max=16 * 8192)


def test_scramble_example():
    A, B, C = (ChunkRecord(fp_of(n), 10) for n in "ABC")
    # first draw is irrelevant: the deque is empty
    assert scramble_segment([A, B, C], [0, 1, 2]) == [B, A, C]
    assert scramble_segment([A, B, C], [1, 1, 2]) == [B, A, C]
    assert scramble_segment([A, B, C], [0, 3, 5]) == [C, B, A]


def test_default_divisor():
    assert SegmentParams().effective_divisor == 64


def test_segment_sizes(small_corpus):
    t = small_corpus[0]
    segs = segment(t, SMALL)
    assert [c for s in segs for c in s.chunks] == list(t.chunks)
    for s, nxt in zip(segs, segs[1:]):
        assert s.size <= SMALL.max
        # closed by the pattern after reaching min, or forced before overflowing max
        assert s.size >= SMALL.min or s.size + nxt.chunks[0].size > SMALL.max


def test_segment_boundaries_are_content_defined(small_corpus):
    a, b = small_corpus[0], small_corpus[1]
    ha = {s.h for s in segment(a, SMALL)}
    hb = {s.h for s in segment(b, SMALL)}
    assert len(ha & hb) / len(ha) > 0.8


def test_mle_is_deterministic_and_keeps_histogram(small_corpus):
    t = small_corpus[0]
    enc = mle_encrypt(t)
    assert mle_encrypt(t).cipher_trace == enc.cipher_trace
    assert sorted(Counter(t.fingerprints).values()) == sorted(
        Counter(enc.cipher_trace.fingerprints).values())
    assert all(enc.ground_truth[c.fp] == m.fp for c, m in zip(enc.cipher_trace.chunks, t.chunks))


def test_minhash_same_chunk_can_map_to_several_ciphers():
    # the same plaintext chunk in two segments with different minima
    names = [f"a{i}" for i in range(40)] + ["X"] + [f"b{i}" for i in range(40)] + ["X"]
    t = make_trace(names)
    enc = minhash_encrypt(t, SegmentParams(min=8192, avg=16384, max=10 * 8192, divisor=2))
    ciphers = {c.fp for c, m in zip(enc.cipher_trace.chunks, t.chunks) if m.fp == fp_of("X")}
    segs = segment(t, SegmentParams(min=8192, avg=16384, max=10 * 8192, divisor=2))
    assert len(segs) > 2
    assert 1 <= len(ciphers) <= 2


def test_defend_preserves_multiset_and_sizes(small_corpus):
    t = small_corpus[1]
    enc = defend(t, SMALL, seed=5)
    plain_back = Counter(enc.ground_truth[c.fp] for c in enc.cipher_trace.chunks)
    assert plain_back == Counter(t.fingerprints)
    assert enc.cipher_trace.logical_bytes == t.logical_bytes
    assert defend(t, SMALL, seed=5).cipher_trace == enc.cipher_trace
    assert defend(t, SMALL, seed=6).cipher_trace != enc.cipher_trace


def test_scramble_keeps_segment_contents(small_corpus):
    t = small_corpus[0]
    s = scramble(t, SMALL, seed=1)
    assert Counter(s.fingerprints) == Counter(t.fingerprints)
    assert s.fingerprints != t.fingerprints


@pytest.mark.parametrize("scheme", ["mle", "minhash", "minhash+scramble"])
def test_reconstruct(scheme, small_corpus):
    t = small_corpus[2]
    enc = apply_scheme(scheme, t, SMALL, seed=3)
    assert reconstruct(enc.cipher_trace, enc) == t


def test_reconstruct_detects_missing_chunk(small_corpus):
    t = small_corpus[0]
    enc = mle_encrypt(t)
    short = BackupTrace(t.label, enc.cipher_trace.chunks[:-1])
    with pytest.raises(ValueError):
        reconstruct(short, enc)


def test_output_files(tmp_path, small_corpus):
    t = small_corpus[0]
    enc = defend(t, SMALL, seed=2)
    paths = enc.write(tmp_path, "b0")
    assert parse_trace(paths["trace"], label=t.label) == enc.cipher_trace
    assert read_ground_truth(paths["ground_truth"]) == enc.ground_truth
    assert read_recipe(paths["recipe"]) == list(t.fingerprints)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        apply_scheme("rot13", make_trace("a"))


def test_trace_below_min_is_one_segment():
    t = make_trace("abc")
    segs = segment(t)
    assert len(segs) == 1 and segs[0].h == min(c.fp for c in t.chunks)
    assert segment(t) == segs


def test_default_segments_within_bounds():
    from dedupfa.trace import SyntheticCorpusParams, generate_synthetic

    t = generate_synthetic(SyntheticCorpusParams(initial_total_size=10 * 2**20,
                                                 initial_file_count=80, snapshots=1))[0]
    segs = segment(t)
    p = SegmentParams()
    assert len(segs) > 3
    assert all(p.min <= s.size <= p.max for s in segs[:-1])


def test_equal_segments_share_ciphers():
    t = make_trace(["a", "b", "c", "a", "b", "c"])
    enc = minhash_encrypt(t, SegmentParams(min=3 * 8192, avg=3 * 8192, max=3 * 8192, divisor=1))
    fps = enc.cipher_trace.fingerprints
    assert fps[:3] == fps[3:]


def test_different_minima_give_distinct_ciphers():
    names = ["X", "p", "q", "X", "r", "s"]
    t = make_trace(names)
    p = SegmentParams(min=3 * 8192, avg=3 * 8192, max=3 * 8192, divisor=1)
    segs = segment(t, p)
    assert len(segs) == 2 and segs[0].h != segs[1].h
    enc = minhash_encrypt(t, p)
    assert enc.cipher_trace.chunks[0].fp != enc.cipher_trace.chunks[3].fp


def test_single_chunk_encryption():
    t = BackupTrace("one", (ChunkRecord(b"\x01\x02\x03\x04\x05\x06", 77),))
    enc = minhash_encrypt(t)
    assert segment(t)[0].h == t.chunks[0].fp
    assert enc.cipher_trace.width == 6 and enc.cipher_trace.chunks[0].size == 77
    assert scramble_segment(t.chunks, [0]) == list(t.chunks)


def test_mle_distinct_stays_distinct():
    t = make_trace([f"x{i}" for i in range(500)])
    assert len(set(mle_encrypt(t).cipher_trace.fingerprints)) == 500
