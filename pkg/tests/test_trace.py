import io

import pytest

from dedupfa.trace import (
    BackupTrace,
    ChunkRecord,
    SyntheticCorpusParams,
    TraceParseError,
    chunk_file,
    cut_points,
    format_trace,
    generate_synthetic,
    load_corpus,
    parse_trace,
    save_corpus,
    write_trace,
)

from .conftest import make_trace


def test_parse_roundtrip(tmp_path):
    t = make_trace("ABCA", {"A": 100, "B": 4096, "C": 1})
    p = tmp_path / "x.trace"
    write_trace(t, p)
    back = parse_trace(p, label="t")
    assert back == t
    assert parse_trace(io.StringIO(format_trace(t)), label="t") == t


def test_parse_skips_blank_lines():
    text = "\n0011223344556677,10\n\n"
    t = parse_trace(io.StringIO(text))
    assert len(t) == 1 and t.chunks[0].size == 10


@pytest.mark.parametrize("text, msg", [
    ("zz11223344556677,10\n", "hex"),
    ("0011223344556677,0\n", "size"),
    ("0011223344556677,10\n00112233,10\n", "width"),
    ("001122,10\n", "width"),
    ("0011223344556677 10\n", "expected"),
])
def test_parse_errors(text, msg):
    with pytest.raises(TraceParseError) as err:
        parse_trace(io.StringIO(text))
    assert msg in str(err.value).lower()


def test_parse_reports_line_number():
    with pytest.raises(TraceParseError) as err:
        parse_trace(io.StringIO("0011223344556677,10\n0011223344556677,-3\n"))
    assert err.value.lineno == 2


def test_unique_keeps_first_appearance_order():
    t = make_trace("BAB")
    assert list(t.unique()) == [t.chunks[0].fp, t.chunks[1].fp]


def test_corpus_roundtrip(tmp_path, small_corpus):
    manifest = save_corpus(small_corpus, tmp_path / "c")
    back = load_corpus(manifest)
    assert [t.chunks for t in back] == [t.chunks for t in small_corpus]
    assert [t.label for t in back] == [t.label for t in small_corpus]


def test_generator_is_deterministic():
    p = SyntheticCorpusParams(initial_file_count=20, initial_total_size=2**20, snapshots=3,
                              rng_seed=3, shared_pool_size=10)
    a, b = generate_synthetic(p), generate_synthetic(p)
    assert [t.chunks for t in a] == [t.chunks for t in b]


def test_generator_snapshot_evolution(small_corpus):
    assert len(small_corpus) == 4
    assert [t.label for t in small_corpus] == [f"snapshot-{i:02d}" for i in range(4)]
    p = SyntheticCorpusParams()
    for prev, cur in zip(small_corpus, small_corpus[1:]):
        # mostly the same chunks, slightly more data
        shared = set(prev.unique()) & set(cur.unique())
        assert len(shared) / len(prev.unique()) > 0.9
        assert cur.logical_bytes > prev.logical_bytes
        for c in cur.chunks:
            assert p.min_chunk_size <= c.size <= p.max_chunk_size


def test_generator_validates():
    with pytest.raises(ValueError):
        SyntheticCorpusParams(file_pick_fraction=1.5)
    with pytest.raises(ValueError):
        SyntheticCorpusParams(snapshots=0)


def test_cut_points_bounds():
    import random

    data = random.Random(1).randbytes(300_000)
    cuts = cut_points(data, 2048, 8192, 65536)
    assert cuts[-1] == len(data)
    sizes = [b - a for a, b in zip([0] + cuts, cuts)]
    assert all(s <= 65536 for s in sizes)
    assert all(s >= 2048 for s in sizes[:-1])


def test_chunking_is_content_defined():
    import random

    rnd = random.Random(2)
    data = rnd.randbytes(200_000)
    a = chunk_file(data)
    b = chunk_file(rnd.randbytes(1000) + data)
    # an insertion at the front only disturbs the first chunks
    assert len(set(a.unique()) & set(b.unique())) >= len(a.unique()) - 3


def test_chunk_small_content_is_one_chunk():
    t = chunk_file(b"x" * 100)
    assert len(t) == 1 and t.chunks[0].size == 100


def test_parse_single_six_byte_record():
    t = parse_trace(io.StringIO("0a0b0c0d0e0f,4096\n"))
    assert t.width == 6 and len(t) == 1 and t.chunks[0].size == 4096


def test_parse_empty_stream():
    assert len(parse_trace(io.StringIO(""))) == 0
    assert format_trace(BackupTrace("e", ())) == ""


def test_duplicate_records_are_kept():
    t = parse_trace(io.StringIO("00000001,5\n00000002,6\n00000001,5\n"))
    assert len(t) == 3 and len(t.unique()) == 2


def test_large_random_roundtrip():
    import random

    rnd = random.Random(11)
    t = BackupTrace("r", tuple(ChunkRecord(rnd.randbytes(8), rnd.randint(1, 65536))
                               for _ in range(10_000)))
    text = format_trace(t)
    assert format_trace(parse_trace(io.StringIO(text), label="r")) == text


def test_single_snapshot_is_initial_image():
    base = dict(initial_file_count=20, initial_total_size=2**20, rng_seed=4, shared_pool_size=10)
    one = generate_synthetic(SyntheticCorpusParams(snapshots=1, **base))
    three = generate_synthetic(SyntheticCorpusParams(snapshots=3, **base))
    assert len(one) == 1 and one[0] == three[0]


def test_no_mutation_gives_identical_snapshots():
    p = SyntheticCorpusParams(initial_file_count=20, initial_total_size=2**20, snapshots=4,
                              file_pick_fraction=0.0, added_bytes_per_snapshot=0, rng_seed=5,
                              shared_pool_size=10)
    corpus = generate_synthetic(p)
    assert all(t.chunks == corpus[0].chunks for t in corpus)


def test_derived_chunks_are_inherited_or_fresh(small_corpus):
    seen = set()
    for prev, cur in zip(small_corpus, small_corpus[1:]):
        seen |= set(prev.unique())
        parent = set(prev.unique())
        for fp in cur.unique():
            assert fp in parent or fp not in seen


def test_default_corpus_dedup_ratio_about_ten():
    from dedupfa.metrics import corpus_dedup_ratio

    corpus = generate_synthetic(SyntheticCorpusParams())
    assert len(corpus) == 11
    assert 7.0 <= corpus_dedup_ratio(corpus) <= 13.0


def test_chunk_file_invariants():
    import random

    data = random.Random(3).randbytes(500_000)
    t = chunk_file(data)
    assert t.logical_bytes == len(data)
    assert all(2048 <= c.size <= 65536 for c in t.chunks[:-1])
    assert chunk_file(data) == t
    assert len(chunk_file(b"")) == 0


def test_front_insertion_keeps_most_chunks():
    import random

    rnd = random.Random(4)
    data = rnd.randbytes(1_000_000)
    a = chunk_file(data)
    b = chunk_file(rnd.randbytes(1024) + data)
    kept = sum(1 for fp in a.fingerprints if fp in set(b.fingerprints))
    assert kept / len(a) >= 0.9
