import io

import pytest

from dedupfa.attacks import (
    CIPHERTEXT_ONLY,
    KNOWN_PLAINTEXT,
    AttackParams,
    InferredPairSet,
    advanced_locality_attack,
    basic_attack,
    locality_attack,
    run_attack,
    sample_leakage,
)
from dedupfa.freq import InferredPair
from dedupfa.metrics import inference_rate
from dedupfa.trace import BackupTrace, ChunkRecord

from .conftest import fp_of, make_trace

M_SEQ = ["M1", "M2", "M1", "M2", "M3", "M4", "M2", "M3", "M4"]
C_SEQ = ["C1", "C2", "C5", "C2", "C1", "C2", "C3", "C4", "C2", "C3", "C4", "C4"]
UNBOUNDED = 10**9


def example_traces():
    M = make_trace(M_SEQ, label="M")
    C = make_trace(C_SEQ, label="C")
    gt = {fp_of(f"C{i}"): fp_of(f"M{i}") for i in range(1, 6)}
    return C, M, gt


def test_locality_on_the_worked_example():
    C, M, gt = example_traces()
    T = locality_attack(C, M, AttackParams(u=1, v=1, w=UNBOUNDED))
    expected = {InferredPair(fp_of(f"C{i}"), fp_of(f"M{i}")) for i in range(1, 5)}
    assert T.as_set() == expected
    assert inference_rate(T, gt, C) == pytest.approx(0.8)
    # C2 is the seed, the rest are reached through neighbours
    assert T.provenance[0].cipher == fp_of("C2") and T.provenance[0].side == "seed"


def test_basic_on_the_worked_example():
    C, M, gt = example_traces()
    T = basic_attack(C, M)
    assert T[fp_of("C2")] == fp_of("M2")
    assert len(T) == 4  # min(|C unique|, |M unique|)


def test_basic_on_disjoint_traces_infers_nothing():
    C = make_trace("abcab", label="C")
    M = make_trace("xyzxy", label="M")
    gt = {fp_of(c): fp_of(c.upper()) for c in "abc"}
    assert inference_rate(basic_attack(C, M), gt, C) == 0.0


def test_queue_bound_limits_expansion():
    C, M, gt = example_traces()
    full = locality_attack(C, M, AttackParams(u=1, v=1, w=UNBOUNDED))
    tiny = locality_attack(C, M, AttackParams(u=1, v=1, w=1))
    assert len(tiny) <= len(full)


def test_known_plaintext_seeds_from_leak():
    C, M, gt = example_traces()
    leak = [InferredPair(fp_of("C3"), fp_of("M3"))]
    T = locality_attack(C, M, AttackParams(u=1, v=1, w=UNBOUNDED, mode=KNOWN_PLAINTEXT), leak)
    assert T.provenance[0].side == "leak"
    assert T[fp_of("C3")] == fp_of("M3")
    assert inference_rate(T, gt, C) >= 0.4


def test_leaked_pair_outside_aux_is_kept_but_not_expanded():
    C, M, gt = example_traces()
    leak = [InferredPair(fp_of("C5"), fp_of("M5"))]  # M5 never occurs in M
    T = locality_attack(C, M, AttackParams(v=1, mode=KNOWN_PLAINTEXT), leak)
    assert T.as_set() == {InferredPair(fp_of("C5"), fp_of("M5"))}


def test_mode_and_leak_must_agree():
    C, M, _ = example_traces()
    with pytest.raises(ValueError):
        locality_attack(C, M, AttackParams(mode=KNOWN_PLAINTEXT))
    with pytest.raises(ValueError):
        locality_attack(C, M, AttackParams(mode=CIPHERTEXT_ONLY),
                        [InferredPair(fp_of("C1"), fp_of("M1"))])


def test_attack_params_validate():
    with pytest.raises(ValueError):
        AttackParams(u=0)
    with pytest.raises(ValueError):
        AttackParams(mode="chosen-plaintext")


def test_advanced_separates_by_size():
    # two chunks with equal neighbour counts; only their sizes tell them apart
    M = BackupTrace("M", (ChunkRecord(b"mmmmmmm0", 64), ChunkRecord(b"mmmmmmmA", 4000),
                          ChunkRecord(b"mmmmmmm0", 64), ChunkRecord(b"mmmmmmmB", 100)))
    C = BackupTrace("C", (ChunkRecord(b"ccccccc0", 64), ChunkRecord(b"ccccccc9", 4000),
                          ChunkRecord(b"ccccccc0", 64), ChunkRecord(b"ccccccc1", 100)))
    gt = {b"ccccccc0": b"mmmmmmm0", b"ccccccc9": b"mmmmmmmA", b"ccccccc1": b"mmmmmmmB"}
    plain = locality_attack(C, M, AttackParams(v=2))
    adv = advanced_locality_attack(C, M, AttackParams(v=2))
    assert inference_rate(adv, gt, C) == 1.0
    assert inference_rate(plain, gt, C) < 1.0


def test_sample_leakage_count():
    n = 100_000
    target = BackupTrace("t", tuple(ChunkRecord(i.to_bytes(8, "big"), 10) for i in range(n)))
    gt = {c.fp: c.fp[::-1] for c in target.chunks}
    leak = sample_leakage(gt, target, 0.002, seed=1)
    assert len(leak) == 200
    assert leak.leakage_rate == pytest.approx(0.002)
    assert all(gt[c] == m for c, m in leak.pairs)
    assert sample_leakage(gt, target, 0.002, seed=1) == leak


def test_sample_leakage_rejects_bad_rate():
    with pytest.raises(ValueError):
        sample_leakage({}, make_trace("a"), 1.5, 0)
    with pytest.raises(ValueError):
        sample_leakage({}, make_trace("a"), 1.0, 0)


def test_inferred_pair_set_first_wins_and_csv():
    T = InferredPairSet()
    assert T.add(b"c", b"m1")
    assert not T.add(b"c", b"m2")
    assert T[b"c"] == b"m1"
    sink = io.StringIO()
    T.write_csv(sink)
    assert sink.getvalue().splitlines() == ["cipher_fp,plain_fp,parent_fp,side,iteration",
                                            "63,6d31,,seed,0"]


def test_run_attack_dispatch():
    C, M, _ = example_traces()
    assert run_attack("basic", C, M).as_set() == basic_attack(C, M).as_set()
    with pytest.raises(ValueError):
        run_attack("nope", C, M)


def test_self_inference_with_distinct_frequencies():
    names = ["a"] * 5 + ["b"] * 4 + ["c"] * 3 + ["d"] * 2 + ["e"]
    M = make_trace(names, label="M")
    gt = {c.fp: c.fp for c in M.chunks}
    assert inference_rate(basic_attack(M, M), gt, M) == 1.0


def test_empty_aux_gives_empty_result():
    C, _, _ = example_traces()
    empty = make_trace([], label="M")
    assert len(locality_attack(C, empty)) == 0
    assert len(advanced_locality_attack(C, empty)) == 0


def test_tiny_queue_keeps_seed():
    C, M, _ = example_traces()
    T = locality_attack(C, M, AttackParams(u=1, v=1, w=1))
    assert (fp_of("C2"), fp_of("M2")) in T.as_set() and len(T) >= 1


def test_fixed_size_trace_advanced_equals_locality():
    C, M, _ = example_traces()
    for params in (AttackParams(v=1, w=UNBOUNDED), AttackParams(v=3)):
        assert (advanced_locality_attack(C, M, params).as_set()
                == locality_attack(C, M, params).as_set())


def test_leakage_edge_rates():
    target = make_trace(["a", "b", "c", "d"])
    gt = {c.fp: c.fp for c in target.chunks}
    assert len(sample_leakage(gt, target, 0.0, 1)) == 0
    assert {c for c, _ in sample_leakage(gt, target, 1.0, 1).pairs} == set(gt)
