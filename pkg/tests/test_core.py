import itertools
import random

from hypothesis import given, strategies as st

from mmpaxos.core import (BOTTOM, ANY, NOOP, Configuration, Ordering, Round, command,
                          fast_configuration, flexible_configuration, majority_configuration,
                          round_compare, round_successor, validate_configuration)

from conftest import rnd

rounds = st.builds(Round, st.integers(0, 5), st.sampled_from(["a", "b", "c"]),
                   st.integers(0, 5)) | st.just(BOTTOM)


def test_round_compare_examples():
    assert round_compare(rnd(0, "a", 0), rnd(0, "a", 1)) is Ordering.LESS
    assert round_compare(rnd(1, "a", 0), rnd(1, "a", 0)) is Ordering.EQUAL
    assert round_compare(rnd(0, "b", 3), rnd(1, "a", 0)) is Ordering.LESS


def test_bottom_below_every_round():
    for r in [rnd(0, "a", 0), rnd(0, "", 0), rnd(7, "z", 9)]:
        assert round_compare(BOTTOM, r) is Ordering.LESS
        assert round_compare(r, BOTTOM) is Ordering.GREATER
    assert round_compare(BOTTOM, Round(-1, "zz", 4)) is Ordering.EQUAL


def test_successor_examples():
    assert round_successor(rnd(0, "a", 0)) == rnd(0, "a", 1)
    assert round_successor(rnd(3, "b", 7)) == rnd(3, "b", 8)


def test_successor_strictly_greater_for_random_rounds():
    rng = random.Random(7)
    for _ in range(1000):
        r = Round(rng.randrange(100), rng.choice("abcdef"), rng.randrange(100))
        s = round_successor(r)
        assert round_compare(r, s) is Ordering.LESS
        assert s.owner == r.owner


def test_round_compare_is_total_order_on_small_universe():
    universe = [BOTTOM] + [Round(c, o, s) for c in range(2) for o in "ab" for s in range(2)]
    for a, b in itertools.product(universe, repeat=2):
        ab, ba = round_compare(a, b), round_compare(b, a)
        assert ab == -ba
        assert (ab is Ordering.EQUAL) == (a == b)
    for a, b, c in itertools.product(universe, repeat=3):
        if round_compare(a, b) <= 0 and round_compare(b, c) <= 0:
            assert round_compare(a, c) <= 0


@given(rounds, rounds)
def test_round_compare_matches_tuple_order(a, b):
    expected = (a > b) - (a < b)
    assert round_compare(a, b) == expected


def _disjoint_pairs_oracle(p1, p2):
    # brute force over explicit subsets, independent of validate_configuration
    return sorted((tuple(sorted(q1)), tuple(sorted(q2)))
                  for q1 in p1 for q2 in p2 if not set(q1) & set(q2))


def test_majority_of_three_is_valid():
    c = majority_configuration("C", ["a1", "a2", "a3"])
    assert {len(q) for q in c.phase1_quorums} == {2}
    assert len(c.phase1_quorums) == 3
    assert validate_configuration(c).ok


def test_disjoint_singletons_rejected():
    c = Configuration("C", frozenset({"a1", "a2"}), frozenset({frozenset({"a1"})}),
                      frozenset({frozenset({"a2"})}))
    report = validate_configuration(c)
    assert not report.ok
    assert report.disjoint_pairs == [(("a1",), ("a2",))]


def test_four_acceptors_three_and_two_subsets():
    accs = ["a1", "a2", "a3", "a4"]
    c = flexible_configuration("C", accs, 3, 2)
    expected = _disjoint_pairs_oracle(c.phase1_quorums, c.phase2_quorums)
    # frozen from the brute-force oracle: 3 + 2 > 4, so no pair is disjoint
    assert expected == []
    report = validate_configuration(c)
    assert report.ok and report.disjoint_pairs == expected


def test_flexible_disjoint_pairs_match_oracle():
    accs = ["a1", "a2", "a3", "a4"]
    c = flexible_configuration("C", accs, 2, 2)
    report = validate_configuration(c)
    assert not report.ok
    assert sorted(report.disjoint_pairs) == _disjoint_pairs_oracle(c.phase1_quorums,
                                                                    c.phase2_quorums)
    assert len(report.disjoint_pairs) == 6


def test_majority_systems_valid_for_f_1_to_4():
    for f in range(1, 5):
        accs = [f"a{i}" for i in range(2 * f + 1)]
        assert validate_configuration(majority_configuration("C", accs)).ok


def test_subset_and_empty_checks():
    bad = Configuration("C", frozenset({"a1"}), frozenset({frozenset({"a9"})}),
                        frozenset({frozenset()}))
    report = validate_configuration(bad)
    assert not report.ok
    assert any("not a subset" in p for p in report.problems)
    assert any("empty phase 2 quorum" in p for p in report.problems)
    empty = Configuration("C", frozenset({"a1"}), frozenset(), frozenset())
    assert "phase 1 quorum family is empty" in validate_configuration(empty).problems


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))
def test_threshold_validity_matches_arithmetic(n, p1, p2):
    p1, p2 = min(p1, n), min(p2, n)
    c = flexible_configuration("C", [f"a{i}" for i in range(n)], p1, p2)
    assert validate_configuration(c).ok == (p1 + p2 > n)


def test_fast_configuration_is_valid():
    c = fast_configuration("F", ["f1", "f2"])
    assert validate_configuration(c).ok
    assert c.phase2_quorums == frozenset({frozenset({"f1", "f2"})})


def test_values():
    assert NOOP.is_noop and NOOP.payload == b""
    assert NOOP != command(b"")
    assert ANY.is_any
    assert command(b"x", "c1", 3) == command(b"x", "c1", 3)
