from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfforensics.model import (
    INF,
    TRUE,
    WILDCARD,
    And,
    Cmp,
    EventIs,
    Not,
    Observation,
    ObservationError,
    ObservationSequence,
    PropertyError,
    Run,
    blocks,
    eval_property,
    find_partition,
    make_observation,
    matches_sequence,
)

from .oracles import all_partitions, brute_match, holds, random_instance, random_points


def seq(*obs):
    return ObservationSequence("os", tuple(obs))


def power(values):
    pts = [({"power": v}, None if i == 0 else "tick") for i, v in enumerate(values)]
    return pts


POWER1 = Cmp("power", "==", 1)
POWER0 = Cmp("power", "==", 0)


class TestEvalProperty:
    def test_comparison(self):
        assert eval_property(Cmp("temp", ">", 100), ({"temp": 120}, None))

    def test_event_false_at_initial_point(self):
        assert not eval_property(EventIs("go"), ({"temp": 120}, None))

    def test_connectives(self):
        expr = And(Cmp("power", "==", 1), Not(EventIs("stop")))
        assert eval_property(expr, ({"power": 1}, "go"))
        assert not eval_property(expr, ({"power": 1}, "stop"))

    def test_missing_field(self):
        with pytest.raises(PropertyError):
            eval_property(Cmp("ghost", "==", 1), ({"power": 1}, None))


class TestMakeObservation:
    def test_wildcard(self):
        assert make_observation(TRUE, None, 0, INF, 1.0) == WILDCARD
        assert make_observation(TRUE, None, 0, INF, 1.0).is_wildcard

    def test_weight_out_of_range(self):
        with pytest.raises(ObservationError, match="w out of range") as exc:
            make_observation(POWER1, None, 1, 0, 1.5)
        assert exc.value.field == "w"

    @pytest.mark.parametrize("mn,mx,field", [(-1, 0, "min"), (0, -2, "max")])
    def test_negative_bounds(self, mn, mx, field):
        with pytest.raises(ObservationError) as exc:
            make_observation(POWER1, None, mn, mx, 1)
        assert exc.value.field == field

    def test_window(self):
        o = make_observation(POWER1, 1200, 2, 3, 0.9)
        assert o.t == 1200
        assert o.w == Fraction(9, 10)
        assert [k for k in range(8) if o.admits(k)] == [2, 3, 4, 5]


class TestMatchesSequence:
    def test_wildcard_matches_anything(self):
        for n in range(5):
            assert matches_sequence(seq(WILDCARD), power([1] * n))

    def test_exact_window_too_long(self):
        assert not matches_sequence(seq(Observation(TRUE, 3, 0)), power([1, 1]))

    def test_two_blocks(self):
        # brute force over all partitions: only (2, 1) fits [1, 1, 0]
        os = seq(Observation(POWER1, 2, 0), Observation(POWER0, 1, 0))
        assert all_partitions(os, power([1, 1, 0])) == [(2, 1)]
        assert all_partitions(os, power([1, 0, 0])) == []
        assert matches_sequence(os, power([1, 1, 0]))
        assert not matches_sequence(os, power([1, 0, 0]))

    def test_empty_block_allowed_when_min_zero(self):
        os = seq(Observation(POWER1, 0, 2), Observation(POWER0, 1, 0))
        assert find_partition(os, power([0])) == (0, 1)

    def test_order_sensitive(self):
        a, b = Observation(POWER1, 1, 0), Observation(POWER0, 1, 0)
        pts = power([1, 0])
        assert matches_sequence(seq(a, b), pts)
        assert not matches_sequence(seq(b, a), pts)

    def test_infinite_window(self):
        os = seq(Observation(POWER1, 1, INF))
        assert matches_sequence(os, power([1] * 7))
        assert not matches_sequence(os, power([]))


def test_blocks():
    assert blocks((2, 0, 3)) == [(0, 2), (2, 2), (2, 5)]


def test_run_points_and_str(m1):
    run = Run(("A", "A", "B"), ("stay", "go"))
    assert run.points(m1) == [({}, None), ({}, "stay"), ({}, "go")]
    assert str(run) == "A --stay--> A --go--> B"
    assert run.is_valid(m1)
    assert not Run(("B",), ()).is_valid(m1)


def test_matcher_agrees_with_brute_force_small():
    # every instance with <= 8 points and <= 4 observations
    rng = random.Random(7)
    checked = 0
    for seed in range(400):
        model, seqs, _ = random_instance(seed)
        extra = random_instance(seed + 10_000)[1]
        os = ObservationSequence("os", (seqs + extra)[0].observations[:4])
        for length in range(9):
            pts = random_points(rng, model, length)
            lengths = find_partition(os, pts)
            found = all_partitions(os, pts)
            assert (lengths is not None) == bool(found)
            if lengths is not None:
                assert lengths in found
                assert sum(lengths) == length
            checked += 1
    assert checked == 400 * 9


@st.composite
def sequences_and_points(draw):
    seed = draw(st.integers(0, 10**6))
    model, seqs, _ = random_instance(seed)
    rng = random.Random(seed)
    pts = random_points(rng, model, draw(st.integers(0, 8)))
    return model, seqs[0], pts


@settings(max_examples=200, deadline=None)
@given(sequences_and_points())
def test_partition_soundness_and_covering(case):
    _, os, pts = case
    lengths = find_partition(os, pts)
    if lengths is None:
        return
    assert sum(lengths) == len(pts)
    for o, (a, b) in zip(os.observations, blocks(lengths)):
        assert o.admits(b - a)
        assert all(holds(o.prop, *pts[j]) for j in range(a, b))


@settings(max_examples=200, deadline=None)
@given(sequences_and_points(), st.booleans())
def test_wildcard_identity(case, prepend):
    _, os, pts = case
    padded = seq(WILDCARD, *os.observations) if prepend else seq(*os.observations, WILDCARD)
    if matches_sequence(os, pts):
        assert matches_sequence(padded, pts)
    assert matches_sequence(padded, pts) == brute_match(padded, pts)


def test_timestamps_ordered():
    ok = seq(Observation(TRUE, 1, 0, 1, 5), Observation(TRUE, 1, 0, 1, 5))
    bad = seq(Observation(TRUE, 1, 0, 1, 9), Observation(TRUE, 1, 0, 1, 5))
    partial = seq(Observation(TRUE, 1, 0, 1, 9), Observation(TRUE, 1, 0))
    assert ok.timestamps_ordered()
    assert not bad.timestamps_ordered()
    assert partial.timestamps_ordered()
