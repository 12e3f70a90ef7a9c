from __future__ import annotations

import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfforensics.dsl import parse_case
from selfforensics.model import (
    FALSE,
    INF,
    TRUE,
    WILDCARD,
    Cmp,
    EventIs,
    Observation,
    ObservationSequence,
    Run,
    matches_sequence,
)
from selfforensics.reconstruct import (
    EngineError,
    Product,
    ProductConfig,
    agrees,
    compile_story,
    cumulative_weight,
    explore,
    psi,
    psi_inverse,
    rank_theories,
    reconstruct,
)

from .conftest import CASES
from .oracles import all_partitions, all_runs, brute_match, brute_reconstruct, random_instance, random_points

P = Cmp("p", "==", 1)
Q = Cmp("q", "==", 1)


def seq(name, *obs):
    return ObservationSequence(name, tuple(obs))


def run_set(result):
    return {(e.run.states, e.run.events) for e in result}


class TestCompileStory:
    def test_wildcard_accepts_everything(self):
        a = compile_story(seq("w", WILDCARD))
        assert a.accepts([])
        assert a.accepts([({}, None)] * 5)

    def test_exact_window(self):
        a = compile_story(seq("x", Observation(P, 2, 0)))
        yes, no = ({"p": 1}, None), ({"p": 0}, None)
        assert a.accepts([yes, yes])
        assert not a.accepts([yes])
        assert not a.accepts([yes, yes, yes])
        assert not a.accepts([yes, no])

    def test_two_windows_against_brute_force(self):
        os = seq("pq", Observation(P, 1, 1), Observation(Q, 1, 0))
        a = compile_story(os)
        alphabet = [{"p": 1, "q": 0}, {"p": 0, "q": 1}]
        accepted = set()
        for n in range(5):
            for word in itertools.product(range(2), repeat=n):
                pts = [(alphabet[i], None) for i in word]
                assert a.accepts(pts) == brute_match(os, pts)
                if a.accepts(pts):
                    accepted.add(word)
        # P;Q or P;P;Q and nothing else
        assert accepted == {(0, 1), (0, 0, 1)}

    def test_state_count_bound(self):
        os = seq("b", Observation(P, 2, 3), Observation(Q, 1, INF), WILDCARD)
        a = compile_story(os)
        assert len(a.states()) == (2 + 3 + 1) + (1 + 1) + (0 + 1) + 1

    def test_equivalence_random(self):
        rng = random.Random(3)
        for seed in range(300):
            model, seqs, _ = random_instance(seed)
            for os in seqs:
                pts = random_points(rng, model, rng.randint(0, 8))
                assert compile_story(os).accepts(pts) == matches_sequence(os, pts) == brute_match(os, pts)


class TestPsi:
    def test_initial_choice_with_wildcard(self, m1):
        product = Product(m1, [seq("w", WILDCARD)])
        config = psi(product, product.initial(), (None, "A"))
        assert config.position == "A" and not config.dead

    def test_counter_exhaustion_gives_dead_config(self, m1):
        product = Product(m1, [seq("g", Observation(EventIs("go"), 1, 0))])
        at_a = psi(product, product.initial(), (None, "A"))
        assert at_a.dead  # the initial point carries no event

        product = Product(m1, [seq("g", Observation(TRUE, 1, 0))])
        at_a = psi(product, product.initial(), (None, "A"))
        assert product.accepting(at_a)
        past = psi(product, at_a, ("stay", "A"))
        assert past.dead
        assert past.stories == (frozenset(),)

    def test_counter_advances(self):
        case = parse_case(
            "model M { fields { power: int } state A { power = 1 } events stay; trans A -stay-> A; init A; }"
        )
        product = Product(case.model("M"), [seq("p", Observation(Cmp("power", "==", 1), 2, 0))])
        c1 = psi(product, product.initial(), (None, "A"))
        assert (0, 1) in c1.stories[0]
        c2 = psi(product, c1, ("stay", "A"))
        assert (0, 2) in c2.stories[0] and (0, 1) not in c2.stories[0]
        assert product.accepting(c2)

    def test_illegal_choice(self, m1):
        product = Product(m1, [seq("w", WILDCARD)])
        with pytest.raises(EngineError):
            psi(product, product.initial(), (None, "B"))
        at_a = psi(product, product.initial(), (None, "A"))
        with pytest.raises(EngineError):
            psi(product, at_a, ("land", "B"))


class TestPsiInverse:
    def test_duality_on_m1(self, m1):
        graph = explore(Product(m1, [seq("t", Observation(TRUE, 3, 0))]), 4)
        for config, outs in graph.forward.items():
            for choice, nxt in outs:
                assert (config, choice) in psi_inverse(graph, nxt)
                assert psi(graph.product, config, choice) == nxt
        assert graph.edges() == graph.reverse_edges()

    def test_initial_has_no_predecessors(self, m1):
        product = Product(m1, [seq("w", WILDCARD)])
        graph = explore(product, 2)
        assert psi_inverse(graph, product.initial()) == frozenset()

    def test_accepting_predecessors_at_point_three(self, m1):
        # oracle: distinct (two-point prefix, last step) among accepted three-point runs
        os = seq("seq1", Observation(TRUE, 3, 0))
        runs = [r for r in all_runs(m1, 2) if len(r[0]) == 3]
        expected = {(r[0][:2], r[1][-1], r[0][-1]) for r in runs}
        assert len(expected) == 2

        product = Product(m1, [os])
        graph = explore(product, 2)
        accepting = [c for c in graph.forward if product.accepting(c)]
        assert sorted(c.position for c in accepting) == ["A", "B"]
        preds = set().union(*(psi_inverse(graph, c) for c in accepting))
        assert len(preds) == 2
        assert {choice for _, choice in preds} == {("stay", "A"), ("go", "B")}

    def test_unknown_config(self, m1):
        graph = explore(Product(m1, [seq("w", WILDCARD)]), 1)
        with pytest.raises(EngineError):
            psi_inverse(graph, ProductConfig("B", (frozenset({(7, 7)}),)))


class TestReconstruct:
    def test_m1_two_explanations(self, m1_case, m1):
        es = m1_case.resolve("E1")
        expected = brute_reconstruct(m1, es, 2)
        assert expected == {(("A", "A", "A"), ("stay", "stay")), (("A", "A", "B"), ("stay", "go"))}
        result = reconstruct(m1, es, 2)
        assert run_set(result) == expected
        # shortest first, then (event, state) order: "go" < "stay"
        assert [str(e.run) for e in result] == ["A --stay--> A --go--> B", "A --stay--> A --stay--> A"]
        for e in result:
            assert e.length == 3 == e.run.length + 1
            assert e.partitions == (("seq1", ((0, 3),)),)

    def test_unsatisfiable(self, m1):
        assert len(reconstruct(m1, [seq("f", Observation(FALSE, 1, 0))], 4)) == 0

    def test_zero_length(self, m1):
        result = reconstruct(m1, [seq("w", WILDCARD)], 0)
        assert [e.run for e in result] == [Run(("A",), ())]

    def test_limit_and_truncation(self, m1):
        full = reconstruct(m1, [seq("w", WILDCARD)], 3)
        assert len(full) == 1 + 2 + 2 + 2 and not full.truncated
        cut = reconstruct(m1, [seq("w", WILDCARD)], 3, limit=3)
        assert cut.truncated and list(cut) == list(full)[:3]
        exact = reconstruct(m1, [seq("w", WILDCARD)], 3, limit=7)
        assert not exact.truncated

    def test_order_is_length_then_lexicographic(self):
        spec = parse_case((CASES / "nondet.case").read_text())
        model = spec.model("relay")
        result = reconstruct(model, [seq("w", WILDCARD)], 3)
        keys = [(e.run.length, list(zip(e.run.events, e.run.states[1:]))) for e in result]
        assert keys == sorted(keys)

    def test_partitions_are_valid(self):
        spec = parse_case((CASES / "pump.case").read_text())
        model = spec.model("pump")
        es = spec.resolve("pressure_drop")
        result = reconstruct(model, es, 6)
        assert len(result) > 0
        for e in result:
            pts = e.run.points(model)
            for os, (name, ranges) in zip(es, e.partitions):
                assert name == os.name
                lengths = tuple(b - a for a, b in ranges)
                assert lengths in all_partitions(os, pts)
            assert e.run.is_valid(model)


class TestAgrees:
    def test_m1_theories(self, m1_case, m1):
        es = m1_case.resolve("E1")
        t1 = seq("T1", WILDCARD, Observation(EventIs("go"), 1, 0, "0.9"))
        t2 = seq("T2", WILDCARD, Observation(EventIs("land"), 1, 0, "0.9"))
        # brute force: some run matched by E1 and T1, none by T2
        assert brute_reconstruct(m1, [*es, t1], 2) == {(("A", "A", "B"), ("stay", "go"))}
        assert brute_reconstruct(m1, [*es, t2], 2) == set()
        ok, witness = agrees(m1, es, t1, 2)
        assert ok and str(witness.run) == "A --stay--> A --go--> B"
        assert agrees(m1, es, t2, 2) == (False, None)

    def test_wildcard_theory(self, m1_case, m1):
        es = m1_case.resolve("E1")
        assert agrees(m1, es, seq("w", WILDCARD), 2)[0] == bool(reconstruct(m1, es, 2))
        assert agrees(m1, es, seq("w", WILDCARD), 1)[0] is False

    def test_definitional_identity(self):
        for seed in range(60):
            model, seqs, max_len = random_instance(seed)
            theory = seqs[-1]
            evidence = seqs[:-1]
            a = agrees(model, evidence, theory, max_len)[0]
            b = agrees(model, [*evidence, theory], seq("w", WILDCARD), max_len)[0]
            assert a == b


class TestRank:
    def setup_method(self):
        self.spec = parse_case((CASES / "brief_example.case").read_text())
        self.model = self.spec.model("M1x")
        self.es = self.spec.resolve("incident")

    def test_long_theory_first(self):
        t_long, t_short = self.spec.sequence("T_long"), self.spec.sequence("T_short")
        # both verified to agree by brute force
        assert brute_reconstruct(self.model, [*self.es, t_long], 4)
        assert brute_reconstruct(self.model, [*self.es, t_short], 4)
        ranked = rank_theories(self.model, self.es, [t_short, t_long], 4)
        assert [r.name for r in ranked] == ["T_long", "T_short"]

    def test_weight_breaks_ties(self):
        a = seq("a", Observation(TRUE, 0, INF, "0.9"), Observation(TRUE, 0, 0, "0.9"))
        b = seq("b", Observation(TRUE, 0, INF, "0.5"), Observation(TRUE, 0, 0, "0.5"))
        assert cumulative_weight(a) == Fraction(18, 10) and cumulative_weight(b) == 1
        assert [r.name for r in rank_theories(self.model, self.es, [b, a], 4)] == ["a", "b"]

    def test_declaration_order_on_full_tie(self):
        a = seq("a", WILDCARD)
        b = seq("b", WILDCARD)
        assert [r.name for r in rank_theories(self.model, self.es, [b, a], 4)] == ["b", "a"]

    def test_non_agreeing_never_outranks(self):
        bad = seq("bad", *[Observation(EventIs("land"), 1, 0, 1)] * 5)
        weak = seq("weak", Observation(TRUE, 0, INF, 0))
        ranked = rank_theories(self.model, self.es, [bad, weak], 4, "sum")
        assert [(r.name, r.agrees) for r in ranked] == [("weak", True), ("bad", False)]

    @pytest.mark.parametrize("mode,expected", [("sum", Fraction(9, 5)), ("product", Fraction(27, 125)),
                                               ("min", Fraction(3, 5))])
    def test_modes(self, mode, expected):
        ranked = rank_theories(self.model, self.es, [self.spec.sequence("T_long")], 4, mode)
        assert ranked[0].weight == expected and ranked[0].mode == mode

    def test_errors(self):
        with pytest.raises(ValueError):
            rank_theories(self.model, self.es, [], 4)
        with pytest.raises(ValueError):
            rank_theories(self.model, self.es, [self.spec.sequence("T_long")], 4, "median")


# --------------------------------------------------------------------------
# invariants on random small instances


def _weights_changed(seqs, rng):
    out = []
    for os in seqs:
        obs = tuple(Observation(o.prop, o.min, o.max, rng.choice([0, 1, "0.3"]), o.t) for o in os.observations)
        out.append(ObservationSequence(os.name, obs))
    return out


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**7))
def test_oracle_equivalence(seed):
    model, seqs, max_len = random_instance(seed)
    assert run_set(reconstruct(model, seqs, max_len)) == brute_reconstruct(model, seqs, max_len)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**7))
def test_monotone_in_bound_and_evidence(seed):
    model, seqs, max_len = random_instance(seed)
    longer = run_set(reconstruct(model, seqs, max_len + 1))
    base = run_set(reconstruct(model, seqs, max_len))
    assert base <= longer
    assert run_set(reconstruct(model, seqs[:1], max_len)) >= base


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**7))
def test_weight_neutrality(seed):
    model, seqs, max_len = random_instance(seed)
    reweighted = _weights_changed(seqs, random.Random(seed))
    assert run_set(reconstruct(model, reweighted, max_len)) == run_set(reconstruct(model, seqs, max_len))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**7))
def test_determinism(seed):
    model, seqs, max_len = random_instance(seed)
    a = [e.to_dict() for e in reconstruct(model, seqs, max_len)]
    b = [e.to_dict() for e in reconstruct(model, seqs, max_len)]
    assert a == b
