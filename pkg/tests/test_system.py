"""System reliability tests: link logic, event classification, and the
exhaustive enumeration oracle."""

from itertools import combinations, product

import numpy as np
import pytest

from lcplan.system import (
    EventConsistencyError,
    SystemEvent,
    Topology,
    classify_outcome,
    default_topology,
    link_failure_probs,
    system_event_distribution,
)


@pytest.fixture(scope="module")
def topo():
    return default_topology()


def enumeration_oracle(link_probs, topology):
    """Event distribution by summing Bernoulli products over all link-state
    patterns, classified independently."""
    p = np.asarray(link_probs, dtype=float)
    dist = np.zeros(4)
    for states in product((False, True), repeat=len(p)):
        weight = 1.0
        for pi, down in zip(p, states):
            weight *= pi if down else 1.0 - pi
        dist[int(classify_outcome(states, topology))] += weight
    return dist


class TestTopology:
    def test_default_layout(self, topo):
        assert topo.n_components == 10
        assert topo.links == (
            frozenset({0, 1, 2}),
            frozenset({3, 4}),
            frozenset({5, 6}),
            frozenset({7, 8, 9}),
        )
        assert topo.type_labels[2] == topo.type_labels[3] == "III"
        assert topo.type_labels[7] == topo.type_labels[8] == "III"

    def test_every_component_covered(self):
        with pytest.raises(ValueError):
            Topology(
                (frozenset({0, 2}),), (frozenset({0}),), ("I", "I", "I")
            )  # component 1 unassigned

    def test_bad_cut_set(self):
        with pytest.raises(ValueError):
            Topology((frozenset({0}),), (frozenset({5}),), ("I",))


class TestLinkFailureProbs:
    def test_all_zero(self, topo):
        assert np.array_equal(link_failure_probs(np.zeros(10), topo), np.zeros(4))

    def test_certain_component_fails_link(self, topo):
        probs = np.zeros(10)
        probs[3] = 1.0  # component 4 sits in link 2
        assert link_failure_probs(probs, topo)[1] == 1.0

    def test_series_complement_product(self, topo):
        probs = np.full(10, 0.1)
        link_p = link_failure_probs(probs, topo)
        assert link_p[0] == pytest.approx(1 - 0.9**3, abs=1e-15)
        # Cross-check by enumerating the 2^3 component outcomes of link 1.
        total = 0.0
        for states in product((False, True), repeat=3):
            weight = np.prod([0.1 if s else 0.9 for s in states])
            if any(states):
                total += weight
        assert link_p[0] == pytest.approx(total, abs=1e-15)
        assert link_p[0] == pytest.approx(0.271, abs=1e-12)


class TestClassifyOutcome:
    def test_no_failures(self, topo):
        assert classify_outcome((False,) * 4, topo) is SystemEvent.E0

    def test_first_cut_pair(self, topo):
        assert classify_outcome((True, False, True, False), topo) is SystemEvent.FS

    def test_second_cut_pair(self, topo):
        assert classify_outcome((False, True, False, True), topo) is SystemEvent.FS

    def test_two_links_without_cut(self, topo):
        assert classify_outcome((True, True, False, False), topo) is SystemEvent.E2
        # Cross-check against the direct cut-set reading of the oracle.
        failed = {0, 1}
        assert not any(cut <= failed for cut in topo.cut_sets)

    def test_single_failures(self, topo):
        for i in range(4):
            states = [j == i for j in range(4)]
            assert classify_outcome(states, topo) is SystemEvent.E1

    def test_exhaustive_against_cut_definition(self, topo):
        for states in product((False, True), repeat=4):
            failed = {i for i, s in enumerate(states) if s}
            event = classify_outcome(states, topo)
            is_cut = ({0, 2} <= failed) or ({1, 3} <= failed)
            if is_cut:
                assert event is SystemEvent.FS
            elif len(failed) == 0:
                assert event is SystemEvent.E0
            elif len(failed) == 1:
                assert event is SystemEvent.E1
            else:
                assert event is SystemEvent.E2


class TestEventDistribution:
    def test_zero_probs(self, topo):
        assert np.array_equal(
            system_event_distribution(np.zeros(4), topo), [1.0, 0.0, 0.0, 0.0]
        )

    def test_all_certain(self, topo):
        dist = system_event_distribution(np.ones(4), topo)
        assert dist[SystemEvent.FS] == pytest.approx(1.0, abs=1e-15)

    def test_uniform_tenth(self, topo):
        dist = system_event_distribution(np.full(4, 0.1), topo)
        assert dist[SystemEvent.FS] == pytest.approx(0.0199, abs=1e-15)
        assert dist[SystemEvent.E0] == pytest.approx(0.6561, abs=1e-15)
        assert dist[SystemEvent.E1] == pytest.approx(0.2916, abs=1e-15)
        assert dist[SystemEvent.E2] == pytest.approx(0.0324, abs=1e-15)

    def test_matches_enumeration_oracle(self, topo):
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(300):
            p = rng.random(4)
            dist = system_event_distribution(p, topo)
            ref = enumeration_oracle(p, topo)
            worst = max(worst, float(np.max(np.abs(dist - ref))))
            assert abs(dist.sum() - 1.0) <= 1e-12
        assert worst <= 1e-12

    def test_monotone_in_link_probs(self, topo):
        rng = np.random.default_rng(9)
        for _ in range(100):
            p = rng.random(4)
            base = system_event_distribution(p, topo)[SystemEvent.FS]
            for i in range(4):
                bumped = p.copy()
                bumped[i] = min(1.0, bumped[i] + rng.random() * (1 - bumped[i]))
                assert (
                    system_event_distribution(bumped, topo)[SystemEvent.FS]
                    >= base - 1e-15
                )

    def test_non_default_topology_against_oracle(self):
        # Two links, one cut set requiring both down.
        topo2 = Topology(
            (frozenset({0, 1}), frozenset({2, 3})),
            (frozenset({0, 1}),),
            ("III",) * 4,
        )
        rng = np.random.default_rng(10)
        for _ in range(100):
            p = rng.random(2)
            dist = system_event_distribution(p, topo2)
            ref = enumeration_oracle(p, topo2)
            assert np.max(np.abs(dist - ref)) <= 1e-12

    def test_invalid_probs_rejected(self, topo):
        with pytest.raises(ValueError):
            system_event_distribution(np.array([0.5, 1.5, 0.0, 0.0]), topo)
