"""Network topology, link failures, and system event probabilities.

A link is a series subsystem: it fails if at least one of its components is
failed. The system fails when any cut set of links is jointly down. The
four mutually exclusive system events are E0 (all links available), E1
(exactly one link failed), E2 (two or more links failed without system
failure) and FS (system failure).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from itertools import combinations

import numpy as np

N_EVENTS = 4


class SystemEvent(IntEnum):
    E0 = 0
    E1 = 1
    E2 = 2
    FS = 3


class EventConsistencyError(ValueError):
    """The event probabilities failed an exact consistency identity."""


@dataclass(frozen=True)
class Topology:
    """Link membership, system cut sets, and component deterioration types.

    ``links`` holds 0-based component indices per link; ``cut_sets`` holds
    0-based link indices whose joint failure disconnects the system;
    ``type_labels`` names each component's deterioration severity.
    """

    links: tuple[frozenset[int], ...]
    cut_sets: tuple[frozenset[int], ...]
    type_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(frozenset(l) for l in self.links))
        object.__setattr__(self, "cut_sets", tuple(frozenset(c) for c in self.cut_sets))
        object.__setattr__(self, "type_labels", tuple(self.type_labels))
        if not self.links or any(not l for l in self.links):
            raise ValueError("topology needs at least one non-empty link")
        n = self.n_components
        covered = set().union(*self.links)
        if covered != set(range(n)):
            raise ValueError("every component must belong to at least one link")
        if len(self.type_labels) != n:
            raise ValueError("one deterioration type label per component required")
        n_links = len(self.links)
        if not self.cut_sets or any(not c for c in self.cut_sets) or any(
            not all(0 <= i < n_links for i in c) for c in self.cut_sets
        ):
            raise ValueError("cut sets must be non-empty sets of valid link indices")

    @property
    def n_components(self) -> int:
        return 1 + max(max(l) for l in self.links)

    @property
    def n_links(self) -> int:
        return len(self.links)


@lru_cache(maxsize=64)
def _tables(topology: Topology):
    """Precompiled per-topology structure for the event calculus."""
    link_members = tuple(tuple(sorted(l)) for l in topology.links)
    # Inclusion-exclusion terms for Pr(FS): (sign, link indices of the union).
    ie_terms = []
    cuts = topology.cut_sets
    for r in range(1, len(cuts) + 1):
        sign = 1.0 if r % 2 == 1 else -1.0
        for subset in combinations(cuts, r):
            ie_terms.append((sign, tuple(sorted(frozenset().union(*subset)))))
    # Which single-link-down patterns count as E1 (i.e. are not a cut).
    single_ok = tuple(
        not any(cut <= {i} for cut in cuts) for i in range(topology.n_links)
    )
    return link_members, tuple(ie_terms), single_ok


def default_topology() -> Topology:
    """The 10-component, 4-link reference system.

    Connectivity is lost when links (1 and 3) or (2 and 4) are jointly
    down. Components 3, 4, 8, 9 (1-based) are the most aggressively
    deteriorating ones (Type III); 6 and 7 are Type II; the rest Type I.
    """
    links = (
        frozenset({0, 1, 2}),
        frozenset({3, 4}),
        frozenset({5, 6}),
        frozenset({7, 8, 9}),
    )
    cut_sets = (frozenset({0, 2}), frozenset({1, 3}))
    type_labels = ("I", "I", "III", "III", "I", "II", "II", "III", "III", "I")
    return Topology(links, cut_sets, type_labels)


def link_failure_probs(
    component_failure_probs: np.ndarray, topology: Topology
) -> np.ndarray:
    """Per-link failure probability from independent component failure masses."""
    members, _, _ = _tables(topology)
    p = component_failure_probs
    out = np.empty(len(members))
    for i, link in enumerate(members):
        survive = 1.0
        for c in link:
            survive *= 1.0 - p[c]
        out[i] = 1.0 - survive
    return out


def classify_outcome(link_states, topology: Topology) -> SystemEvent:
    """Classify a realized link up/down pattern (True = link failed)."""
    failed = {i for i, down in enumerate(link_states) if down}
    if any(cut <= failed for cut in topology.cut_sets):
        return SystemEvent.FS
    if len(failed) == 0:
        return SystemEvent.E0
    if len(failed) == 1:
        return SystemEvent.E1
    return SystemEvent.E2


def system_failure_prob(link_probs, topology: Topology) -> float:
    """Exact Pr(FS) by inclusion-exclusion over the cut sets."""
    _, ie_terms, _ = _tables(topology)
    total = 0.0
    for sign, joint in ie_terms:
        term = 1.0
        for i in joint:
            term *= link_probs[i]
        total += sign * term
    return total


def system_event_distribution(
    link_probs: np.ndarray, topology: Topology
) -> np.ndarray:
    """Exact distribution over (E0, E1, E2, FS) given independent link failures."""
    members, ie_terms, single_ok = _tables(topology)
    n = len(members)
    p = [float(x) for x in link_probs]
    if len(p) != n:
        raise ValueError(f"expected {n} link probabilities, got {len(p)}")
    if any(x < 0.0 or x > 1.0 for x in p):
        raise ValueError("link failure probabilities must lie in [0, 1]")
    q = [1.0 - x for x in p]
    pr_fs = 0.0
    for sign, joint in ie_terms:
        term = 1.0
        for i in joint:
            term *= p[i]
        pr_fs += sign * term
    pr_e0 = math.prod(q)
    pr_e1 = 0.0
    for i in range(n):
        if single_ok[i]:
            term = p[i]
            for j in range(n):
                if j != i:
                    term *= q[j]
            pr_e1 += term
    pr_e2 = 1.0 - pr_e0 - pr_e1 - pr_fs
    if pr_e2 < -1e-12:
        raise EventConsistencyError(f"Pr(E2) computed as {pr_e2}")
    return np.array([pr_e0, pr_e1, max(pr_e2, 0.0), pr_fs])
