"""
Centrality-weighted disruption probabilities and attack sampling.

Buses fail with a probability that grows linearly with their degree
centrality, lines with their edge betweenness. All failures are
independent Bernoulli events.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import SimpleGraph, connected_components, degree_centrality, edge_betweenness
from .microgrid import Microgrid


@dataclass(frozen=True)
class DisruptionProbabilities:
    p_bus: np.ndarray
    p_line: np.ndarray
    p_min: float = 0.01
    p_max: float = 0.2


@dataclass(frozen=True)
class AttackScenario:
    disrupted_buses: frozenset = frozenset()
    disrupted_lines: frozenset = frozenset()  # line indices into Microgrid.lines

    @property
    def is_empty(self) -> bool:
        return not self.disrupted_buses and not self.disrupted_lines

    def to_json_dict(self, mg: Microgrid) -> dict:
        return {
            "disrupted_buses": sorted(int(b) for b in self.disrupted_buses),
            "disrupted_lines": [list(mg.edges[k]) for k in sorted(self.disrupted_lines)],
        }

    @classmethod
    def from_json_dict(cls, d: dict, mg: Microgrid) -> "AttackScenario":
        index = {}
        for k, (u, v) in enumerate(mg.edges):
            index[(u, v)] = index[(v, u)] = k
        try:
            lines = frozenset(index[(int(u), int(v))] for u, v in d.get("disrupted_lines", []))
        except KeyError as exc:
            raise ValueError(f"unknown line {exc.args[0]}") from None
        return cls(frozenset(int(b) for b in d.get("disrupted_buses", [])), lines)


@dataclass
class DisruptedNetwork:
    """Survivors of an attack: bus ids, line indices and islands."""

    microgrid: Microgrid
    surviving_buses: list[int]
    surviving_lines: list[int]
    islands: list[list[int]] = field(default_factory=list)


def disruption_probabilities(mg: Microgrid, p_min: float = 0.01,
                             p_max: float = 0.2) -> DisruptionProbabilities:
    if not (0.0 <= p_min <= p_max <= 1.0):
        raise ValueError(f"need 0 <= p_min <= p_max <= 1, got ({p_min}, {p_max})")
    g = SimpleGraph.from_microgrid(mg)
    span = p_max - p_min
    p_bus = p_min + span * degree_centrality(g)
    p_line = p_min + span * edge_betweenness(g)
    return DisruptionProbabilities(p_bus, p_line, float(p_min), float(p_max))


def scenario_rng(base_seed: int, index: int) -> np.random.Generator:
    """Independent generator for scenario ``index``; order of evaluation is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed) & (2**64 - 1), int(index)]))


def sample_scenario(probs: DisruptionProbabilities, rng: np.random.Generator) -> AttackScenario:
    nb = len(probs.p_bus)
    u = rng.random(nb + len(probs.p_line))
    buses = np.flatnonzero(u[:nb] < probs.p_bus)
    lines = np.flatnonzero(u[nb:] < probs.p_line)
    return AttackScenario(frozenset(buses.tolist()), frozenset(lines.tolist()))


def apply_scenario(mg: Microgrid, s: AttackScenario) -> DisruptedNetwork:
    n = mg.n_buses
    bad = [b for b in s.disrupted_buses if not 0 <= b < n]
    bad += [k for k in s.disrupted_lines if not 0 <= k < len(mg.lines)]
    if bad:
        raise ValueError(f"scenario refers to unknown ids: {sorted(bad)}")

    buses = [b for b in range(n) if b not in s.disrupted_buses]
    lines = [
        k for k, (u, v) in enumerate(mg.edges)
        if k not in s.disrupted_lines and u not in s.disrupted_buses and v not in s.disrupted_buses
    ]
    g = SimpleGraph(n, mg.edges, check=False)
    islands = connected_components(g, s.disrupted_buses, s.disrupted_lines)
    return DisruptedNetwork(mg, buses, lines, islands)
