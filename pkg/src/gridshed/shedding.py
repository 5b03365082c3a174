"""
Post-attack dispatch, load shedding rate and Monte Carlo ELSR.

Each surviving island is dispatched independently by a linear program
that maximises the served active load. Flows on a radial island follow
from the nodal injections (subtree sums), and each line's apparent power
limit ``I_rated * min(V_u, V_v)`` is enforced through eight tangent
half-planes of the circle ``P^2 + Q^2 <= c^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .attack import (AttackScenario, DisruptionProbabilities, apply_scenario,
                     disruption_probabilities, sample_scenario, scenario_rng)
from .microgrid import Microgrid, total_load

_ANGLES = np.arange(8) * np.pi / 4
OCT_COS = np.where(np.abs(np.cos(_ANGLES)) < 1e-12, 0.0, np.cos(_ANGLES))
OCT_SIN = np.where(np.abs(np.sin(_ANGLES)) < 1e-12, 0.0, np.sin(_ANGLES))


@dataclass
class ComponentProblem:
    """One connected island, indexed locally ``0..n-1``.

    ``edges`` holds ``(parent, child)`` pairs of a rooted orientation;
    ``subtree[e, b]`` is 1 when bus ``b`` lies below the child of edge ``e``.
    """

    bus_ids: list[int]
    p_load: np.ndarray
    q_load: np.ndarray
    gen_cap: np.ndarray
    v_mag: np.ndarray
    edges: list[tuple[int, int]]
    rated_current: np.ndarray
    subtree: np.ndarray = field(init=False)

    def __post_init__(self):
        n = len(self.bus_ids)
        if len(self.edges) != n - 1:
            raise ValueError("island must be a tree")
        children: list[list[int]] = [[] for _ in range(n)]
        parent = np.full(n, -1)
        for u, v in self.edges:
            children[u].append(v)
            parent[v] = u
        order = [0]
        for v in order:
            order.extend(children[v])
        if len(order) != n:
            raise ValueError("island edges are not a tree rooted at local bus 0")
        below = np.eye(n)
        for v in reversed(order[1:]):
            below[parent[v]] += below[v]
        self.subtree = np.array([below[v] for _, v in self.edges]).reshape(n - 1, n)

    @property
    def n(self) -> int:
        return len(self.bus_ids)

    @property
    def line_limits(self) -> np.ndarray:
        if not self.edges:
            return np.zeros(0)
        u, v = np.array(self.edges).T
        return self.rated_current * np.minimum(self.v_mag[u], self.v_mag[v])

    @classmethod
    def from_island(cls, mg: Microgrid, buses, arrays=None, adjacency=None) -> "ComponentProblem":
        """Build the problem for a connected set of surviving buses of ``mg``."""
        arrays = arrays if arrays is not None else mg.arrays()
        if adjacency is None:
            adjacency = _line_adjacency(mg)
        buses = list(buses)
        local = {b: i for i, b in enumerate(buses)}
        edges, rated = [], []
        seen = {buses[0]}
        queue = [buses[0]]
        for u in queue:
            for w, k in adjacency[u]:
                if w in local and w not in seen:
                    seen.add(w)
                    queue.append(w)
                    edges.append((local[u], local[w]))
                    rated.append(mg.lines[k].rated_current)
        idx = np.array(buses)
        return cls(buses, arrays["p_load"][idx], arrays["q_load"][idx], arrays["gen_cap"][idx],
                   arrays["v_mag"][idx], edges, np.array(rated, dtype=float))


@dataclass
class DispatchSolution:
    served_fraction: np.ndarray
    gen_output: np.ndarray
    q_gen: np.ndarray
    p_flow: np.ndarray
    q_flow: np.ndarray
    served_active_load: float
    objective_value: float
    lp_iterations: int = 0


@dataclass
class ElsrEstimate:
    mean: float
    std_error: float
    n_scenarios: int
    convergence: float | None = None  # relative change of the running mean over the last 100 scenarios


def _line_adjacency(mg: Microgrid):
    adj = [[] for _ in range(mg.n_buses)]
    for k, (u, v) in enumerate(mg.edges):
        adj[u].append((v, k))
        adj[v].append((u, k))
    return adj


def _flows(cp: ComponentProblem, s, g, qg):
    p_net = cp.p_load * s - g
    q_net = cp.q_load * s - qg
    return cp.subtree @ p_net, cp.subtree @ q_net


def solve_component_dispatch(cp: ComponentProblem, tol: float = simplex.TOL) -> DispatchSolution:
    n = cp.n
    gens = np.flatnonzero(cp.gen_cap > 0)
    zeros = np.zeros(n)
    if gens.size == 0:
        return DispatchSolution(zeros, zeros.copy(), zeros.copy(), np.zeros(n - 1),
                                np.zeros(n - 1), 0.0, 0.0)
    G = gens.size
    nv = n + 3 * G
    sl_s, sl_g, sl_qp, sl_qm = (slice(0, n), slice(n, n + G),
                               slice(n + G, n + 2 * G), slice(n + 2 * G, nv))
    cap = cp.gen_cap[gens]

    rows, rhs = [], []
    rows.append(np.eye(nv))
    rhs.append(np.concatenate([np.ones(n), cap, cap, cap]))

    if n > 1:
        sub = cp.subtree
        sub_g = sub[:, gens]
        limits = cp.line_limits
        oct_rows = np.zeros((8 * (n - 1), nv))
        for k in range(8):
            blk = oct_rows[k::8]
            ck, sk = OCT_COS[k], OCT_SIN[k]
            blk[:, sl_s] = ck * sub * cp.p_load + sk * sub * cp.q_load
            blk[:, sl_g] = -ck * sub_g
            blk[:, sl_qp] = -sk * sub_g
            blk[:, sl_qm] = sk * sub_g
        rows.append(oct_rows)
        rhs.append(np.repeat(limits, 8))

    A_eq = np.zeros((2, nv))
    A_eq[0, sl_s] = -cp.p_load
    A_eq[0, sl_g] = 1.0
    A_eq[1, sl_s] = -cp.q_load
    A_eq[1, sl_qp] = 1.0
    A_eq[1, sl_qm] = -1.0

    c = np.zeros(nv)
    c[sl_s] = -cp.p_load
    res = simplex.linprog(c, np.vstack(rows), np.concatenate(rhs), A_eq, np.zeros(2), tol=tol)
    if not res.success:
        raise simplex.SimplexError(f"dispatch LP ended with status {res.status!r}")

    x = res.x
    s = np.clip(x[sl_s], 0.0, 1.0)
    g = np.zeros(n)
    g[gens] = x[sl_g]
    qg = np.zeros(n)
    qg[gens] = x[sl_qp] - x[sl_qm]
    p_flow, q_flow = _flows(cp, s, g, qg)
    served = float(cp.p_load @ s)
    return DispatchSolution(s, g, qg, p_flow, q_flow, served, -res.fun, res.nit)


class LoadShedder:
    """Shed-rate evaluator bound to one microgrid, caching island dispatches.

    On a radial grid an island is fully determined by its bus set, so the
    cache key is the frozen set of bus ids.
    """

    def __init__(self, mg: Microgrid):
        self.mg = mg
        self.arrays = mg.arrays()
        self.adjacency = _line_adjacency(mg)
        self.total = total_load(mg)
        self._cache: dict[frozenset, float] = {}

    def served(self, island) -> float:
        key = frozenset(island)
        if key not in self._cache:
            if not np.any(self.arrays["gen_cap"][list(island)] > 0):
                self._cache[key] = 0.0
            else:
                cp = ComponentProblem.from_island(self.mg, island, self.arrays, self.adjacency)
                self._cache[key] = solve_component_dispatch(cp).served_active_load
        return self._cache[key]

    def shed_rate(self, s: AttackScenario) -> float:
        if self.total <= 0:
            return 0.0
        net = apply_scenario(self.mg, s)
        p = self.arrays["p_load"]
        unserved = sum(p[b] for b in s.disrupted_buses)
        for island in net.islands:
            unserved += p[island].sum() - self.served(island)
        return float(min(max(unserved / self.total, 0.0), 1.0))


def shed_rate(mg: Microgrid, s: AttackScenario) -> float:
    return LoadShedder(mg).shed_rate(s)


def estimate_elsr(mg: Microgrid, n_scenarios: int = 1000, base_seed: int = 123,
                  p_min: float = 0.01, p_max: float = 0.2,
                  probs: DisruptionProbabilities | None = None,
                  monitor: bool = False, return_rates: bool = False):
    """Monte Carlo estimate of the expected load shedding rate.

    Scenario ``i`` is drawn from its own generator seeded by
    ``(base_seed, i)``, so the estimate does not depend on evaluation order.
    With ``return_rates`` the per-scenario rates are returned as well.
    """
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be >= 1")
    if probs is None:
        probs = disruption_probabilities(mg, p_min, p_max)
    shedder = LoadShedder(mg)
    rates = np.array([
        shedder.shed_rate(sample_scenario(probs, scenario_rng(base_seed, i)))
        for i in range(n_scenarios)
    ])
    mean = math.fsum(rates) / n_scenarios
    se = float(rates.std(ddof=1) / math.sqrt(n_scenarios)) if n_scenarios > 1 else 0.0
    conv = None
    if monitor and n_scenarios > 100:
        prev = math.fsum(rates[:-100]) / (n_scenarios - 100)
        conv = abs(mean - prev) / max(abs(mean), 1e-12)
    est = ElsrEstimate(float(mean), se, int(n_scenarios), conv)
    return (est, rates) if return_rates else est


def node_vulnerability(mg: Microgrid, bus: int, shedder: LoadShedder | None = None) -> float:
    """Shed rate when exactly ``bus`` is disrupted."""
    if not 0 <= bus < mg.n_buses:
        raise ValueError(f"unknown bus id {bus}")
    shedder = shedder or LoadShedder(mg)
    return shedder.shed_rate(AttackScenario(frozenset([bus])))
