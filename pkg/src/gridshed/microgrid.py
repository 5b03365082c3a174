"""
Radial microgrid data model and random instance generation.

A microgrid is a tree of buses joined by lines. Every bus carries a load;
a fixed share of buses also host equally sized generators whose combined
capacity is a multiple of the total load.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class BusSpec:
    id: int
    voltage_mag: float
    p_load: float
    q_load: float
    gen_capacity: float = 0.0

    @property
    def is_generator(self) -> bool:
        return self.gen_capacity > 0.0


@dataclass(frozen=True)
class LineSpec:
    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    rated_current: float = 1.0


@dataclass(frozen=True)
class GenerationConfig:
    """Sampling ranges and sizes for :func:`generate_microgrid`.

    The default reactive range is ``[-0.1, 0]`` MVar. ``paper_literal_q``
    switches it to ``[-10, 0]``, which makes most line limits unsatisfiable.
    """

    n_buses: int = 33
    generator_fraction: float = 0.15
    capacity_ratio: float = 1.2
    voltage_range: tuple[float, float] = (0.95, 1.05)
    p_load_range: tuple[float, float] = (0.1, 0.5)
    q_load_range: tuple[float, float] = (-0.10, 0.0)
    resistance_range: tuple[float, float] = (0.01, 1.0)
    reactance_range: tuple[float, float] = (0.01, 1.0)
    rated_current: float = 1.0
    seed: int = 123
    paper_literal_q: bool = False

    def __post_init__(self):
        if self.paper_literal_q:
            object.__setattr__(self, "q_load_range", (-10.0, 0.0))
        self.check()

    def check(self) -> None:
        if int(self.n_buses) < 2:
            raise ValueError(f"n_buses must be >= 2, got {self.n_buses}")
        if not 0.0 < self.generator_fraction <= 1.0:
            raise ValueError("generator_fraction must lie in (0, 1]")
        if self.capacity_ratio <= 0.0:
            raise ValueError("capacity_ratio must be positive")
        if self.rated_current <= 0.0:
            raise ValueError("rated_current must be positive")
        for name in ("voltage_range", "p_load_range", "q_load_range",
                     "resistance_range", "reactance_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: ({lo}, {hi})")

    @property
    def n_generators(self) -> int:
        # half-up rounding, at least one generator
        return max(1, int(math.floor(self.generator_fraction * self.n_buses + 0.5)))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GenerationConfig":
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kwargs)


@dataclass(frozen=True)
class Microgrid:
    buses: tuple[BusSpec, ...]
    lines: tuple[LineSpec, ...]
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(ln.from_bus, ln.to_bus) for ln in self.lines]

    @property
    def generator_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.is_generator]

    def arrays(self) -> dict[str, np.ndarray]:
        """Column arrays of the bus parameters, indexed by bus id."""
        return {
            "v_mag": np.array([b.voltage_mag for b in self.buses]),
            "p_load": np.array([b.p_load for b in self.buses]),
            "q_load": np.array([b.q_load for b in self.buses]),
            "gen_cap": np.array([b.gen_capacity for b in self.buses]),
        }

    # -- serialization -------------------------------------------------------
    def to_json_dict(self) -> dict[str, Any]:
        return {
            "buses": [
                {"id": b.id, "v_mag": b.voltage_mag, "p_load": b.p_load,
                 "q_load": b.q_load, "gen_cap": b.gen_capacity}
                for b in self.buses
            ],
            "lines": [
                {"from": ln.from_bus, "to": ln.to_bus, "r": ln.resistance,
                 "x": ln.reactance, "i_rated": ln.rated_current}
                for ln in self.lines
            ],
            "meta": dict(self.metadata),
        }

    @classmethod
    def from_json_dict(cls, d: dict[str, Any]) -> "Microgrid":
        try:
            buses = tuple(
                BusSpec(int(b["id"]), float(b["v_mag"]), float(b["p_load"]),
                        float(b["q_load"]), float(b["gen_cap"]))
                for b in d["buses"]
            )
            lines = tuple(
                LineSpec(int(ln["from"]), int(ln["to"]), float(ln["r"]),
                         float(ln["x"]), float(ln["i_rated"]))
                for ln in d["lines"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed microgrid object: {exc!r}") from exc
        if [b.id for b in buses] != list(range(len(buses))):
            raise ValueError("bus ids must be 0..N-1 in order")
        return cls(buses, lines, dict(d.get("meta", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Microgrid":
        return cls.from_json_dict(json.loads(text))


def total_load(mg: Microgrid) -> float:
    """Sum of active load demand over all buses (MW)."""
    return float(sum(b.p_load for b in mg.buses))


def random_tree_edges(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Grow a random tree from root 0; node ``i`` attaches to a uniform earlier node."""
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def generate_microgrid(config: GenerationConfig) -> Microgrid:
    config.check()
    n = int(config.n_buses)
    rng = np.random.default_rng(config.seed)

    edges = random_tree_edges(n, rng)
    v_mag = rng.uniform(*config.voltage_range, size=n)
    p_load = rng.uniform(*config.p_load_range, size=n)
    q_load = rng.uniform(*config.q_load_range, size=n)
    r = rng.uniform(*config.resistance_range, size=n - 1)
    x = rng.uniform(*config.reactance_range, size=n - 1)

    n_gen = min(config.n_generators, n)
    gen_ids = rng.choice(n, size=n_gen, replace=False)
    gen_cap = np.zeros(n)
    gen_cap[gen_ids] = config.capacity_ratio * p_load.sum() / n_gen

    buses = tuple(
        BusSpec(i, float(v_mag[i]), float(p_load[i]), float(q_load[i]), float(gen_cap[i]))
        for i in range(n)
    )
    lines = tuple(
        LineSpec(u, v, float(r[k]), float(x[k]), float(config.rated_current))
        for k, (u, v) in enumerate(edges)
    )
    meta = {"seed": int(config.seed), "config": config.to_dict()}
    return Microgrid(buses, lines, meta)


@dataclass
class ValidationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    messages: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]

    def record(self, name: str, passed: bool, message: str = "") -> None:
        self.checks[name] = bool(passed)
        if message:
            self.messages[name] = message


def validate(mg: Microgrid, config: GenerationConfig | None = None,
             tol: float = 1e-9) -> ValidationReport:
    """Check topology, parameter ranges and generation adequacy.

    Parameter ranges come from ``config`` when given, otherwise from the
    config echoed in the microgrid metadata, otherwise the defaults.
    """
    from .graph import SimpleGraph, connected_components

    if config is None:
        echoed = mg.metadata.get("config")
        config = GenerationConfig.from_dict(echoed) if echoed else GenerationConfig(
            n_buses=max(mg.n_buses, 2))
    rep = ValidationReport()
    n = mg.n_buses

    rep.record("edge_count", len(mg.lines) == n - 1,
               f"{len(mg.lines)} lines for {n} buses")

    pairs = [tuple(sorted(e)) for e in mg.edges]
    ids_ok = all(0 <= u < n and 0 <= v < n for u, v in pairs)
    rep.record("bus_ids", ids_ok)
    no_loops = all(u != v for u, v in pairs)
    rep.record("no_self_loops", no_loops)
    distinct = len(set(pairs)) == len(pairs)

    connected = False
    if ids_ok and n > 0:
        g = SimpleGraph(n, [(u, v) for u, v in set(pairs) if u != v], check=False)
        connected = len(connected_components(g)) == 1
    rep.record("connected", connected)
    # a connected graph with n-1 distinct edges is a tree
    rep.record("acyclic", connected and distinct and len(pairs) == n - 1)

    def within(vals, rng):
        return all(rng[0] - tol <= v <= rng[1] + tol for v in vals)

    rep.record("voltage_range", within([b.voltage_mag for b in mg.buses], config.voltage_range))
    rep.record("p_load_range", within([b.p_load for b in mg.buses], config.p_load_range))
    rep.record("q_load_range", within([b.q_load for b in mg.buses], config.q_load_range))
    rep.record("gen_capacity_nonneg", all(b.gen_capacity >= 0 for b in mg.buses))
    rep.record("resistance_range", within([ln.resistance for ln in mg.lines], config.resistance_range))
    rep.record("reactance_range", within([ln.reactance for ln in mg.lines], config.reactance_range))
    rep.record("rated_current_positive", all(ln.rated_current > 0 for ln in mg.lines))

    load = total_load(mg)
    cap = sum(b.gen_capacity for b in mg.buses)
    ratio = cap / load if load > 0 else float("nan")
    rep.record("capacity_ratio", load > 0 and abs(ratio - config.capacity_ratio) <= 1e-6,
               f"capacity/load = {ratio:.6g}, expected {config.capacity_ratio}")
    return rep


def write_microgrids(path, grids) -> None:
    with open(path, "w") as fh:
        for mg in grids:
            fh.write(mg.to_json() + "\n")


def read_microgrids(path) -> list[Microgrid]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if "instance" in obj:
                    obj = obj["instance"]
                out.append(Microgrid.from_json_dict(obj))
            except (json.JSONDecodeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out
