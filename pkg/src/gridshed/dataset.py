"""
Learning records built from labelled microgrids.

Node features, in column order: active load (MW), reactive load (MVar),
generator flag, degree. Edge features: resistance, reactance (ohm).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .microgrid import Microgrid

NODE_FEATURES = ("p_load", "q_load", "gen_flag", "degree")
EDGE_FEATURES = ("resistance", "reactance")
STD_FLOOR = 1e-8


class SchemaError(ValueError):
    pass


@dataclass
class InstanceRecord:
    node_features: np.ndarray  # (N, 4)
    edge_features: np.ndarray  # (N-1, 2), row k belongs to edges[k]
    edges: np.ndarray  # (N-1, 2) int
    label: float | None = None

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=float).reshape(-1, len(NODE_FEATURES))
        self.edge_features = np.asarray(self.edge_features, dtype=float).reshape(-1, len(EDGE_FEATURES))
        self.edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        if len(self.edges) != len(self.edge_features):
            raise SchemaError("edge list and edge features differ in length")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.n_nodes):
            raise SchemaError("edge refers to a node outside the feature matrix")
        if self.label is not None:
            self.label = float(self.label)
            if not 0.0 <= self.label <= 1.0:
                raise SchemaError(f"label {self.label} outside [0, 1]")

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "node_features": self.node_features.tolist(),
            "edge_features": self.edge_features.tolist(),
            "edges": self.edges.tolist(),
            "label": self.label,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "InstanceRecord":
        missing = {"node_features", "edge_features", "edges", "label"} - set(d)
        if missing:
            raise SchemaError(f"missing fields {sorted(missing)}")
        return cls(d["node_features"], d["edge_features"], d["edges"], d["label"])

    def permuted(self, perm) -> "InstanceRecord":
        """Relabel nodes so that old node ``perm[i]`` becomes node ``i``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return InstanceRecord(self.node_features[perm], self.edge_features, inv[self.edges], self.label)

    def __eq__(self, other):
        if not isinstance(other, InstanceRecord):
            return NotImplemented
        return (np.array_equal(self.node_features, other.node_features)
                and np.array_equal(self.edge_features, other.edge_features)
                and np.array_equal(self.edges, other.edges) and self.label == other.label)


def extract_features(mg: Microgrid, label: float | None = None) -> InstanceRecord:
    n = mg.n_buses
    deg = np.zeros(n)
    for u, v in mg.edges:
        deg[u] += 1
        deg[v] += 1
    nodes = np.column_stack([
        [b.p_load for b in mg.buses],
        [b.q_load for b in mg.buses],
        [1.0 if b.gen_capacity > 0 else 0.0 for b in mg.buses],
        deg,
    ])
    edge_feats = np.array([[ln.resistance, ln.reactance] for ln in mg.lines]).reshape(-1, 2)
    return InstanceRecord(nodes, edge_feats, np.array(mg.edges).reshape(-1, 2), label)


@dataclass
class Standardizer:
    node_mean: np.ndarray
    node_std: np.ndarray
    edge_mean: np.ndarray
    edge_std: np.ndarray

    def apply(self, record: InstanceRecord) -> InstanceRecord:
        return InstanceRecord(
            (record.node_features - self.node_mean) / self.node_std,
            (record.edge_features - self.edge_mean) / self.edge_std,
            record.edges, record.label,
        )

    def invert(self, record: InstanceRecord) -> InstanceRecord:
        return InstanceRecord(
            record.node_features * self.node_std + self.node_mean,
            record.edge_features * self.edge_std + self.edge_mean,
            record.edges, record.label,
        )

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("node_mean", "node_std", "edge_mean", "edge_std")}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Standardizer":
        return cls(*(np.asarray(d[k], dtype=float)
                     for k in ("node_mean", "node_std", "edge_mean", "edge_std")))


def fit_standardizer(records) -> Standardizer:
    """Column z-score statistics pooled over every node and edge of ``records``."""
    records = list(records)
    if not records:
        raise ValueError("cannot fit a standardizer on an empty dataset")
    nodes = np.vstack([r.node_features for r in records])
    edges = np.vstack([r.edge_features for r in records])
    if len(edges) == 0:
        edges = np.zeros((1, len(EDGE_FEATURES)))
    return Standardizer(nodes.mean(0), np.maximum(nodes.std(0), STD_FLOOR),
                        edges.mean(0), np.maximum(edges.std(0), STD_FLOOR))


def apply_standardizer(std: Standardizer, record: InstanceRecord) -> InstanceRecord:
    return std.apply(record)


@dataclass(frozen=True)
class ResamplePlan:
    n_bins: int = 20
    n_draws: int = 4000
    seed: int = 123

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")


def label_bins(labels, n_bins: int) -> np.ndarray:
    """Equal-width bin index over [0, 1]; a label of exactly 1 falls in the last bin."""
    labels = np.asarray(labels, dtype=float)
    return np.minimum((labels * n_bins).astype(int), n_bins - 1)


def sampling_probabilities(labels, n_bins: int = 20) -> np.ndarray:
    bins = label_bins(labels, n_bins)
    counts = np.bincount(bins, minlength=n_bins)
    w = 1.0 / counts[bins]
    return w / w.sum()


def resample(records, plan: ResamplePlan = ResamplePlan()) -> list[InstanceRecord]:
    """Draw records with replacement, each weighted by 1 / (size of its label bin)."""
    records = list(records)
    if not records:
        raise ValueError("cannot resample an empty dataset")
    labels = [r.label for r in records]
    if any(lab is None for lab in labels):
        raise ValueError("every record must be labelled before resampling")
    p = sampling_probabilities(labels, plan.n_bins)
    rng = np.random.default_rng(plan.seed)
    idx = rng.choice(len(records), size=plan.n_draws, replace=True, p=p)
    return [records[i] for i in idx]


def ks_to_uniform(labels, lo: float, hi: float) -> float:
    """Kolmogorov-Smirnov distance between the label ECDF and U(lo, hi)."""
    scale = max(hi - lo, 1e-12)
    return float(stats.kstest(np.asarray(labels, dtype=float), "uniform", args=(lo, scale)).statistic)


def shuffle_split(records, val_fraction: float, seed: int):
    records = list(records)
    order = np.random.default_rng(seed).permutation(len(records))
    n_val = int(round(val_fraction * len(records)))
    if n_val >= len(records):
        n_val = len(records) - 1
    val = [records[i] for i in order[:n_val]]
    train = [records[i] for i in order[n_val:]]
    return train, val


def write_dataset(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json_dict(), separators=(",", ":")) + "\n")


def read_dataset(path) -> list[InstanceRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(InstanceRecord.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, SchemaError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: line {lineno}: {exc}") from exc
    return out


@dataclass
class LabelledInstance:
    """One line of the ``label`` output."""

    instance: Microgrid
    elsr: float
    std_error: float
    n_scenarios: int
    seed: int
    extra: dict = field(default_factory=dict)

    def record(self) -> InstanceRecord:
        return extract_features(self.instance, self.elsr)

    def to_json_dict(self) -> dict:
        return {"instance": self.instance.to_json_dict(), "elsr": self.elsr,
                "std_error": self.std_error, "n_scenarios": self.n_scenarios, "seed": self.seed}

    @classmethod
    def from_json_dict(cls, d: dict) -> "LabelledInstance":
        return cls(Microgrid.from_json_dict(d["instance"]), float(d["elsr"]),
                   float(d["std_error"]), int(d["n_scenarios"]), int(d["seed"]))


def write_labelled(path, items) -> None:
    with open(path, "w") as fh:
        for it in items:
            fh.write(json.dumps(it.to_json_dict(), separators=(",", ":")) + "\n")


def read_labelled(path) -> list[LabelledInstance]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(LabelledInstance.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: line {lineno}: {exc}") from exc
    return out


def load_records(path) -> list[InstanceRecord]:
    """Read records from a dataset, labelled or plain microgrid JSONL file.

    Plain microgrids come back unlabelled.
    """
    with open(path) as fh:
        first = next((ln for ln in fh if ln.strip()), None)
    if first is None:
        return []
    try:
        keys = set(json.loads(first))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line 1: {exc}") from exc
    if "node_features" in keys:
        return read_dataset(path)
    if "elsr" in keys:
        return [it.record() for it in read_labelled(path)]
    if "buses" in keys:
        from .microgrid import read_microgrids
        return [extract_features(mg) for mg in read_microgrids(path)]
    raise SchemaError(f"{path}: unrecognised record format")
