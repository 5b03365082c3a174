"""
GAT-S: edge-aware graph attention with self-attention pooling.

Two attention layers (4 heads, then 1 head) update node embeddings from
neighbour and edge messages; heads are summed, not concatenated. Each
layer adds a linear residual of its input and applies layer norm. A
full node-to-node self-attention then pools the graph into one vector,
and a two-layer head maps it to a vulnerability in (0, 1).

Several graphs are processed at once as a disjoint union; pooling
attention is masked to node pairs of the same graph.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import EDGE_FEATURES, NODE_FEATURES, InstanceRecord, Standardizer

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    node_feature_dim: int = len(NODE_FEATURES)
    edge_feature_dim: int = len(EDGE_FEATURES)
    hidden_dim: int = 64
    heads_layer1: int = 4
    heads_layer2: int = 1
    attention_dim: int | None = None  # pooling query/key size; defaults to hidden_dim

    def __post_init__(self):
        if self.attention_dim is None:
            object.__setattr__(self, "attention_dim", self.hidden_dim)
        for k, v in asdict(self).items():
            if int(v) < 1:
                raise ValueError(f"{k} must be >= 1")


@dataclass
class GraphBatch:
    """Disjoint union of standardised graphs with directed edge lists."""

    x: np.ndarray  # (N, node_dim)
    edge_attr: np.ndarray  # (M, edge_dim), one row per directed edge
    src: np.ndarray  # (M,)
    dst: np.ndarray  # (M,)
    graph_index: np.ndarray  # (N,) graph id of each node
    n_graphs: int
    labels: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_records(cls, records) -> "GraphBatch":
        xs, eas, srcs, dsts, gidx, labels = [], [], [], [], [], []
        offset = 0
        for g, r in enumerate(records):
            e = r.edges
            if e.size and np.any(e[:, 0] == e[:, 1]):
                raise ValueError("adjacency contains a self-loop")
            xs.append(r.node_features)
            eas.append(np.vstack([r.edge_features, r.edge_features]))
            srcs.append(np.concatenate([e[:, 0], e[:, 1]]) + offset)
            dsts.append(np.concatenate([e[:, 1], e[:, 0]]) + offset)
            gidx.append(np.full(r.n_nodes, g))
            labels.append(np.nan if r.label is None else r.label)
            offset += r.n_nodes
        return cls(np.vstack(xs), np.vstack(eas), np.concatenate(srcs).astype(int),
                   np.concatenate(dsts).astype(int), np.concatenate(gidx), len(xs),
                   np.array(labels, dtype=float))


def _xavier(rng, rows, cols):
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def _layer_shapes(prefix, in_dim, edge_dim, hidden, heads):
    shapes = {}
    for k in range(heads):
        shapes[f"{prefix}.W{k}"] = (hidden, in_dim)
        shapes[f"{prefix}.We{k}"] = (hidden, edge_dim)
        shapes[f"{prefix}.a{k}"] = (3 * hidden, 1)
    shapes[f"{prefix}.res_W"] = (hidden, in_dim)
    shapes[f"{prefix}.res_b"] = (1, hidden)
    shapes[f"{prefix}.ln_gain"] = (1, hidden)
    shapes[f"{prefix}.ln_bias"] = (1, hidden)
    return shapes


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, int]]:
    h, d = cfg.hidden_dim, cfg.attention_dim
    shapes = {}
    shapes.update(_layer_shapes("gat1", cfg.node_feature_dim, cfg.edge_feature_dim, h, cfg.heads_layer1))
    shapes.update(_layer_shapes("gat2", h, cfg.edge_feature_dim, h, cfg.heads_layer2))
    shapes.update({"pool.Wq": (d, h), "pool.Wk": (d, h), "pool.Wv": (d, h),
                   "out.W": (h, d), "out.b": (1, h), "fc.W": (1, h), "fc.b": (1, 1)})
    return shapes


def init_params(cfg: ModelConfig, seed: int = 123) -> dict[str, Tensor]:
    """Xavier-uniform weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, (r, c) in param_shapes(cfg).items():
        leaf = name.split(".")[1]
        if leaf.endswith("_b") or leaf in ("b", "ln_bias"):
            data = np.zeros((r, c))
        elif leaf == "ln_gain":
            data = np.ones((r, c))
        elif leaf.startswith("a"):
            data = _xavier(rng, c, r).T  # attention vector a: fan_in = 3*hidden, fan_out = 1
        else:
            data = _xavier(rng, r, c)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def gat_layer_forward(params, prefix, h, edge_attr, src, dst, heads, n_nodes,
                      attention=None):
    """One attention layer on a directed edge list (each tree edge appears twice).

    Node ``i`` aggregates over edges with ``dst == i``; ``src`` is the neighbour.
    Returns the updated embeddings; per-head edge coefficients are appended
    to ``attention`` when a list is passed.
    """
    h = ad.as_tensor(h)
    agg = None
    for k in range(heads):
        wh = h @ params[f"{prefix}.W{k}"].T
        we = ad.as_tensor(edge_attr) @ params[f"{prefix}.We{k}"].T
        wh_src = ad.gather_rows(wh, src)
        joint = ad.concat_cols([ad.gather_rows(wh, dst), wh_src, we])
        z = ad.relu(joint @ params[f"{prefix}.a{k}"])
        alpha = ad.reshape(ad.segment_softmax(ad.reshape(z, (-1,)), dst, n_nodes), (-1, 1))
        if attention is not None:
            attention.append(alpha.data.ravel().copy())
        msg = ad.segment_sum(alpha * (wh_src + we), dst, n_nodes)
        agg = msg if agg is None else agg + msg
    out = ad.relu(agg)
    res = h @ params[f"{prefix}.res_W"].T + params[f"{prefix}.res_b"]
    return ad.layer_norm(out + res, params[f"{prefix}.ln_gain"], params[f"{prefix}.ln_bias"])


def self_attention_pool(params, h, graph_index=None, n_graphs=1):
    """Return ``(graph_vectors, attention)``.

    For a single graph ``attention`` is the (N, N) matrix; for a batch it is
    a zero-padded (n_graphs, n_max, n_max) block whose valid rows sum to one.
    """
    h = ad.as_tensor(h)
    q = h @ params["pool.Wq"].T
    k = h @ params["pool.Wk"].T
    v = h @ params["pool.Wv"].T
    d = params["pool.Wq"].shape[0]
    if graph_index is None or n_graphs == 1:
        att = ad.row_softmax(ad.scale(q @ k.T, 1.0 / math.sqrt(d)))
        return ad.mean_rows(att @ v), att
    slot = ad.segment_slots(graph_index, n_graphs)
    counts = np.bincount(graph_index, minlength=n_graphs)
    width = int(counts.max())
    qb, kb, vb = (ad.pad_segments(t, graph_index, n_graphs, slot, width) for t in (q, k, v))
    valid = np.arange(width)[None, :] < counts[:, None]
    mask = valid[:, :, None] & valid[:, None, :]
    att = ad.masked_row_softmax(ad.scale(ad.bmm(qb, ad.transpose(kb)), 1.0 / math.sqrt(d)), mask)
    z = ad.sum_axis(ad.bmm(att, vb), 1)
    return ad.mul(z, (1.0 / counts)[:, None]), att


class GatS:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None,
                 standardizer: Standardizer | None = None, seed: int = 123):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)
        self.standardizer = standardizer

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def prepare(self, records) -> GraphBatch:
        """Standardise raw records (if a standardizer is attached) and batch them."""
        recs = []
        for r in records:
            if r.node_features.shape[1] != self.config.node_feature_dim or \
                    r.edge_features.shape[1] != self.config.edge_feature_dim:
                raise DimensionError(
                    f"record has {r.node_features.shape[1]} node / {r.edge_features.shape[1]} edge "
                    f"features, model expects {self.config.node_feature_dim} / {self.config.edge_feature_dim}")
            recs.append(self.standardizer.apply(r) if self.standardizer is not None else r)
        return GraphBatch.from_records(recs)

    def forward(self, batch: GraphBatch, details: dict | None = None) -> Tensor:
        """Predictions of shape ``(n_graphs, 1)``."""
        cfg, p = self.config, self.params
        n = batch.n_nodes
        gat1_att = [] if details is not None else None
        h = gat_layer_forward(p, "gat1", batch.x, batch.edge_attr, batch.src, batch.dst,
                              cfg.heads_layer1, n, gat1_att)
        gat2_att = [] if details is not None else None
        h = gat_layer_forward(p, "gat2", h, batch.edge_attr, batch.src, batch.dst,
                              cfg.heads_layer2, n, gat2_att)
        zg, att = self_attention_pool(p, h, batch.graph_index, batch.n_graphs)
        hidden = ad.relu(zg @ p["out.W"].T + p["out.b"])
        y = ad.sigmoid(hidden @ p["fc.W"].T + p["fc.b"])
        if details is not None:
            details.update(pool_attention=att.data, embeddings=h.data,
                           gat1_attention=gat1_att, gat2_attention=gat2_att)
        return y

    def predict(self, record: InstanceRecord) -> tuple[float, np.ndarray]:
        """Vulnerability estimate and per-node weights (column means of pooling attention)."""
        details: dict = {}
        y = self.forward(self.prepare([record]), details)
        att = details["pool_attention"]
        return float(y.data[0, 0]), att.mean(axis=0)

    def explain_many(self, records, batch_size: int = 64):
        """Predictions and per-node weight vectors for many records."""
        records = list(records)
        preds, weights = [], []
        for i in range(0, len(records), batch_size):
            chunk = records[i:i + batch_size]
            details: dict = {}
            y = self.forward(self.prepare(chunk), details)
            att = details["pool_attention"]
            if len(chunk) == 1:
                att = att[None]
            for b, r in enumerate(chunk):
                n = r.n_nodes
                weights.append(att[b, :n, :n].mean(axis=0))
            preds.extend(y.data[:, 0].tolist())
        return np.array(preds), weights

    def predict_many(self, records, batch_size: int = 64) -> np.ndarray:
        records = list(records)
        out = []
        for i in range(0, len(records), batch_size):
            out.append(self.forward(self.prepare(records[i:i + batch_size])).data[:, 0])
        return np.concatenate(out) if out else np.zeros(0)

    # -- persistence -------------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config": asdict(self.config),
            "standardizer": self.standardizer.to_json_dict() if self.standardizer else None,
            "parameters": {k: t.data.tolist() for k, t in self.params.items()},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GatS":
        try:
            version = d["format_version"]
            cfg_d, params_d = d["config"], d["parameters"]
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"model document is missing {exc}") from None
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported format_version {version!r}")
        try:
            cfg = ModelConfig(**cfg_d)
        except TypeError as exc:
            raise ModelFormatError(f"bad model config: {exc}") from None
        if cfg.node_feature_dim != len(NODE_FEATURES) or cfg.edge_feature_dim != len(EDGE_FEATURES):
            raise DimensionError(
                f"model expects {cfg.node_feature_dim} node / {cfg.edge_feature_dim} edge features; "
                f"records carry {len(NODE_FEATURES)} / {len(EDGE_FEATURES)}")
        shapes = param_shapes(cfg)
        if set(shapes) != set(params_d):
            raise ModelFormatError("parameter names do not match the model config")
        params = {}
        for name, shape in shapes.items():
            arr = np.asarray(params_d[name], dtype=float)
            if arr.shape != shape:
                raise DimensionError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            params[name] = Tensor(arr, requires_grad=True, name=name)
        std = d.get("standardizer")
        std = Standardizer.from_json_dict(std) if std else None
        if std is not None and (std.node_mean.shape != (cfg.node_feature_dim,)
                                or std.edge_mean.shape != (cfg.edge_feature_dim,)):
            raise DimensionError("standardizer dimensions do not match the model config")
        return cls(cfg, params, std)


def save_model(path, model: GatS) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_json_dict(), fh)


def load_model(path) -> GatS:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a valid model file ({exc})") from None
    return GatS.from_json_dict(d)


def predict(model: GatS, record: InstanceRecord) -> tuple[float, np.ndarray]:
    return model.predict(record)
