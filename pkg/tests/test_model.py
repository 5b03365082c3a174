import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridshed import autodiff as ad
from gridshed.dataset import InstanceRecord, extract_features, fit_standardizer
from gridshed.microgrid import GenerationConfig, generate_microgrid
from gridshed.model import (DimensionError, GatS, GraphBatch, ModelConfig, ModelFormatError,
                            gat_layer_forward, init_params, load_model, param_shapes, save_model,
                            self_attention_pool)

from gradcheck import max_rel_error


def grid_record(n, seed, label=None):
    return extract_features(generate_microgrid(GenerationConfig(n_buses=n, seed=seed)), label)


def small_model(hidden=8, seed=0, records=None):
    m = GatS(ModelConfig(hidden_dim=hidden), seed=seed)
    if records:
        m.standardizer = fit_standardizer(records)
    return m


def test_init_deterministic_and_shaped():
    cfg = ModelConfig()
    a, b = init_params(cfg, 7), init_params(cfg, 7)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert a["gat1.W0"].shape == (64, 4)
    assert a["gat1.a0"].shape == (3 * 64, 1)
    assert a["pool.Wq"].shape == (64, 64)
    assert sum(k.startswith("gat1.W") and "e" not in k for k in a) == 4
    assert sum(k.startswith("gat2.W") and "e" not in k for k in a) == 1
    c = init_params(cfg, 8)
    assert not np.array_equal(a["gat1.W0"].data, c["gat1.W0"].data)


def test_init_within_xavier_bound():
    params = init_params(ModelConfig(hidden_dim=16), 3)
    for name, t in params.items():
        r, c = t.shape
        if name.endswith("ln_gain"):
            assert np.all(t.data == 1)
        elif name.endswith((".b", "_b", "ln_bias")):
            assert np.all(t.data == 0)
        else:
            assert np.all(np.abs(t.data) <= math.sqrt(6 / (r + c)))


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(hidden_dim=0)
    assert ModelConfig(hidden_dim=12).attention_dim == 12


def _layer(hidden=6, heads=2, seed=0):
    cfg = ModelConfig(hidden_dim=hidden, heads_layer1=heads)
    return init_params(cfg, seed), cfg


def test_single_edge_attention_is_one():
    params, cfg = _layer()
    rec = InstanceRecord(np.random.default_rng(0).normal(size=(2, 4)), [[0.3, 0.2]], [(0, 1)])
    b = GraphBatch.from_records([rec])
    att = []
    gat_layer_forward(params, "gat1", b.x, b.edge_attr, b.src, b.dst, 2, 2, att)
    for a in att:
        np.testing.assert_allclose(a, 1.0)


def test_clamped_scores_give_uniform_attention():
    params, cfg = _layer()
    for k in range(2):
        params[f"gat1.a{k}"].data[:] = 0.0
    rec = grid_record(9, 4)
    b = GraphBatch.from_records([rec])
    att = []
    gat_layer_forward(params, "gat1", b.x, b.edge_attr, b.src, b.dst, 2, b.n_nodes, att)
    deg = np.bincount(b.dst, minlength=b.n_nodes)
    for a in att:
        np.testing.assert_allclose(a, 1.0 / deg[b.dst])


def test_attention_sums_to_one_per_node():
    model = small_model(hidden=8)
    rec = grid_record(15, 2)
    details = {}
    model.forward(model.prepare([rec]), details)
    b = GraphBatch.from_records([rec])
    for a in details["gat1_attention"] + details["gat2_attention"]:
        assert np.all(a >= 0)
        sums = np.bincount(b.dst, weights=a, minlength=b.n_nodes)
        assert np.all(np.abs(sums - 1) < 1e-12)
    pool = details["pool_attention"]
    assert np.all(np.abs(pool.sum(1) - 1) < 1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_gat_layer_is_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    params, _ = _layer(hidden=8, heads=4, seed=seed % 1000)
    n = 8
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    rec = InstanceRecord(rng.normal(size=(n, 4)), rng.normal(size=(n - 1, 2)), edges)
    perm = rng.permutation(n)
    out = lambda r: gat_layer_forward(params, "gat1", *(lambda b: (b.x, b.edge_attr, b.src, b.dst))(
        GraphBatch.from_records([r])), 4, n).data
    np.testing.assert_allclose(out(rec.permuted(perm)), out(rec)[perm], atol=1e-9, rtol=0)


def test_isolated_node_uses_residual_only():
    params, _ = _layer(hidden=6, heads=1)
    x = np.random.default_rng(0).normal(size=(1, 4))
    y = gat_layer_forward(params, "gat1", x, np.zeros((0, 2)), np.zeros(0, int), np.zeros(0, int), 1, 1)
    res = x @ params["gat1.res_W"].data.T + params["gat1.res_b"].data
    np.testing.assert_allclose(y.data, ad.layer_norm(ad.Tensor(res)).data)


def test_pool_single_node():
    params = init_params(ModelConfig(hidden_dim=5), 0)
    h = np.random.default_rng(0).normal(size=(1, 5))
    g, att = self_attention_pool(params, h)
    np.testing.assert_array_equal(att.data, [[1.0]])
    np.testing.assert_allclose(g.data, h @ params["pool.Wv"].data.T)


def test_pool_identical_embeddings_uniform():
    params = init_params(ModelConfig(hidden_dim=5), 0)
    h = np.tile(np.random.default_rng(0).normal(size=(1, 5)), (7, 1))
    _, att = self_attention_pool(params, h)
    np.testing.assert_allclose(att.data, 1 / 7)


def test_pool_batched_matches_single():
    params = init_params(ModelConfig(hidden_dim=5), 1)
    rng = np.random.default_rng(1)
    hs = [rng.normal(size=(n, 5)) for n in (3, 6, 1)]
    gi = np.concatenate([np.full(len(h), i) for i, h in enumerate(hs)])
    g, att = self_attention_pool(params, np.vstack(hs), gi, 3)
    for i, h in enumerate(hs):
        gs, a = self_attention_pool(params, h)
        np.testing.assert_allclose(g.data[i], gs.data[0], atol=1e-12)
        np.testing.assert_allclose(att.data[i, :len(h), :len(h)], a.data, atol=1e-12)


def test_predict_range_and_weights():
    recs = [grid_record(n, s) for n, s in [(5, 0), (33, 1), (2, 2)]]
    model = small_model(records=recs)
    for r in recs:
        y, w = model.predict(r)
        assert 0 < y < 1
        assert w.shape == (r.n_nodes,) and np.all(w >= 0)
        assert abs(w.sum() - 1) < 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 12))
def test_predict_is_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    rec = grid_record(n, seed)
    model = small_model(hidden=8, seed=seed % 97, records=[rec, grid_record(n, seed + 1)])
    perm = rng.permutation(n)
    y, w = model.predict(rec)
    yp, wp = model.predict(rec.permuted(perm))
    assert abs(yp - y) <= 1e-9 * abs(y)
    np.testing.assert_allclose(wp, w[perm], atol=1e-9)


def test_batch_prediction_matches_single():
    recs = [grid_record(n, s) for s, n in enumerate([4, 9, 33, 2, 17])]
    model = small_model(records=recs)
    single = np.array([model.predict(r)[0] for r in recs])
    np.testing.assert_allclose(model.predict_many(recs, batch_size=3), single, atol=1e-12)
    preds, weights = model.explain_many(recs, batch_size=2)
    for r, w in zip(recs, weights):
        np.testing.assert_allclose(w, model.predict(r)[1], atol=1e-12)


def test_self_loop_rejected():
    rec = InstanceRecord(np.zeros((2, 4)), np.zeros((1, 2)), [(1, 1)])
    with pytest.raises(ValueError):
        GraphBatch.from_records([rec])


def test_feature_dimension_mismatch():
    model = small_model()
    model.config = ModelConfig(node_feature_dim=5, hidden_dim=8)
    with pytest.raises(DimensionError):
        model.prepare([grid_record(4, 0)])


def test_model_gradients_small():
    recs = [grid_record(n, s, 0.3) for s, n in enumerate([4, 6])]
    model = small_model(hidden=4, records=recs)
    batch = model.prepare(recs)
    loss = lambda: ad.mean_all(ad.square(model.forward(batch) - batch.labels.reshape(-1, 1)))
    assert max_rel_error(loss, model.parameters()) < 1e-4


def test_save_load_round_trip(tmp_path):
    recs = [grid_record(7, s) for s in range(3)]
    model = small_model(records=recs)
    path = tmp_path / "m.json"
    save_model(path, model)
    back = load_model(path)
    assert back.config == model.config
    for k in model.params:
        assert np.array_equal(back.params[k].data, model.params[k].data)
    assert back.predict(recs[0])[0] == model.predict(recs[0])[0]
    doc = json.loads(path.read_text())
    assert set(doc) == {"config", "standardizer", "parameters", "format_version"}


def test_load_errors(tmp_path):
    model = small_model(records=[grid_record(5, 0)])
    good = model.to_json_dict()
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_model(path)

    bad = dict(good, format_version=99)
    with pytest.raises(ModelFormatError):
        GatS.from_json_dict(bad)
    with pytest.raises(ModelFormatError):
        GatS.from_json_dict({"config": good["config"]})
    params = dict(good["parameters"])
    params.pop("fc.b")
    with pytest.raises(ModelFormatError):
        GatS.from_json_dict(dict(good, parameters=params))
    with pytest.raises(DimensionError):
        GatS.from_json_dict(dict(good, config=dict(good["config"], node_feature_dim=6)))
    params = dict(good["parameters"], **{"fc.W": [[0.0]]})
    with pytest.raises(DimensionError):
        GatS.from_json_dict(dict(good, parameters=params))


def test_param_shapes_chain():
    shapes = param_shapes(ModelConfig(hidden_dim=10, attention_dim=6))
    assert shapes["pool.Wq"] == (6, 10) and shapes["out.W"] == (10, 6)
    assert shapes["fc.W"] == (1, 10) and shapes["fc.b"] == (1, 1)
