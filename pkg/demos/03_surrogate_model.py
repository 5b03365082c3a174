"""
Small end-to-end run of the learning pipeline on 12-bus grids.

Labels come from Monte Carlo, the label histogram is flattened by
resampling, a GAT-S model is trained, and its pooling attention is put
next to the per-bus vulnerability of one held-out grid. Sizes are kept
small so the script finishes in about a minute.
"""
import numpy as np

from gridshed.cli import explain_instance
from gridshed.dataset import ResamplePlan, extract_features, ks_to_uniform, resample
from gridshed.microgrid import GenerationConfig, generate_microgrid
from gridshed.model import GatS, ModelConfig
from gridshed.shedding import estimate_elsr
from gridshed.training import TrainConfig, mean_baseline, metrics, train


def labelled(n, seed):
    out = []
    for i in range(n):
        mg = generate_microgrid(GenerationConfig(n_buses=12, seed=seed + i))
        out.append((mg, extract_features(mg, estimate_elsr(mg, 100, seed + i).mean)))
    return out


train_set = labelled(60, 123)
test_set = labelled(20, 321)
labels = np.array([r.label for _, r in train_set])
print(f"train labels: mean {labels.mean():.3f}, range [{labels.min():.3f}, {labels.max():.3f}]")

balanced = resample([r for _, r in train_set], ResamplePlan(n_draws=400, seed=123))
lo, hi = labels.min(), labels.max()
print(f"KS distance to uniform: {ks_to_uniform(labels, lo, hi):.3f} before, "
      f"{ks_to_uniform([r.label for r in balanced], lo, hi):.3f} after resampling")

model = GatS(ModelConfig(hidden_dim=32), seed=123)
model, hist = train(model, balanced, TrainConfig(epochs=20, learning_rate=1e-3))
print(f"trained {len(hist.steps)} steps in {hist.wall_time:.1f} s, final loss {hist.epoch_loss[-1]:.5f}")

y = [r.label for _, r in test_set]
pred = model.predict_many([r for _, r in test_set])
print("held-out", metrics(pred, y))
print("baseline", metrics(mean_baseline(labels).predict(y), y))

mg, _ = test_set[0]
res = explain_instance(model, mg)
print(f"\ngrid 0: predicted {res['prediction']:.3f}")
print(" bus  gen  attention  vulnerability")
for b in sorted(res["buses"], key=lambda b: -b["attention_weight"])[:6]:
    gen = "*" if mg.buses[b["id"]].is_generator else " "
    print(f" {b['id']:>3}   {gen}   {b['attention_weight']:.4f}     {b['node_vulnerability']:.4f}")
