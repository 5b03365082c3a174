"""
Command line pipeline: generate -> label -> resample -> train -> assess / explain / evaluate.

Every stage reads and writes JSON Lines (or a JSON model file), takes a
``--seed`` and gives the same output for the same inputs. Settings may
come from a TOML file (``--config``): top-level keys apply to every
command, a ``[command]`` table to that command only; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .dataset import (ResamplePlan, SchemaError, LabelledInstance, extract_features, ks_to_uniform,
                      load_records, read_labelled, resample, write_dataset, write_labelled)
from .microgrid import GenerationConfig, generate_microgrid, read_microgrids, write_microgrids
from .model import GatS, ModelConfig, load_model, save_model
from .shedding import LoadShedder, estimate_elsr, node_vulnerability
from .training import TrainConfig, mean_baseline, metrics, train

log = logging.getLogger("gridshed")

TRAIN_SEED = 123
TEST_SEED = 321


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _bus_count(text: str) -> int:
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"a microgrid needs at least 2 buses, got {text}")
    return v


def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a probability in [0, 1], got {text}")
    return v


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("GRIDSHED_JOBS", "1")))
    except ValueError:
        return 1


# -- stages ----------------------------------------------------------------

def cmd_generate(args) -> int:
    grids = []
    for i in range(args.n):
        cfg = GenerationConfig(
            n_buses=args.buses, generator_fraction=args.generator_fraction,
            capacity_ratio=args.capacity_ratio, seed=args.seed + i,
            paper_literal_q=args.paper_literal_q,
        )
        grids.append(generate_microgrid(cfg))
    write_microgrids(args.out, grids)
    print(f"wrote {len(grids)} microgrids to {args.out}")
    return 0


def _label_one(job):
    mg, n_scenarios, seed, p_min, p_max = job
    est = estimate_elsr(mg, n_scenarios, seed, p_min, p_max)
    return LabelledInstance(mg, est.mean, est.std_error, est.n_scenarios, seed)


def cmd_label(args) -> int:
    grids = read_microgrids(args.input)
    jobs = [(mg, args.n_scenarios, args.seed + i, args.p_min, args.p_max) for i, mg in enumerate(grids)]
    t0 = time.perf_counter()
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            items = list(pool.map(_label_one, jobs))
    else:
        items = [_label_one(j) for j in jobs]
    write_labelled(args.out, items)
    se = np.mean([it.std_error for it in items]) if items else float("nan")
    print(f"labelled {len(items)} microgrids in {time.perf_counter() - t0:.1f} s "
          f"(mean std_error {se:.4g}) -> {args.out}")
    return 0


def _ecdf_rows(name, labels):
    labels = np.sort(np.asarray(labels, dtype=float))
    n = labels.size
    return [(name, repr(float(v)), repr((i + 1) / n)) for i, v in enumerate(labels)]


def cmd_resample(args) -> int:
    records = load_records(args.input)
    if any(r.label is None for r in records):
        raise SchemaError(f"{args.input} contains unlabelled records")
    plan = ResamplePlan(n_bins=args.bins, n_draws=args.n_draws, seed=args.seed)
    out = resample(records, plan)
    write_dataset(args.out, out)
    before = [r.label for r in records]
    after = [r.label for r in out]
    lo, hi = min(before), max(before)
    print(f"resampled {len(records)} -> {len(out)} records; KS to uniform "
          f"{ks_to_uniform(before, lo, hi):.4f} -> {ks_to_uniform(after, lo, hi):.4f}")
    if args.cdf_csv:
        with open(args.cdf_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["series", "label", "cdf"])
            w.writerows(_ecdf_rows("original", before) + _ecdf_rows("resampled", after))
    return 0


def cmd_train(args) -> int:
    records = load_records(args.data)
    if any(r.label is None for r in records):
        raise SchemaError(f"{args.data} contains unlabelled records")
    model = GatS(ModelConfig(hidden_dim=args.hidden_dim), seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
                      seed=args.seed, val_fraction=args.val_fraction)

    def progress(epoch, hist):
        val = f" val {hist.val_loss[-1]:.5g}" if hist.val_loss else ""
        log.info("epoch %d/%d loss %.5g%s", epoch + 1, cfg.epochs, hist.epoch_loss[-1], val)

    model, hist = train(model, records, cfg, progress=progress)
    save_model(args.out, model)
    if args.loss_csv:
        hist.write_csv(args.loss_csv)
    print(f"trained {cfg.epochs} epochs on {len(records)} records in {hist.wall_time:.1f} s; "
          f"final loss {hist.epoch_loss[-1]:.5g} -> {args.out}")
    return 0


def cmd_assess(args) -> int:
    t0 = time.perf_counter()
    model = load_model(args.model)
    records = load_records(args.input)
    preds = model.predict_many(records)
    wall = time.perf_counter() - t0
    for i, y in enumerate(preds):
        print(f"{i}\t{y:.6f}")
    print(f"assessed {len(preds)} instances in {wall:.3f} s")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"predictions": preds.tolist(), "wall_time": wall}, fh)
    return 0


def explain_instance(model: GatS, mg) -> dict:
    """Per-bus attention weight next to the bus's own node-level vulnerability."""
    y, weights = model.predict(extract_features(mg))
    shedder = LoadShedder(mg)
    buses = [
        {"id": b, "attention_weight": float(weights[b]),
         "node_vulnerability": node_vulnerability(mg, b, shedder)}
        for b in range(mg.n_buses)
    ]
    return {"prediction": y, "buses": buses}


def cmd_explain(args) -> int:
    model = load_model(args.model)
    grids = read_microgrids(args.input)
    if not 0 <= args.index < len(grids):
        raise IndexError(f"instance index {args.index} out of range (0..{len(grids) - 1})")
    result = {"instance": args.index, **explain_instance(model, grids[args.index])}
    text = json.dumps(result, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bus", "attention_weight", "node_vulnerability"])
            for b in result["buses"]:
                w.writerow([b["id"], repr(b["attention_weight"]), repr(b["node_vulnerability"])])
    return 0


def evaluate_model(model: GatS, test_records, baseline_labels=None) -> dict:
    labels = np.array([r.label for r in test_records], dtype=float)
    t0 = time.perf_counter()
    preds = model.predict_many(test_records)
    report = {"model": metrics(preds, labels, time.perf_counter() - t0).to_dict(),
              "predictions": preds.tolist(), "labels": labels.tolist()}
    if baseline_labels is not None:
        base = mean_baseline(baseline_labels)
        report["mean_baseline"] = metrics(base.predict(test_records), labels).to_dict()
        report["mean_baseline"]["value"] = base.value
    return report


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    test = load_records(args.data)
    if any(r.label is None for r in test):
        raise SchemaError(f"{args.data} contains unlabelled records")
    base_labels = None
    if args.train_data:
        base_labels = [r.label for r in load_records(args.train_data)]
    report = evaluate_model(model, test, base_labels)
    summary = {k: v for k, v in report.items() if k not in ("predictions", "labels")}
    if args.reference_data:
        ref = evaluate_model(model, load_records(args.reference_data))["model"]
        summary["reference"] = ref
        summary["mse_degradation"] = report["model"]["mse"] - ref["mse"]
    print(json.dumps(summary, indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=2)
    if args.scatter_csv:
        with open(args.scatter_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["prediction", "label"])
            w.writerows(zip(report["predictions"], report["labels"]))
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridshed", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="TOML file with default settings")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="random radial microgrids")
    g.add_argument("--n", type=_positive_int, default=100)
    g.add_argument("--buses", type=_bus_count, default=33)
    g.add_argument("--seed", type=int, default=TRAIN_SEED)
    g.add_argument("--generator-fraction", type=float, default=0.15)
    g.add_argument("--capacity-ratio", type=float, default=1.2)
    g.add_argument("--paper-literal-q", action="store_true",
                   help="sample reactive loads from [-10, 0] MVar instead of [-0.1, 0]")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    lb = sub.add_parser("label", help="Monte Carlo expected load shedding rate per microgrid")
    lb.add_argument("--in", dest="input", required=True)
    lb.add_argument("--out", required=True)
    lb.add_argument("--n-scenarios", type=_positive_int, default=1000)
    lb.add_argument("--seed", type=int, default=TRAIN_SEED)
    lb.add_argument("--p-min", type=_probability, default=0.01)
    lb.add_argument("--p-max", type=_probability, default=0.2)
    lb.add_argument("--jobs", type=_positive_int, default=_default_jobs())
    lb.set_defaults(func=cmd_label)

    rs = sub.add_parser("resample", help="balance labels by inverse bin frequency")
    rs.add_argument("--in", dest="input", required=True)
    rs.add_argument("--out", required=True)
    rs.add_argument("--n-draws", type=_positive_int, default=4000)
    rs.add_argument("--bins", type=int, default=20)
    rs.add_argument("--seed", type=int, default=TRAIN_SEED)
    rs.add_argument("--cdf-csv", help="write label CDFs before/after resampling")
    rs.set_defaults(func=cmd_resample)

    tr = sub.add_parser("train", help="fit a GAT-S model")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--epochs", type=_positive_int, default=100)
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--batch-size", type=_positive_int, default=32)
    tr.add_argument("--hidden-dim", type=_positive_int, default=64)
    tr.add_argument("--val-fraction", type=float, default=0.1)
    tr.add_argument("--seed", type=int, default=TRAIN_SEED)
    tr.add_argument("--loss-csv", help="write per-step training loss")
    tr.set_defaults(func=cmd_train)

    a = sub.add_parser("assess", help="predict vulnerability for each instance")
    a.add_argument("--model", required=True)
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--out")
    a.set_defaults(func=cmd_assess)

    e = sub.add_parser("explain", help="attention weights and node-level vulnerability")
    e.add_argument("--model", required=True)
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--index", type=int, default=0)
    e.add_argument("--out")
    e.add_argument("--csv")
    e.set_defaults(func=cmd_explain)

    ev = sub.add_parser("evaluate", help="error metrics against labels and the mean baseline")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--train-data", help="labels for the mean-value baseline")
    ev.add_argument("--reference-data", help="in-size test set, to report MSE degradation")
    ev.add_argument("--seed", type=int, default=TEST_SEED)
    ev.add_argument("--out")
    ev.add_argument("--scatter-csv")
    ev.set_defaults(func=cmd_evaluate)
    return p


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, "rb") as fh:
        cfg = tomllib.load(fh)
    common = {k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)}
    for action in parser._subparsers._group_actions:
        for name, sp in action.choices.items():
            table = {k.replace("-", "_"): v for k, v in cfg.get(name, {}).items()}
            dests = {a.dest for a in sp._actions}
            values = {k: v for k, v in {**common, **table}.items() if k in dests}
            if "in" in table:
                values["input"] = table["in"]
            sp.set_defaults(**values)
            # a configured value satisfies a required flag
            for act in sp._actions:
                if act.dest in values:
                    act.required = False


def _check_configured(parser, args):
    """Run the flag validators on values that came from a config file."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    for act in sub._actions:
        if act.type in (_positive_int, _bus_count, _probability):
            value = getattr(args, act.dest, None)
            if value is not None and not isinstance(value, str):
                try:
                    act.type(str(value))
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    sub.error(f"{act.dest.replace('_', '-')}: {exc}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        print(f"gridshed: error: cannot read config: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    _check_configured(parser, args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, IndexError, RuntimeError) as exc:
        print(f"gridshed: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
