"""Command-line entry point: ``dkl gen-data | train | evaluate``.

Exit codes: 0 ok, 1 I/O or checkpoint error, 2 usage or config validation, 3 divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .datagen import DataError, GmmSpec, load_csv, sample_gmm, save_csv
from .experiment import (ConfigError, DivergenceError, ExperimentConfig, eval_constraint_violation,
                         eval_disagreement, eval_objective, run_experiment, write_metrics_csv)
from .losses import LossSpec, predict_many
from .network import Graph, GraphError
from .rkhs import FunctionExpansion, evaluate_many

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("dkl")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def bundled_config(name: str) -> dict:
    fname = name if name.endswith(".json") else name + ".json"
    return json.loads(resources.files("dkl.configs").joinpath(fname).read_text())


def read_config(ref: str) -> dict:
    """Load a config from a file path, falling back to a bundled config name."""
    path = Path(ref)
    if path.exists():
        return json.loads(path.read_text())
    try:
        return bundled_config(ref)
    except FileNotFoundError:
        raise FileNotFoundError(f"no config file or bundled config named {ref!r}") from None


def cmd_gen_data(args) -> int:
    try:
        spec = GmmSpec(classes=args.classes, modes_per_class=args.modes,
                       sigma_sq_centers=args.sigma_centers, sigma_sq_data=args.sigma_data)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.n_train < 0 or args.n_test < 0:
        print("error: sample counts must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out_dir)
    train = sample_gmm(spec, args.n_train, args.seed, stream=0)
    test = sample_gmm(spec, args.n_test, args.seed, stream=1)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_csv(train, out / "train.csv")
        save_csv(test, out / "test.csv")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for name, ds in (("train", train), ("test", test)):
        counts = np.bincount(ds.labels, minlength=spec.classes + 1)[1:]
        print(f"{name}: {len(ds)} samples, class counts {counts.tolist()}")
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    try:
        raw = read_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = ExperimentConfig.from_dict(raw)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.rounds is not None:
            cfg.rounds = args.rounds
        cfg.validate()
    except (ConfigError, TypeError, ValueError) as exc:
        problems = exc.problems if isinstance(exc, ConfigError) else [str(exc)]
        print("error: invalid config:", file=sys.stderr)
        for p in problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_USAGE
    try:
        train, test = load_csv(args.train), load_csv(args.test)
    except (OSError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        train.validate_classes(cfg.loss.classes)
        test.validate_classes(cfg.loss.classes)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run_experiment(cfg, train, test, threads=args.threads)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    V = cfg.num_agents
    write_metrics_csv(result.metrics, V, out / "metrics.csv")
    result.graph.save(out / "graph.txt")
    model_files = []
    for i, f in enumerate(result.models):
        path = out / f"model_{i + 1:03d}.json"
        f.save(path)
        model_files.append(path.name)
    final = result.metrics[-1]
    manifest = {
        "config": cfg.to_dict(),
        "seeds": {"run": cfg.seed, "graph": cfg.resolved_graph_seed()},
        "data": {
            "train": {"path": str(Path(args.train).resolve()), "sha256": sha256(args.train)},
            "test": {"path": str(Path(args.test).resolve()), "sha256": sha256(args.test)},
        },
        "graph": {"file": "graph.txt", "num_agents": V,
                  "edges": [[i + 1, j + 1] for i, j in result.graph.sorted_edges()]},
        "artifacts": {"metrics": "metrics.csv", "models": model_files},
        "threads": args.threads,
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(json.dumps({"round": final.round, "objective": final.objective,
                      "disagreement": final.disagreement,
                      "median_accuracy": float(np.median(final.accuracies)),
                      "max_model_order": max(final.model_orders)}))
    return EXIT_OK


def _load_models(models_dir: Path) -> list[FunctionExpansion]:
    paths = sorted(models_dir.glob("model_*.json"))
    if not paths:
        raise FileNotFoundError(f"no model_*.json checkpoints in {models_dir}")
    models = []
    for p in paths:
        try:
            models.append(FunctionExpansion.load(p))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"{p}: corrupt checkpoint ({exc})") from None
    return models


def cmd_evaluate(args) -> int:
    models_dir = Path(args.models)
    try:
        models = _load_models(models_dir)
        test = load_csv(args.test)
        graph = Graph.load(args.graph)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if graph.num_agents != len(models):
        print(f"error: graph has {graph.num_agents} agents but {len(models)} checkpoints", file=sys.stderr)
        return EXIT_USAGE
    kind = args.loss
    if kind is None:
        manifest = models_dir / "manifest.json"
        kind = json.loads(manifest.read_text())["config"]["loss"]["kind"] if manifest.exists() else "logistic"
    loss = LossSpec(kind, models[0].classes)
    X = test.features.T
    acc = [float(np.mean(predict_many(evaluate_many(f, X)) == test.labels)) for f in models]
    report = {
        "accuracies": acc,
        "median_accuracy": float(np.median(acc)),
        "objective": eval_objective(models, test, loss),
        "disagreement": eval_disagreement(models, graph),
        "constraint_violation": eval_constraint_violation(models, test, graph),
        "model_orders": [f.order for f in models],
    }
    print(json.dumps(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dkl", description="Decentralized online kernel learning simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write Gaussian-mixture train/test CSVs")
    g.add_argument("--classes", type=int, default=5)
    g.add_argument("--modes", type=int, default=3)
    g.add_argument("--sigma-data", type=float, default=0.2, help="within-mode variance")
    g.add_argument("--sigma-centers", type=float, default=1.0, help="variance of mode centers around class centers")
    g.add_argument("--n-train", type=int, default=5000)
    g.add_argument("--n-test", type=int, default=2500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="run the network on a dataset")
    t.add_argument("--config", required=True, help="config JSON path or bundled name (gmm-klr, gmm-ksvm)")
    t.add_argument("--train", required=True)
    t.add_argument("--test", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--rounds", type=int, default=None)
    t.add_argument("--threads", type=int, default=1)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score saved per-agent models on a test set")
    e.add_argument("--models", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--graph", required=True)
    e.add_argument("--loss", choices=["logistic", "hinge"], default=None)
    e.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
