"""Command-line entry point for ingestion, training, evaluation and analysis.

Exit codes: 0 success, 1 usage or config error, 2 runtime divergence,
3 HE incompatibility.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .config import SCHEMA, ConfigError, ExperimentConfig, load_config_file, parse_value
from .graphdata import (
    Graph,
    GraphError,
    ParseError,
    SplitMasks,
    load_canonical,
    load_content_cites,
    make_split,
    normalize_adjacency,
    ring_graph,
    save_canonical,
)
from .hecheck import HEIncompatibleError, analyze, assert_compatible
from .model import encode_features, init_params, load_params, save_params
from .objectives import LossConfig
from .probe import evaluate_pipeline, export_embeddings
from .seeding import derive_seed
from .tape import check_gradients, op_check_tapes
from .trainer import DivergenceError, build_loss_tape, pretrain

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_INCOMPATIBLE = 3

#: Reference accuracies for the default configuration on the cora benchmark.
REFERENCE_ABLATION = {
    ("relu", "grace"): 0.808,
    ("relu", "poly"): 0.828,
    ("square", "grace"): 0.812,
    ("square", "poly"): 0.808,
}
REFERENCE_BEST_LAMBDA = 1e-2

DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); keep usage errors at 1
        raise UsageError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="key=value config file")
    for key, spec in SCHEMA.items():
        parser.add_argument(
            f"--{key}", dest=_dest(key), metavar=spec.kind.upper(),
            help=f"{spec.help} (default: {spec.default})",
        )


def _dest(key: str) -> str:
    return "opt_" + key.replace(".", "__")


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else None
    overrides = {}
    for key in SCHEMA:
        raw = getattr(args, _dest(key), None)
        if raw is not None:
            overrides[key] = parse_value(key, raw)
    return ExperimentConfig.resolve(file_values, overrides)


def _load_dataset(cfg: ExperimentConfig) -> tuple[Graph, SplitMasks]:
    fmt = str(cfg["dataset.format"])
    if fmt == "canonical":
        path = str(cfg["dataset.path"])
        if not path:
            raise ConfigError("dataset.path is required for dataset.format=canonical")
        graph, masks = load_canonical(path)
    elif fmt == "raw":
        content, cites = str(cfg["dataset.content"]), str(cfg["dataset.cites"])
        if not content or not cites:
            raise ConfigError("dataset.content and dataset.cites are required for dataset.format=raw")
        graph, _ = load_content_cites(content, cites, bool(cfg["dataset.feature_normalize"]))
        masks = None
    else:
        raise ConfigError(f"dataset.format must be canonical or raw; got {fmt!r}")
    if masks is None:
        masks = make_split(graph, derive_seed(cfg.seed, "split"))
    return graph, masks


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _pretrain_to_dir(graph: Graph, cfg: ExperimentConfig, out_dir: Path):
    train_cfg = cfg.train_config()
    params, log = pretrain(graph, train_cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "checkpoint.bin"
    save_params(params, checkpoint)
    _write_json(out_dir / "trainlog.json", {"config": cfg.echo(), "entries": log.entries()})
    final = log.losses[-1] if log.losses else float("nan")
    print(f"pretrain: {train_cfg.epochs} epochs in {log.wall_time_s:.1f}s, "
          f"final loss {final:.6g}, checkpoint {checkpoint}")
    return params


def _evaluate_to_dir(graph: Graph, masks: SplitMasks, params, cfg: ExperimentConfig, out_dir: Path):
    report = evaluate_pipeline(
        graph, params, masks, derive_seed(cfg.seed, "probe"),
        standardize=bool(cfg["probe.standardize"]),
        square_scale=float(cfg["model.square_scale"]),
        probe_lr=float(cfg["probe.lr"]),
        probe_epochs=int(cfg["probe.epochs"]),
        probe_weight_decay=float(cfg["probe.weight_decay"]),
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_json_dict()
    payload["config"] = cfg.echo()
    _write_json(out_dir / "evalreport.json", payload)
    adj = normalize_adjacency(graph)
    z = encode_features(adj, graph.features, params, float(cfg["model.square_scale"]))
    export_embeddings(z, graph.labels, out_dir / "embeddings.csv")
    print(f"eval: accuracy {report.accuracy:.4f} on {report.test_size} test nodes")
    return report


def cmd_ingest(args) -> int:
    graph, stats = load_content_cites(args.content, args.cites,
                                      feature_normalize=args.feature_normalize)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_canonical(graph, out)
    print(f"N={graph.num_nodes} F={graph.num_features} C={graph.num_classes} "
          f"E={graph.num_edges}")
    if stats.unknown_edges_dropped:
        print(f"dropped {stats.unknown_edges_dropped} edges naming unknown ids")
    if stats.duplicate_edges_merged:
        print(f"merged {stats.duplicate_edges_merged} duplicate/reversed edges")
    if stats.self_cites_dropped:
        print(f"dropped {stats.self_cites_dropped} self-citations")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _resolve_config(args)
    graph, _ = _load_dataset(cfg)
    _pretrain_to_dir(graph, cfg, cfg.out_dir)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    graph, masks = _load_dataset(cfg)
    params = load_params(args.checkpoint)
    _evaluate_to_dir(graph, masks, params, cfg, cfg.out_dir)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    graph, masks = _load_dataset(cfg)
    out_dir = cfg.out_dir
    params = _pretrain_to_dir(graph, cfg, out_dir)
    _evaluate_to_dir(graph, masks, params, cfg, out_dir)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    graph, masks = _load_dataset(cfg)
    out_dir = cfg.out_dir
    rows = []
    for activation in ("relu", "square"):
        for kind in ("grace", "poly"):
            cell = ExperimentConfig(values={**cfg.values,
                                            "model.activation": activation,
                                            "loss.kind": kind,
                                            "out.dir": str(out_dir / f"{activation}_{kind}")})
            reference = REFERENCE_ABLATION[(activation, kind)]
            try:
                params = _pretrain_to_dir(graph, cell, cell.out_dir)
                report = _evaluate_to_dir(graph, masks, params, cell, cell.out_dir)
                rows.append({"activation": activation, "loss": kind,
                             "accuracy": report.accuracy, "reference": reference,
                             "delta": report.accuracy - reference, "error": None})
            except (DivergenceError, GraphError, ValueError) as err:
                rows.append({"activation": activation, "loss": kind,
                             "accuracy": None, "reference": reference,
                             "delta": None, "error": str(err)})
    print(f"{'activation':<10} {'loss':<6} {'accuracy':>9} {'reference':>10} {'delta':>8}")
    for row in rows:
        acc = "failed" if row["accuracy"] is None else f"{row['accuracy']:.4f}"
        delta = "" if row["delta"] is None else f"{row['delta']:+.4f}"
        print(f"{row['activation']:<10} {row['loss']:<6} {acc:>9} "
              f"{row['reference']:>10.3f} {delta:>8}")
    _write_json(out_dir / "ablation.json", {
        "config": cfg.echo(),
        "cells": rows,
        "note": "reference values correspond to the default configuration on cora",
    })
    with open(out_dir / "ablation.csv", "w", encoding="utf-8") as f:
        f.write("activation,loss,accuracy,reference,delta\n")
        for row in rows:
            acc = "" if row["accuracy"] is None else repr(row["accuracy"])
            delta = "" if row["delta"] is None else repr(row["delta"])
            f.write(f"{row['activation']},{row['loss']},{acc},{row['reference']},{delta}\n")
    return EXIT_OK


def cmd_sweep_lambda(args) -> int:
    cfg = _resolve_config(args)
    graph, masks = _load_dataset(cfg)
    out_dir = cfg.out_dir
    if args.values:
        try:
            grid = [float(x) for x in args.values.split(",") if x.strip()]
        except ValueError as err:
            raise UsageError(f"--values must be a comma-separated float list: {err}") from err
    else:
        grid = list(DEFAULT_LAMBDA_GRID)
    rows = []
    for lam in grid:
        point = ExperimentConfig(values={**cfg.values, "loss.lambda": lam,
                                         "loss.kind": "poly",
                                         "out.dir": str(out_dir / f"lambda_{lam:g}")})
        try:
            params = _pretrain_to_dir(graph, point, point.out_dir)
            report = _evaluate_to_dir(graph, masks, params, point, point.out_dir)
            rows.append({"lambda": lam, "accuracy": report.accuracy, "failed": False})
        except (DivergenceError, ValueError) as err:
            print(f"lambda={lam:g} failed: {err}")
            rows.append({"lambda": lam, "accuracy": float("nan"), "failed": True})
    ok_rows = [r for r in rows if not r["failed"]]
    best = max(ok_rows, key=lambda r: r["accuracy"]) if ok_rows else None
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", encoding="utf-8") as f:
        f.write("lambda,accuracy,failed\n")
        for row in rows:
            acc = "nan" if math.isnan(row["accuracy"]) else repr(row["accuracy"])
            f.write(f"{row['lambda']:g},{acc},{str(row['failed']).lower()}\n")
    _write_json(out_dir / "sweep.json", {
        "config": cfg.echo(),
        "points": rows,
        "best_lambda": None if best is None else best["lambda"],
        "reference_best_lambda": REFERENCE_BEST_LAMBDA,
    })
    for row in rows:
        mark = " <- best" if best is not None and row is best else ""
        print(f"lambda={row['lambda']:g} accuracy={row['accuracy']:.4f}{mark}")
    if best is not None:
        agrees = "matches" if math.isclose(best["lambda"], REFERENCE_BEST_LAMBDA) else "differs from"
        print(f"best lambda {best['lambda']:g} {agrees} the reference {REFERENCE_BEST_LAMBDA:g} "
              "(soft check)")
    return EXIT_OK


def _dummy_pipeline_tape(cfg: ExperimentConfig, num_nodes: int):
    graph = ring_graph(num_nodes=num_nodes, num_features=3, seed=0)
    adj = normalize_adjacency(graph)
    train_cfg = cfg.train_config()
    params = init_params(graph.num_features, train_cfg.model.hidden,
                         train_cfg.model.out_dim, train_cfg.model.activation,
                         derive_seed(cfg.seed, "model-init"))
    return build_loss_tape(adj, graph.features, adj, graph.features, params,
                           train_cfg.loss, train_cfg.model.square_scale)


def cmd_hecheck(args) -> int:
    cfg = _resolve_config(args)
    tape = _dummy_pipeline_tape(cfg, args.dummy_nodes)
    report = analyze(tape)
    print(report.format_table(tape))
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_json_dict()
    payload["config"] = cfg.echo()
    _write_json(out_dir / "hecheck.json", payload)
    (out_dir / "circuit.txt").write_text(tape.dump() + "\n", encoding="utf-8")
    assert_compatible(tape)
    print("compatible: every op on the encrypted path is polynomial")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    worst = 0.0
    failed = []
    for op, tape in op_check_tapes(args.seed).items():
        report = check_gradients(tape, seed=args.seed)
        status = "ok" if report.passed else "FAIL"
        print(f"{op:<20} max_rel_err={report.max_rel_err:.3e} {status}")
        worst = max(worst, report.max_rel_err)
        if not report.passed:
            failed.append(op)
    graph = ring_graph(num_nodes=8, num_features=5, seed=args.seed)
    adj = normalize_adjacency(graph)
    params = init_params(graph.num_features, 4, 3, "square",
                         derive_seed(args.seed, "model-init"))
    tape = build_loss_tape(adj, graph.features, adj, graph.features, params,
                           LossConfig(kind="poly"))
    report = check_gradients(tape, seed=args.seed)
    status = "ok" if report.passed else "FAIL"
    print(f"{'poly_pipeline':<20} max_rel_err={report.max_rel_err:.3e} {status}")
    worst = max(worst, report.max_rel_err)
    if not report.passed:
        failed.append("poly_pipeline")
    print(f"overall max_rel_err={worst:.3e}")
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}")
        return EXIT_DIVERGED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polygcl",
                     description="Polynomial-only graph contrastive pre-training "
                                 "with static HE-compatibility analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="raw content/cites files to canonical JSON")
    p.add_argument("content")
    p.add_argument("cites")
    p.add_argument("--out", required=True)
    p.add_argument("--feature-normalize", action="store_true")
    p.set_defaults(func=cmd_ingest)

    for name, func, extra in (
        ("pretrain", cmd_pretrain, None),
        ("eval", cmd_eval, "checkpoint"),
        ("run", cmd_run, None),
        ("ablate", cmd_ablate, None),
        ("sweep-lambda", cmd_sweep_lambda, "values"),
        ("hecheck", cmd_hecheck, "dummy"),
    ):
        p = sub.add_parser(name)
        _add_config_flags(p)
        if extra == "checkpoint":
            p.add_argument("--checkpoint", required=True, help="parameter checkpoint to evaluate")
        elif extra == "values":
            p.add_argument("--values", help="comma-separated lambda grid")
        elif extra == "dummy":
            p.add_argument("--dummy-nodes", type=int, default=4,
                           help="size of the structural dummy graph")
        p.set_defaults(func=func)

    p = sub.add_parser("grad-check", help="finite-difference check of every op and the poly pipeline")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ParseError, GraphError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except HEIncompatibleError as err:
        print(f"incompatible: {err}", file=sys.stderr)
        return EXIT_INCOMPATIBLE


if __name__ == "__main__":
    sys.exit(main())
