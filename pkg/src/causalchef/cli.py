"""Command-line entry points.

Every subcommand reads its parameters from a JSON config (``--config``) and
lets individual flags override config values.  Subcommands: ``collect``
(build a trajectory buffer), ``train`` (fit the causal action model),
``matrix`` (build/export the causal action matrix), ``eval`` (run planner
experiments), ``oracle`` (synthetic structure-recovery study).
"""

from __future__ import annotations

import argparse
import json
import sys

from .buffer import collect_buffer, load_buffer, save_buffer
from .features import FeatureSchema
from .harness import ExperimentConfig, OracleStudyConfig, evaluate, run_oracle_study
from .kitchen import load_layout
from .matrix import build_matrix, export_heatmap_triples, export_matrix
from .policies import PolicySpec
from .sca import TrainConfig, load_checkpoint, save_checkpoint, train


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _merged(config: dict, overrides: dict) -> dict:
    merged = dict(config)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _cmd_collect(args: argparse.Namespace) -> int:
    doc = _merged(
        _load_config(args.config),
        {
            "layout": args.layout,
            "schema": args.schema,
            "episodes": args.episodes,
            "horizon": args.horizon,
            "seed": args.seed[0] if args.seed else None,
            "policy": args.policy,
            "epsilon": args.epsilon,
            "seats": args.seats,
            "out": args.out,
        },
    )
    layout = load_layout(doc["layout"])
    schema = FeatureSchema.load(doc["schema"])
    policy = PolicySpec(kind=doc.get("policy", "greedy_chef"), epsilon=doc.get("epsilon", 0.1))
    buffer = collect_buffer(
        layout,
        policy,
        episodes=int(doc.get("episodes", 500)),
        horizon=int(doc.get("horizon", 400)),
        seed=int(doc.get("seed", 0)),
        schema=schema,
        seats=doc.get("seats", "both"),
    )
    save_buffer(buffer, doc["out"])
    print(f"wrote {len(buffer)} records to {doc['out']}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    doc = _merged(
        _load_config(args.config),
        {
            "buffer": args.buffer,
            "schema": args.schema,
            "iterations": args.iterations,
            "seed": args.seed[0] if args.seed else None,
            "out": args.out,
        },
    )
    schema = FeatureSchema.load(doc["schema"])
    buffer = load_buffer(doc["buffer"], schema=schema)
    config_fields = {
        k: doc[k]
        for k in ("lr", "lambda_reg", "edge_prior", "iterations", "batch_size", "seed", "hidden_sizes")
        if k in doc
    }
    config = TrainConfig(**config_fields)
    model = train(buffer, config, schema=schema)
    save_checkpoint(model, config, doc["out"])
    print(
        f"trained {config.iterations} iterations on {len(buffer)} records; "
        f"final causal loss {model.loss_trace['causal'][-1]:.4f}; wrote {doc['out']}"
        if model.loss_trace["causal"]
        else f"wrote untrained checkpoint {doc['out']}"
    )
    return 0


def _cmd_matrix(args: argparse.Namespace) -> int:
    doc = _merged(
        _load_config(args.config),
        {
            "checkpoint": args.checkpoint,
            "schema": args.schema,
            "out": args.out,
            "heatmap": args.heatmap,
            "threshold": args.threshold,
        },
    )
    schema = FeatureSchema.load(doc["schema"])
    model, _ = load_checkpoint(doc["checkpoint"])
    matrix = build_matrix(
        model.gates(),
        schema,
        provenance=doc["checkpoint"],
        expected_fingerprint=model.schema_fingerprint,
    )
    export_matrix(matrix, doc["out"], threshold=doc.get("threshold"))
    print(f"wrote {matrix.entries.shape[0]}x{matrix.entries.shape[1]} matrix to {doc['out']}")
    if doc.get("heatmap"):
        export_heatmap_triples(matrix, doc["heatmap"], threshold=doc.get("threshold"))
        print(f"wrote heatmap triples to {doc['heatmap']}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    doc = _load_config(args.config)
    if args.gamma is not None:
        doc["gamma"] = args.gamma
    if args.seed:
        doc["seeds"] = args.seed
    if args.out is not None:
        doc["out_dir"] = args.out
    if args.workers is not None:
        doc["workers"] = args.workers
    config = ExperimentConfig.from_dict(doc)
    summary = evaluate(config)
    print(summary.table(), end="")
    print(f"artifacts in {config.out_dir}")
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    doc = _load_config(args.config)
    if args.seed:
        doc["seeds"] = args.seed
    config = OracleStudyConfig.from_dict(doc)
    summary = run_oracle_study(config, out_dir=args.out)
    print(
        f"ridge F1 {summary['mean_ridge_f1']:.3f}  gate F1 {summary['mean_gate_f1']:.3f}  "
        f"agreement {summary['mean_agreement']:.3f}"
    )
    if args.out:
        print(f"summary in {args.out}/oracle_summary.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalchef", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
        p.add_argument("--out", help="output path or directory")

    p = sub.add_parser("collect", help="collect a trajectory buffer")
    _common(p)
    p.add_argument("--layout", help="layout JSON path")
    p.add_argument("--schema", help="schema JSON path")
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--policy", choices=["greedy_chef", "random_legal"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seats", choices=["both", "0", "1"])
    p.set_defaults(func=_cmd_collect)

    p = sub.add_parser("train", help="fit the causal action model")
    _common(p)
    p.add_argument("--buffer", help="buffer JSONL path")
    p.add_argument("--schema", help="schema JSON path")
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("matrix", help="build and export the causal action matrix")
    _common(p)
    p.add_argument("--checkpoint", help="trained checkpoint path")
    p.add_argument("--schema", help="schema JSON path")
    p.add_argument("--heatmap", help="also write (parent, child, weight) triples CSV")
    p.add_argument("--threshold", type=float, help="zero entries below this in exports")
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser("eval", help="run planner experiments")
    _common(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("oracle", help="synthetic structure-recovery study")
    _common(p)
    p.set_defaults(func=_cmd_oracle)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
