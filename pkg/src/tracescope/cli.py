"""Command-line entry point; every command is a thin wrapper over the library.

Exit codes are stable for scripting: 0 success, 1 validation failure,
2 usage error (argparse's own), 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .errors import TraceError
from .model import Mode, SelectorTuple, View
from .query import QueryService
from .server import make_server, sanitize
from .store import open_run, validate_run
from .toytrain import train_and_record

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_IO = 3

_ENV_DATA_ROOT = "TRACESCOPE_DATA_ROOT"


def _default_data_root() -> str:
    return os.environ.get(_ENV_DATA_ROOT, ".")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracescope",
                                     description="Record, validate, and inspect "
                                                 "training-trace runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="start the query API (and UI, if built)")
    serve.add_argument("--data-root", default=_default_data_root(),
                       help=f"directory of run directories (or ${_ENV_DATA_ROOT})")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8777,
                       help="0 picks an ephemeral port")
    serve.add_argument("--ui-root", default=None,
                       help="directory of built UI assets to serve at /")

    demo = sub.add_parser("demo-train", help="train the built-in toy model and "
                                             "record a complete run")
    demo.add_argument("--steps", type=int, default=2000)
    demo.add_argument("--seed", type=int, default=1)
    demo.add_argument("--out", required=True, help="run directory to create")
    demo.add_argument("--growth", default="1.5",
                      help="recording schedule growth factor (> 1)")
    demo.add_argument("--inject-bug", action="store_true",
                      help="detach the aux-loss gradient path (slower learning, "
                           "vanishing aux gradients)")

    validate = sub.add_parser("validate", help="check a run directory; exit 1 on "
                                               "any diagnostic")
    validate.add_argument("run_dir")

    export = sub.add_parser("export", help="dump one node's records at one step")
    export.add_argument("--run", required=True, help="run directory")
    export.add_argument("--trial", required=True)
    export.add_argument("--step", type=int, required=True)
    export.add_argument("--node", required=True)
    export.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    export.add_argument("--out", default="-", help="output file, '-' for stdout")

    stats = sub.add_parser("stats", help="print a summary of a run directory")
    stats.add_argument("run_dir")
    return parser


def cmd_serve(args: argparse.Namespace) -> int:
    data_root = Path(args.data_root)
    if not data_root.exists():
        print(f"data root {data_root} does not exist", file=sys.stderr)
        return EXIT_IO
    ui_root = args.ui_root
    if ui_root is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if bundled.is_dir():
            ui_root = bundled
    try:
        server = make_server(data_root, host=args.host, port=args.port,
                             ui_root=ui_root, verbose=True)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_IO
    host, port = server.server_address[:2]
    print(f"serving {data_root} at http://{host}:{port}/ (API under /api)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_demo_train(args: argparse.Namespace) -> int:
    out = train_and_record(steps=args.steps, seed=args.seed, out_path=args.out,
                           growth=args.growth, inject_bug=args.inject_bug)
    print(f"run written to {out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.exists():
        print(f"run directory {run_dir} does not exist", file=sys.stderr)
        return EXIT_IO
    diagnostics = validate_run(run_dir)
    for diag in diagnostics:
        print(f"{diag.severity}: [{diag.code}] {diag.location}: {diag.message}",
              file=sys.stderr)
    if diagnostics:
        print(f"{len(diagnostics)} diagnostic(s)", file=sys.stderr)
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


_EXPORT_COLUMNS = ["node", "variant", "mode", "loss", "view", "index", "count",
                   "mean", "std", "abs_mean", "min", "max", "l2_norm",
                   "frac_zero", "count_nan", "count_inf", "values"]


def _export_rows(service: QueryService, run_id: str, trial: str, step: int,
                 node: str):
    """One row per (variant, mode, view projection), stable column order."""
    graph = service.get_graph(run_id)
    spec = next((n for n in graph["nodes"] if n["node_id"] == node), None)
    if spec is None:
        raise TraceError(f"unknown node {node!r}")
    manifest = service.get_manifest(run_id)
    modes: list[Mode] = [Mode.forward()]
    modes += [Mode.gradient(loss) for loss in manifest["losses"]]

    for variant in spec["variant_keys"]:
        for mode in modes:
            base = dict(trial_id=trial, step=step, node_id=node, variant_key=variant,
                        mode=mode)
            try:
                agg = service.get_record(run_id, SelectorTuple(
                    view=View.aggregate(), **base))
            except TraceError:
                continue  # this (variant, mode) was not recorded at the step
            yield {"node": node, "variant": variant, "mode": mode.kind,
                   "loss": mode.loss_id or "", "view": "aggregate", "index": "",
                   **agg["stats"], "values": ""}
            per_neuron = service.get_record(run_id, SelectorTuple(
                view=View.per_neuron(), **base))
            for j, stats in enumerate(per_neuron["stats"]):
                yield {"node": node, "variant": variant, "mode": mode.kind,
                       "loss": mode.loss_id or "", "view": "per_neuron", "index": j,
                       **stats, "values": ""}
            for retained in agg["retained_samples"]:
                sample = service.get_record(run_id, SelectorTuple(
                    view=View.sample(retained), **base))
                yield {"node": node, "variant": variant, "mode": mode.kind,
                       "loss": mode.loss_id or "", "view": "sample", "index": retained,
                       "count": "", "mean": "", "std": "", "abs_mean": "", "min": "",
                       "max": "", "l2_norm": "", "frac_zero": "", "count_nan": "",
                       "count_inf": "",
                       "values": json.dumps(sanitize(sample["values"]))}


def cmd_export(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    if not run_dir.exists():
        print(f"run directory {run_dir} does not exist", file=sys.stderr)
        return EXIT_IO
    service = QueryService(run_dir.parent)
    run_id = run_dir.name
    rows = _export_rows(service, run_id, args.trial, args.step, args.node)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        if args.format == "csv":
            writer = csv.DictWriter(out, fieldnames=_EXPORT_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: sanitize(v) for k, v in row.items()})
        else:
            for row in rows:
                out.write(json.dumps(sanitize(row)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "manifest.json").exists():
        print(f"{run_dir} is not a run directory", file=sys.stderr)
        return EXIT_IO
    reader = open_run(run_dir)
    manifest = reader.manifest
    print(f"run_id:          {manifest.run_id}")
    print(f"finalized:       {reader.finalized}")
    print(f"trials:          {', '.join(manifest.trial_ids) or '(none)'}")
    print(f"losses:          {', '.join(manifest.losses) or '(none)'}")
    print(f"max_samples:     {manifest.max_samples}")
    print(f"schedule_growth: {manifest.schedule_growth}")
    per_category: dict[tuple[str, str], int] = {}
    for entry in reader.steps:
        key = (entry.trial_id, entry.category)
        per_category[key] = per_category.get(key, 0) + 1
    print(f"recorded steps:  {len(reader.steps)}")
    for (trial, category), count in sorted(per_category.items()):
        print(f"  {trial} / {category}: {count}")
    graph = reader.graph()
    if graph is not None:
        print(f"graph nodes:     {len(graph.nodes)} ({len(graph.edges)} edges)")
    chunk_bytes = sum(p.stat().st_size for p in reader.chunk_dir.glob("*.chunk"))
    print(f"chunk storage:   {chunk_bytes} bytes")
    return EXIT_OK


_COMMANDS = {
    "serve": cmd_serve,
    "demo-train": cmd_demo_train,
    "validate": cmd_validate,
    "export": cmd_export,
    "stats": cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except TraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
