"""Command line entry point: ``sparse-accel {simulate,sweep,pareto,preprocess,calibrate}``.

Exit codes: 0 success, 1 usage error, 2 invalid input (bad file, config or
tensor), 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .arch_config import PRESET_NAMES, ArchConfig, BorrowWindow, CoreDims, Mode, load_config, preset
from .errors import SparseAccelError
from .metrics import calibrate, cost, effective_efficiency, load_table6, pareto

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _load_config(spec: str) -> ArchConfig:
    if spec in PRESET_NAMES:
        return preset(spec)
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"config {spec!r} is neither a preset ({', '.join(PRESET_NAMES)}) "
                                "nor a file")
    return load_config(path)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .engine import run, simulate_griffin
    from .sweep import category_for, net_speedup, resolve_workload

    config = _load_config(args.config)
    category = args.category or category_for(config).value
    wl = resolve_workload(args.workload, category, args.seed)
    reports, pairs = [], []
    for problem, weight in wl.items:
        if config.mode is Mode.GRIFFIN:
            rep = simulate_griffin(problem, config, category, bandwidth=args.bandwidth)
        else:
            rep = run(problem, config, bandwidth=args.bandwidth)
        reports.append(rep.to_dict())
        pairs.append((rep.dense_cycles if weight is None else weight, rep.speedup))
    dense, actual = net_speedup(pairs)
    speedup = dense / actual if actual > 0 else 0.0
    result = {
        "config": config.label,
        "workload": args.workload,
        "category": category,
        "seed": args.seed,
        "speedup": speedup,
        "functional_ok": all(r["functional_ok"] for r in reports),
        "cost": effective_efficiency(cost(config), speedup).to_dict(),
        "reports": reports,
    }
    _emit(json.dumps(result, indent=2) + "\n", args.out)
    return EXIT_OK if result["functional_ok"] else EXIT_RUNTIME


def cmd_sweep(args) -> int:
    from .sweep import Constraints, SweepSpace, enumerate_space, summarize, sweep, write_rows

    spec = json.loads(Path(args.space).read_text()) if args.space else {}
    space = SweepSpace.from_dict(spec.get("space", {"modes": ["sparse_b"], "db1": [1, 2, 3, 4]}))
    cons = dict(spec.get("constraints", {}))
    if args.max_amux is not None:
        cons["max_amux"] = args.max_amux
    if args.max_bmux is not None:
        cons["max_bmux"] = args.max_bmux
    configs = enumerate_space(space, Constraints(**cons))
    workloads = args.workload or spec.get("workloads") or ["gemm:64,256,64:0.5,0.2"]
    rows = sweep(configs, workloads, seed=args.seed, jobs=args.jobs, category=args.category,
                 bandwidth=args.bandwidth)
    if args.summary:
        rows = summarize(rows)
    if args.out:
        write_rows(rows, args.out)
    else:
        write_rows(rows, sys.stdout)
    return EXIT_OK


def cmd_pareto(args) -> int:
    import csv

    from .sweep import read_rows

    rows = read_rows(args.input)
    if not rows:
        raise ValueError(f"{args.input}: no rows")
    for metric in (args.x, args.y):
        if metric not in rows[0]:
            raise ValueError(f"unknown metric {metric!r}; columns are {list(rows[0])}")
    points = [(float(r[args.x]), float(r[args.y]), i) for i, r in enumerate(rows)]
    keep = [rows[i] for _, _, i in pareto(points)]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(keep)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_preprocess(args) -> int:
    import numpy as np

    from .preprocess import compress_b, decode_b, deserialize, serialize
    from .workload import GemmProblem, block, deblock, read_tensor, shuffle

    b = read_tensor(args.tensor)
    if b.ndim != 2:
        raise ValueError(f"{args.tensor}: expected a 2-D weight tensor")
    window = BorrowWindow(*(int(x) for x in args.window.split(","))).check()
    core = CoreDims()
    problem = GemmProblem.from_arrays(np.zeros((1, b.shape[0]), np.int8), b)
    blocked = shuffle(block(problem, core, "B"), args.shuffle)
    stream = compress_b(blocked, window, core)
    data = serialize(stream)
    # verify before writing anything
    restored = decode_b(deserialize(data))
    if not np.array_equal(deblock(restored), problem.b):
        raise RuntimeError("compressed stream does not decode back to the input tensor")
    Path(args.out).write_bytes(data)
    chunks = int(stream.chunk_count_per_column.max(initial=0))
    print(json.dumps({"window": list(window), "k": stream.k, "n": stream.n,
                      "original_chunks": stream.n_chunks_original, "compressed_chunks": chunks,
                      "metadata_bits": stream.metadata_bits, "bytes": len(data)}))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    units = calibrate(load_table6(args.table))
    if args.out:
        units.save(args.out)
    lines = []
    for name, res in units.residuals.items():
        (pp, pa), (ap, aa) = res["power_total"], res["area_total"]
        lines.append(f"{name:12s} power {pp:7.1f} / {pa:6.1f} mW   area {ap:7.1f} / {aa:6.1f} kum2")
    sys.stderr.write("\n".join(lines) + "\n")
    if not args.out:
        sys.stdout.write(json.dumps(units.to_dict(), indent=2) + "\n")
    return EXIT_OK


# -- wiring --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparse-accel", description="Sparse DNN accelerator simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--category", choices=["dense", "A", "B", "AB"], default=None,
                        help="model category (default: the design's own)")
        sp.add_argument("--bandwidth", choices=["provisioned", "configured", "unbounded"],
                        default="provisioned")

    s = sub.add_parser("simulate", help="run one design on one workload")
    s.add_argument("--config", required=True, help="preset name or JSON config file")
    s.add_argument("--workload", required=True,
                   help="benchmark name, gemm:M,K,N[:DA,DB] or JSON workload file")
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="evaluate a design space")
    s.add_argument("--space", default=None, help="JSON file with 'space', 'constraints', 'workloads'")
    s.add_argument("--workload", action="append", default=None)
    s.add_argument("--max-amux", type=int, default=None)
    s.add_argument("--max-bmux", type=int, default=None)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--summary", action="store_true", help="geometric mean over workloads")
    common(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("pareto", help="frontier of a sweep CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--x", default="tops_per_w")
    s.add_argument("--y", default="effective_tops_per_w")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_pareto)

    s = sub.add_parser("preprocess", help="compress a weight tensor file")
    s.add_argument("--tensor", required=True)
    s.add_argument("--window", required=True, help="d1,d2,d3")
    s.add_argument("--shuffle", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("calibrate", help="fit unit costs to the bundled breakdowns")
    s.add_argument("--table", default=None, help="alternative calibration JSON")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"sparse-accel: error: {exc}\n")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (SparseAccelError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"sparse-accel: {type(exc).__name__}: {exc}\n")
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"sparse-accel: runtime failure: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
