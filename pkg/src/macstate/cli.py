"""``macstate`` command line: one subcommand per solver, JSON run records, CSV tables.

Exit codes: 0 ok, 2 bad input, 3 infeasible, 4 internal error, 5 claim check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .binaryexample import ExampleError, ExampleParams, copy_state_operating_point, verify_claims
from .channels import ChannelError, InnerDistribution, make_example_channel, parse_channel, serialize_channel
from .codingsim import InfeasiblePoint, SimConfig, SimError, run_simulation
from .dmbounds import (
    DEFAULT_LAMBDAS,
    OptimizerConfig,
    OptimizerError,
    common_capacity,
    config_dict,
    inner_region,
    outer_region,
)
from .gaussian import GaussianError, GaussianParams, gaussian_common_capacity, gaussian_region, region_rows

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INTERNAL, EXIT_CLAIM = 0, 2, 3, 4, 5


class InputError(Exception):
    """Bad user input (maps to exit code 2)."""


class Infeasible(Exception):
    """No feasible point (maps to exit code 3)."""


# --- output helpers ----------------------------------------------------------

def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, float)):
        return format(float(x), ".17g") if isinstance(x, float) else str(x)
    return str(x)


def csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    """Parse a CSV written by ``csv_text``; numeric cells become floats."""
    rows = list(csv.reader(io.StringIO(text)))
    out = []
    for row in rows[1:]:
        d = {}
        for k, v in zip(rows[0], row):
            try:
                d[k] = float(v)
            except ValueError:
                d[k] = v
        out.append(d)
    return out


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_outputs(out_dir: Path, stem: str, record: dict, tables: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.json").write_text(json.dumps(_jsonable(record), indent=2) + "\n",
                                          encoding="utf-8", newline="\n")
    for name, text in tables.items():
        (out_dir / name).write_text(text, encoding="utf-8", newline="\n")


def run_record(command: str, config: dict, seed: int, wall: float, results) -> dict:
    return {"command": command, "version": __version__, "seed": seed, "config": config,
            "wall_clock": wall, "results": results}


# --- loading -------------------------------------------------------------------

def load_channel(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read channel file {path}: {exc.strerror}") from None
    try:
        return parse_channel(text)
    except ChannelError as exc:
        raise InputError(f"{path}: {exc}") from None


def load_point(path: str) -> InnerDistribution:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read operating-point file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return InnerDistribution.from_dict(doc)
    except (ChannelError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("MACSTATE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"MACSTATE_THREADS={env!r} is not an integer") from None
        if n < 1:
            raise InputError("MACSTATE_THREADS must be >= 1")
        return n
    return 1


def _opt_cfg(args) -> OptimizerConfig:
    try:
        return OptimizerConfig(restarts=args.restarts, refine_iters=args.refine_iters,
                               seed=args.seed, tolerance=args.tolerance,
                               u_size=args.u_size, v_size=args.v_size)
    except OptimizerError as exc:
        raise InputError(str(exc)) from None


# --- subcommands ---------------------------------------------------------------

REGION_COLUMNS = ["lambda", "rc", "r1", "objective", "r1_bound", "rsum_bound"]


def cmd_dm_region(args) -> int:
    channel = load_channel(args.channel)
    cfg = _opt_cfg(args)
    lambdas = args.lambdas or list(DEFAULT_LAMBDAS)
    t0 = time.perf_counter()
    try:
        solver = inner_region if args.command == "dm-inner" else outer_region
        region = solver(channel, cfg, lambdas)
    except OptimizerError as exc:
        raise Infeasible(str(exc)) from None
    wall = time.perf_counter() - t0
    results = {
        "kind": region.kind,
        "infeasible": region.infeasible,
        "notes": region.notes,
        "points": [dict(row, distribution=(p.params.to_dict() if p.params is not None else None))
                   for row, p in zip(region.rows(), region.points)],
        "envelope": region.envelope(),
    }
    config = {"channel": serialize_channel(channel), "optimizer": config_dict(cfg), "lambdas": lambdas}
    stem = args.command.replace("-", "_")
    write_outputs(Path(args.out_dir), stem, run_record(args.command, config, args.seed, wall, results),
                  {f"{stem}.csv": csv_text(region.rows(), REGION_COLUMNS)})
    if region.infeasible:
        print(f"{args.command}: no feasible distribution found for some weights", file=sys.stderr)
        return EXIT_INFEASIBLE
    best = max(region.points, key=lambda p: p.pair.rc + p.pair.r1)
    print(f"{args.command}: {len(region.points)} boundary points; max Rc+R1 = {best.pair.rc + best.pair.r1:.6f}")
    return EXIT_OK


def cmd_dm_common(args) -> int:
    channel = load_channel(args.channel)
    cfg = _opt_cfg(args)
    t0 = time.perf_counter()
    try:
        value, dist = common_capacity(channel, cfg)
    except OptimizerError as exc:
        raise Infeasible(str(exc)) from None
    wall = time.perf_counter() - t0
    results = {"capacity": value, "distribution": dist.to_dict()}
    config = {"channel": serialize_channel(channel), "optimizer": config_dict(cfg)}
    write_outputs(Path(args.out_dir), "dm_common", run_record(args.command, config, args.seed, wall, results),
                  {"dm_common.csv": csv_text([{"capacity": value}], ["capacity"])})
    print(f"dm-common: best found common-message rate {value:.6f} bits")
    return EXIT_OK


def cmd_gaussian(args) -> int:
    try:
        params = GaussianParams(args.p1, args.p2, args.q, args.n0)
        t0 = time.perf_counter()
        if args.common:
            cap, corr = gaussian_common_capacity(params, args.grid)
            results = {"capacity": cap, "rho12": corr.rho12, "rho1s": corr.rho1s}
            rows, cols = [results], ["capacity", "rho12", "rho1s"]
        else:
            region = gaussian_region(params, args.grid, args.lambdas or list(DEFAULT_LAMBDAS), args.reading)
            rows, cols = region_rows(region), ["lambda", "rc", "r1", "rho12", "rho1s"]
            results = {"points": rows, "notes": region.notes}
        wall = time.perf_counter() - t0
    except GaussianError as exc:
        raise InputError(str(exc)) from None
    config = {"p1": args.p1, "p2": args.p2, "q": args.q, "n0": args.n0, "grid": args.grid,
              "common": args.common, "reading": args.reading, "lambdas": args.lambdas}
    write_outputs(Path(args.out_dir), "gaussian", run_record(args.command, config, args.seed, wall, results),
                  {"gaussian.csv": csv_text(rows, cols)})
    if args.common:
        print(f"gaussian: common-message capacity {results['capacity']:.6f} bits")
    else:
        print(f"gaussian: {len(rows)} boundary points")
    return EXIT_OK


def cmd_example(args) -> int:
    try:
        params = ExampleParams(args.p, args.q1, args.q2, args.u_size)
        cfg = OptimizerConfig(restarts=args.restarts, refine_iters=args.refine_iters, seed=args.seed)
        t0 = time.perf_counter()
        report = verify_claims(params, cfg)
        wall = time.perf_counter() - t0
    except (ExampleError, OptimizerError) as exc:
        raise InputError(str(exc)) from None
    results = report.to_dict()
    config = {"p": args.p, "q1": args.q1, "q2": args.q2, "u_size": args.u_size,
              "restarts": args.restarts, "refine_iters": args.refine_iters}
    cols = ["closed_form", "optimized_capacity", "gp_rate", "gap"]
    write_outputs(Path(args.out_dir), "example", run_record(args.command, config, args.seed, wall, results),
                  {"example.csv": csv_text([results], cols)})
    print(f"example: capacity {report.closed_form:.6f} (optimized {report.optimized_capacity:.6f}), "
          f"GP rate {report.gp_rate:.6f}, gap {report.gap:.6f}")
    if not report.passed:
        for m in report.messages:
            print(f"claim check failed: {m}", file=sys.stderr)
        return EXIT_CLAIM
    return EXIT_OK


SIM_COLUMNS = ["n", "covering_failure_rate", "covering_failure_se", "gp_failure_rate", "gp_failure_se",
               "decoding_error_rate", "decoding_error_se", "m_v", "j_v", "m_c", "m_1", "j_u"]


def cmd_simulate(args) -> int:
    channel = load_channel(args.channel)
    dist = load_point(args.point)
    workers = _threads(args)
    reports, rows = [], []
    t0 = time.perf_counter()
    for n in args.n:
        try:
            cfg = SimConfig(channel, dist, n=n, b=args.b, epsilon=args.epsilon, delta=args.delta,
                            trials=args.trials, seed=args.seed, rate_scale=args.rate_scale,
                            allow_overrate=args.allow_overrate, decoder=args.decoder, workers=workers)
            rep = run_simulation(cfg)
        except InfeasiblePoint as exc:
            raise Infeasible(str(exc)) from None
        except (SimError, ChannelError) as exc:
            raise InputError(str(exc)) from None
        reports.append(rep.to_dict(include_timing=False))
        row = rep.to_dict(include_timing=False)
        rows.append(dict(n=n, **{k: row[k] for k in SIM_COLUMNS[1:7]}, **row["sizes"]))
    wall = time.perf_counter() - t0
    config = {"channel": serialize_channel(channel), "operating_point": dist.to_dict(), "n": args.n,
              "b": args.b, "epsilon": args.epsilon, "delta": args.delta, "trials": args.trials,
              "rate_scale": args.rate_scale, "allow_overrate": args.allow_overrate,
              "decoder": args.decoder}
    write_outputs(Path(args.out_dir), "simulate", run_record(args.command, config, args.seed, wall, reports),
                  {"simulate_trend.csv": csv_text(rows, SIM_COLUMNS)})
    for r in rows:
        print(f"n={r['n']}: covering failure {r['covering_failure_rate']:.4f}, "
              f"GP failure {r['gp_failure_rate']:.4f}, decoding error {r['decoding_error_rate']:.4f}")
    return EXIT_OK


def cmd_write_example(args) -> int:
    try:
        channel = make_example_channel(args.p, args.q1, args.q2)
        point = copy_state_operating_point(min(args.q1, 0.5))
    except (ChannelError, ExampleError) as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "example_channel.json").write_text(serialize_channel(channel), encoding="utf-8", newline="\n")
    (out / "example_point.json").write_text(json.dumps(point.to_dict(), indent=2) + "\n",
                                            encoding="utf-8", newline="\n")
    print(f"wrote {out / 'example_channel.json'} and {out / 'example_point.json'}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    common.add_argument("--out-dir", default=".", help="directory for JSON/CSV outputs")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker processes (default: $MACSTATE_THREADS or 1)")

    p = _Parser(prog="macstate", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def optimizer_flags(sp):
        sp.add_argument("--restarts", type=int, default=64)
        sp.add_argument("--refine-iters", type=int, default=600)
        sp.add_argument("--tolerance", type=float, default=1e-6)
        sp.add_argument("--u-size", type=int, default=None)
        sp.add_argument("--v-size", type=int, default=None)

    for name, fn, helptext in (("dm-inner", cmd_dm_region, "achievable region (scalarized boundary)"),
                               ("dm-outer", cmd_dm_region, "outer bound (scalarized boundary)"),
                               ("dm-common", cmd_dm_common, "common-message capacity")):
        sp = sub.add_parser(name, help=helptext, parents=[common])
        sp.add_argument("channel", help="channel-spec file")
        optimizer_flags(sp)
        if name != "dm-common":
            sp.add_argument("--lambdas", type=float, nargs="+", default=None)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("gaussian", help="Gaussian model region or common-message capacity", parents=[common])
    sp.add_argument("--p1", type=float, required=True)
    sp.add_argument("--p2", type=float, required=True)
    sp.add_argument("--q", type=float, required=True)
    sp.add_argument("--n0", type=float, required=True)
    sp.add_argument("--grid", type=int, default=101)
    sp.add_argument("--common", action="store_true", help="report the common-message capacity only")
    sp.add_argument("--reading", choices=["rho1s", "rho2s-zero"], default="rho1s",
                    help="reading of the correlation in the R1 bound")
    sp.add_argument("--lambdas", type=float, nargs="+", default=None)
    sp.set_defaults(func=cmd_gaussian)

    sp = sub.add_parser("example", help="binary example: capacity and Gelfand-Pinsker gap", parents=[common])
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--q1", type=float, required=True)
    sp.add_argument("--q2", type=float, default=0.5)
    sp.add_argument("--u-size", type=int, default=4)
    sp.add_argument("--restarts", type=int, default=64)
    sp.add_argument("--refine-iters", type=int, default=600)
    sp.set_defaults(func=cmd_example)

    sp = sub.add_parser("simulate", help="Monte-Carlo run of the block-Markov scheme", parents=[common])
    sp.add_argument("channel", help="channel-spec file")
    sp.add_argument("point", help="operating-point file (inner distribution JSON)")
    sp.add_argument("--n", type=_positive_int, nargs="+", default=[8, 12, 16], help="block lengths")
    sp.add_argument("--b", type=_positive_int, default=3, help="message blocks B")
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.add_argument("--delta", type=float, default=0.15)
    sp.add_argument("--trials", type=_positive_int, default=500)
    sp.add_argument("--rate-scale", type=float, default=1.0)
    sp.add_argument("--allow-overrate", action="store_true",
                    help="permit rate_scale > 1 (diagnostics beyond the bound)")
    sp.add_argument("--decoder", choices=["joint", "sequential"], default="joint")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("write-example", help="write the binary example channel and operating point",
                        parents=[common])
    sp.add_argument("--p", type=float, default=0.1)
    sp.add_argument("--q1", type=float, default=0.5)
    sp.add_argument("--q2", type=float, default=0.5)
    sp.set_defaults(func=cmd_write_example)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"macstate: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Infeasible as exc:
        print(f"macstate: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal-error code
        print(f"macstate: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
