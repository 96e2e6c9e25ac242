"""Command line entry point: ``rectpoincare run|list-checks|constants|sweep``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import CheckSpec, ConfigError, ExperimentConfig, parse_config
from .expr import ExprError
from .grid import BASIS_PRODUCT, BASIS_RECT, Box, GridError, build_grid, is_power_of_two
from .kernels import DEFAULT_PAIR_BUDGET
from .plotting import plot_sweep, sweep_rows, write_sweep_csv
from .verify import CATALOG, CheckError, run_check, sweep
from .weights import WEIGHT_CATALOG, make_weight, weight_report

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
DEFAULT_OUTPUT = "rectpoincare-out"


def exit_status(reports) -> int:
    if any(r.error for r in reports):
        return EXIT_ERROR
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def summary_table(names, reports, timing: bool = False) -> str:
    head = ["check", "mode", "verdict", "lhs", "rhs", "ratio", "constant"] + (["time_s"] if timing else []) + ["notes"]
    rows = []
    for name, r in zip(names, reports):
        verdict = "ERROR" if r.error else ("PASS" if r.passed else "FAIL")
        notes = r.error or ", ".join(r.flags)
        row = [name, r.mode, verdict, _fmt(r.lhs), _fmt(r.rhs), _fmt(r.ratio), _fmt(r.empirical_constant)]
        if timing:
            row.append(f"{r.wall_time:.2f}")
        rows.append(row + [notes])
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)).rstrip() for line in [head] + rows]
    passed = sum(1 for r in reports if r.passed and not r.error)
    lines.append("")
    lines.append(f"{passed}/{len(reports)} passed")
    return "\n".join(lines) + "\n"


def write_records(path: Path, reports, timing: bool) -> None:
    with path.open("w") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_record(timing), sort_keys=True) + "\n")


def _run_many(jobs_list, workers: int):
    """Run ``(check_id, params, seed, budget)`` tuples in a thread pool; results keep input order."""
    def one(job):
        cid, params, seed, budget = job
        return run_check(cid, params, seed, 1, budget)

    if workers <= 1 or len(jobs_list) <= 1:
        return [one(j) for j in jobs_list]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs_list))


def _emit_sweep(out: Path, check_id: str, name: str, values, reports) -> tuple:
    rows = sweep_rows(name, values, reports)
    stem = f"sweep_{check_id}_{name}"
    csv_path = write_sweep_csv(out / f"{stem}.csv", rows)
    png_path = plot_sweep(out / f"{stem}.png", check_id, name, rows)
    return csv_path, png_path


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    try:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return execute(cfg, args)


def _apply_flags(cfg: ExperimentConfig, args) -> None:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.pair_budget is not None:
        cfg.pair_budget = args.pair_budget
    if args.resolution is not None:
        cfg.domain["resolution"] = args.resolution
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir


def execute(cfg: ExperimentConfig, args) -> int:
    _apply_flags(cfg, args)
    out = Path(cfg.output_dir or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    timing = bool(getattr(args, "timing", False))
    names, jobs = [], []
    for spec in cfg.checks:
        params = cfg.params_for(spec)
        if args.resolution is not None:
            params["resolution"] = args.resolution
        names.append(spec.name)
        jobs.append((spec.check_id, params, cfg.seed, cfg.pair_budget))
    sweep_jobs = []
    for sw in cfg.sweeps:
        base = cfg.params_for(CheckSpec(sw.check_id))
        for v in sw.values:
            params = dict(base)
            params[sw.param] = v
            names.append(f"{sw.check_id}[{sw.param}={json.dumps(v)}]")
            sweep_jobs.append((sw.check_id, params, cfg.seed, cfg.pair_budget))
    try:
        reports = _run_many(jobs + sweep_jobs, cfg.jobs)
    except CheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    write_records(out / "records.jsonl", reports, timing)
    (out / "summary.txt").write_text(summary_table(names, reports, timing))
    pos = len(jobs)
    for sw in cfg.sweeps:
        chunk = reports[pos:pos + len(sw.values)]
        pos += len(sw.values)
        _emit_sweep(out, sw.check_id, sw.param, sw.values, chunk)
    sys.stdout.write(summary_table(names, reports, timing))
    return exit_status(reports)


def cmd_list(args) -> int:
    for e in CATALOG.values():
        print(f"{e.check_id:3s}  [{e.mode}]  {e.title}")
        print(f"     {e.statement}")
        print(f"     after: {e.attribution}; pass: {e.tolerance}")
        if args.verbose:
            print("     parameters: " + ", ".join(f"{k}={json.dumps(v)}" for k, v in e.schema().items()))
    return EXIT_PASS


def cmd_constants(args) -> int:
    n = args.dim
    split = tuple(int(x) for x in args.split.split(",")) if args.split else None
    basis = BASIS_PRODUCT if split else BASIS_RECT
    try:
        if not is_power_of_two(args.resolution):
            raise GridError(f"resolution {args.resolution} is not a power of two")
        box = Box((args.lower,) * n, (args.upper,) * n, split)
        grid = build_grid(box, (args.resolution,) * n)
        w = make_weight(args.weight, grid)
        ps = tuple(float(p) for p in args.p.split(","))
        rep = weight_report(w, ps, basis, args.depth, seed=args.seed or 0)
    except (GridError, ExprError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"weight {args.weight!r} on [{args.lower:g},{args.upper:g}]^{n}, N={args.resolution}, basis {basis}")
    for p, v in rep.ap.items():
        print(f"  [w]_A{p:g} = {v:.6g}")
    print(f"  [w]_Ainf (Fujii-Wilson) = {rep.ainf:.6g}")
    print(f"  rectangles scanned: {rep.scanned}")
    return EXIT_PASS


def parse_range(text: str) -> list:
    """``a,b,c`` (JSON values) or ``lo:hi:count`` (linear) or ``lo:hi:count:log`` (geometric)."""
    if ":" in text and not text.strip().startswith("["):
        parts = text.split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
            raise ValueError(f"bad range {text!r}; use lo:hi:count or lo:hi:count:log")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("range count must be positive")
        if count == 1:
            return [lo]
        if len(parts) == 4:
            if lo <= 0 or hi <= 0:
                raise ValueError("geometric ranges need positive ends")
            return [lo * (hi / lo) ** (i / (count - 1)) for i in range(count)]
        return [lo + (hi - lo) * i / (count - 1) for i in range(count)]
    if text.strip().startswith("["):
        return json.loads(text)
    vals = []
    for part in text.split(","):
        part = part.strip()
        try:
            vals.append(json.loads(part))
        except ValueError:
            vals.append(part)
    return vals


def _set_pairs(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except ValueError:
            out[k.strip()] = v.strip()
    return out


def cmd_sweep(args) -> int:
    try:
        values = parse_range(args.range)
        params = _set_pairs(args.set)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.resolution is not None:
        params["resolution"] = args.resolution
    out = Path(args.output_dir or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    budget = args.pair_budget or DEFAULT_PAIR_BUDGET
    try:
        reports = sweep(args.check, args.param, values, params, args.seed or 0, 1, budget)
    except CheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    names = [f"{args.check}[{args.param}={json.dumps(v)}]" for v in values]
    write_records(out / "records.jsonl", reports, args.timing)
    (out / "summary.txt").write_text(summary_table(names, reports, args.timing))
    csv_path, png_path = _emit_sweep(out, args.check, args.param, values, reports)
    sys.stdout.write(summary_table(names, reports, args.timing))
    print(f"wrote {csv_path} and {png_path}")
    return exit_status(reports)


# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="random seed (pools, corpus)")
    p.add_argument("--resolution", type=_pow2, default=None, help="cells per axis, a power of two")
    p.add_argument("--jobs", type=int, default=None, help="checks run in parallel")
    p.add_argument("--output-dir", default=None, help=f"report directory (default {DEFAULT_OUTPUT})")
    p.add_argument("--pair-budget", type=int, default=None, help="cap on cell pairs per fractional kernel sum")
    p.add_argument("--timing", action="store_true", help="record wall times (reports stop being byte-identical)")


def _pow2(text: str) -> int:
    v = int(text)
    if not is_power_of_two(v):
        raise argparse.ArgumentTypeError(f"{v} is not a power of two")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rectpoincare", description="Numerical checks of Poincare-Sobolev "
                                     "inequalities on rectangles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the checks of an experiment file")
    p.add_argument("config")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list-checks", help="show the check catalog")
    p.add_argument("-v", "--verbose", action="store_true", help="also show parameters and defaults")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("constants", help="weight constants: A_p and Fujii-Wilson A_inf")
    p.add_argument("weight", help=f"catalog name ({', '.join(WEIGHT_CATALOG)}) or expression")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--lower", type=float, default=-1.0)
    p.add_argument("--upper", type=float, default=1.0)
    p.add_argument("--resolution", type=_pow2, default=64)
    p.add_argument("--split", default=None, help="block sizes n1,n2 for products of cubes")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--p", default="1,2", help="comma separated exponents")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("sweep", help="run one check over a range of parameter values")
    p.add_argument("check")
    p.add_argument("param")
    p.add_argument("range", help="a,b,c | lo:hi:count | lo:hi:count:log")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="fixed parameter override")
    _common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
