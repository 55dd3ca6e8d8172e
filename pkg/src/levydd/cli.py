"""Command line interface: ``levydd {scale,law,exit,verify,simulate}``.

Exit codes: 0 success, 1 verification failure, 2 usage, configuration or
sample-size error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .errors import DomainError, InsufficientSampleError, InversionError
from .mc_oracle import DECOMP_FIELDS, iter_records, resolve_threads, write_decomp_csv
from .scale_functions import ScaleMethod, scale_table
from .verify_harness import (
    ConfigError,
    load_config,
    run_exit,
    run_law,
    run_verify,
    write_json,
    write_rows_csv,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI run configuration")
    common.add_argument("--seed", type=_u64, help="override the [sim] seed")
    common.add_argument(
        "--threads", type=_positive, help="worker processes (default: $LEVY_DD_THREADS or 1)"
    )
    common.add_argument("--out", default=".", help="output directory (created if missing)")

    parser = argparse.ArgumentParser(
        prog="levydd",
        description="Drawdown laws of spectrally negative Levy processes and their Monte Carlo check.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("scale", parents=[common], help="tabulate W, W', Z on the grid")
    p.add_argument(
        "--compare", action="store_true", help="also tabulate closed form against inversion"
    )
    p = sub.add_parser("law", parents=[common], help="evaluate the [law:*] sweeps")
    p.add_argument("--printed-cor1", action="store_true", help=argparse.SUPPRESS)
    sub.add_parser("exit", parents=[common], help="evaluate the [exit:*] sweeps")
    p = sub.add_parser("verify", parents=[common], help="compare [check:*] laws with Monte Carlo")
    p.add_argument("--printed-cor1", action="store_true", help=argparse.SUPPRESS)
    sub.add_parser("simulate", parents=[common], help="stream per-path decompositions to CSV")
    return parser


def _cmd_scale(cfg, args, out: Path):
    table = scale_table(cfg.model, cfg.gamma, cfg.method, cfg.grid())
    table.to_csv(out / "scale.csv")
    summary = {
        "model": cfg.model.key(),
        "gamma": cfg.gamma,
        "phi_gamma": table.phi_gamma,
        "method": table.method.value,
        "points": int(table.grid.size),
    }
    if args.compare:
        closed = scale_table(cfg.model, cfg.gamma, ScaleMethod.CLOSED_FORM, cfg.grid())
        inverted = scale_table(cfg.model, cfg.gamma, ScaleMethod.INVERTED, cfg.grid())
        rows = [
            {"x": x, "W_ClosedForm": a, "W_Inverted": b, "abs_diff": abs(a - b),
             "rel_diff": abs(a - b) / a if a else abs(b)}
            for x, a, b in zip(table.grid, closed.W, inverted.W)
        ]
        write_rows_csv(out / "scale_compare.csv", rows)
        worst = max(r["abs_diff"] for r in rows)
        worst_rel = max(r["rel_diff"] for r in rows)
        summary.update(max_abs_diff_W=worst, max_rel_diff_W=worst_rel)
        print(f"max |W_ClosedForm - W_Inverted| = {worst:.3e} (relative {worst_rel:.3e})")
    write_json(out / "scale_summary.json", summary)
    print(f"wrote {out / 'scale.csv'} ({table.method.value}, {table.grid.size} rows)")
    return EXIT_OK


def _cmd_law(cfg, args, out: Path):
    rows = run_law(cfg, printed_cor1=args.printed_cor1)
    write_rows_csv(out / "law.csv", rows)
    write_json(
        out / "law_summary.json",
        {"model": cfg.model.key(), "gamma": cfg.gamma, "rows": len(rows),
         "laws": sorted({r["law"] for r in rows})},
    )
    print(f"wrote {out / 'law.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _cmd_exit(cfg, args, out: Path):
    rows = run_exit(cfg)
    write_rows_csv(out / "exit.csv", rows)
    write_json(
        out / "exit_summary.json",
        {"model": cfg.model.key(), "gamma": cfg.gamma, "rows": len(rows),
         "identities": sorted({r["identity"] for r in rows})},
    )
    print(f"wrote {out / 'exit.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _cmd_verify(cfg, args, out: Path):
    report = run_verify(cfg, seed=args.seed, threads=args.threads, printed_cor1=args.printed_cor1)
    rows = [r.__dict__ for r in report.rows]
    write_rows_csv(out / "verify.csv", rows)
    summary = report.summary()
    summary.update(model=cfg.model.key(), gamma=cfg.gamma,
                   seed=cfg.seed if args.seed is None else args.seed)
    write_json(out / "verify_summary.json", summary)
    print(report.text())
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_simulate(cfg, args, out: Path):
    sim = cfg.sim_config(args.seed)
    sums = dict.fromkeys(DECOMP_FIELDS, 0.0)
    counts = dict.fromkeys(DECOMP_FIELDS, 0)

    def tally(records):
        for rec in records:
            for name in DECOMP_FIELDS:
                v = getattr(rec, name)
                if not math.isnan(v):
                    sums[name] += v
                    counts[name] += 1
            yield rec

    n = write_decomp_csv(out / "decomp.csv", tally(iter_records(sim, threads=args.threads)))
    write_json(
        out / "simulate_summary.json",
        {
            "model": cfg.model.key(),
            "gamma": sim.gamma,
            "dt": sim.dt,
            "mode": sim.mode.value,
            "d": sim.d,
            "seed": sim.seed,
            "n_paths": n,
            "mean": {k: (sums[k] / counts[k] if counts[k] else None) for k in DECOMP_FIELDS},
            "defined": counts,
        },
    )
    print(f"wrote {out / 'decomp.csv'} ({n} paths)")
    return EXIT_OK


COMMANDS = {
    "scale": _cmd_scale,
    "law": _cmd_law,
    "exit": _cmd_exit,
    "verify": _cmd_verify,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        resolve_threads(args.threads)
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except InsufficientSampleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DomainError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
