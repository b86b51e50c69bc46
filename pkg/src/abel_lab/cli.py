"""Command line entry point: ``abel-lab run | sweep | validate``."""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

from .errors import SpecParseError, ValidationError
from .scenario import load_scenario, with_override

OUT_ENV = "ABEL_LAB_OUT"
EXIT_OK, EXIT_CHECK, EXIT_INVALID = 0, 1, 2
SWEEP_PARAMS = ("alpha", "K", "t", "dim")


def _out_dir(arg, sc) -> Path:
    if arg:
        return Path(arg)
    if sc.output_dir:
        return Path(sc.output_dir)
    return Path(os.environ.get(OUT_ENV, "abel_lab_out")) / sc.name


def _print_checks(result) -> None:
    for c in result.checks:
        flag = "PASS" if c.passed else ("FAIL" if c.hard else "WARN")
        print(f"{flag:4}  {c.module:14} {c.name:34} value={c.value:.3e} threshold={c.threshold:.3e}")


def cmd_validate(args) -> int:
    sc, _ = load_scenario(args.scenario)
    print(f"{sc.name}: valid ({len(sc.checks)} check suites)")
    return EXIT_OK


def cmd_run(args) -> int:
    from .runner import run_scenario

    sc, base = load_scenario(args.scenario)
    out = _out_dir(args.out, sc)
    result = run_scenario(sc, base, out, seed=args.seed, figures=not args.no_figures)
    _print_checks(result)
    if "split_regroup_agreement" in {c.name for c in result.checks}:
        c = next(c for c in result.checks if c.name == "split_regroup_agreement")
        print(f"unsplit vs split agreement: max |difference| = {c.value:.3e}")
    print(f"artifacts: {out}")
    return result.exit_code


def _parse_values(text: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"--values: cannot parse {text!r} as numbers") from None


def cmd_sweep(args) -> int:
    from .runner import run_scenario
    from .plots import plot_sweep

    sc, base = load_scenario(args.scenario)
    values = _parse_values(args.values)
    out = _out_dir(args.out, sc) / f"sweep_{args.param}"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in values:
        try:
            scv = with_override(sc, args.param, v)
            res = run_scenario(scv, base, out / f"{args.param}={v:g}", seed=args.seed, figures=False)
            info = res.summary["info"]
            row = [v, info["converged"], info["max_series_residual"], info["worst_bound_margin"],
                   info["n_rings"], "pass" if res.exit_code == 0 else "check_failed"]
        except (ValidationError, SpecParseError) as exc:
            row = [v, False, math.nan, math.nan, "", f"invalid: {str(exc).splitlines()[0]}"]
        except Exception as exc:  # keep sweeping, record the failure
            row = [v, False, math.nan, math.nan, "", f"error: {type(exc).__name__}: {exc}"]
        rows.append(row)
        print(", ".join(str(x) for x in row))
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "converged", "max_residual", "worst_bound_margin", "n_rings", "status"])
        w.writerows(rows)
    if rows and not args.no_figures:
        plot_sweep(out / "sweep.png", [r[0] for r in rows], [r[2] if isinstance(r[2], float) else math.nan for r in rows],
                   args.param)
    print(f"table: {out / 'sweep.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abel-lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write its report")
    r.add_argument("scenario")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name>)")
    r.add_argument("--seed", type=int)
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="rerun a scenario over one parameter")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    s.add_argument("--values", required=True, help="comma separated, may be empty")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_sweep)
    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, SpecParseError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
