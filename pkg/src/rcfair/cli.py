"""Command-line entry point.

Exit codes: 0 success, 2 usage or validation error, 3 infeasible request,
4 internal error.  Every output file is written to a temporary name and renamed
into place, so a failed run never leaves partial output behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, bounds, minimax, plotting, synth
from .dataset import DEFAULT_COLUMNS, TEST, VALIDATION, DatasetError, group_stats, load_csv, write_csv
from .enforce import budget_for_rate, enforce, transfer_proportions
from .metrics import (
    FALSE_POSITIVE_RATE,
    ONE_MINUS_PRECISION,
    ONE_MINUS_RECALL,
    ONE_MINUS_SELECTION_RATE,
    HarmSpec,
    metric_at_r,
    notion_spec,
)
from .solver import InfeasibleError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_INTERNAL = 4

THREADS_ENV = "RCFAIR_THREADS"

HARMS = {
    "dp": ONE_MINUS_SELECTION_RATE,
    "eo": ONE_MINUS_RECALL,
    ONE_MINUS_SELECTION_RATE: ONE_MINUS_SELECTION_RATE,
    ONE_MINUS_RECALL: ONE_MINUS_RECALL,
    ONE_MINUS_PRECISION: ONE_MINUS_PRECISION,
    FALSE_POSITIVE_RATE: FALSE_POSITIVE_RATE,
}


class UsageError(ValueError):
    pass


# -- output helpers ------------------------------------------------------------


def atomic_write(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory; ``-`` is stdout."""
    if str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _svg(render, path: Path) -> None:
    """Render through ``render(tmp_path)`` and move the file into place."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".svg")
    os.close(fd)
    try:
        render(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def to_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _format(path: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    return "csv" if str(path).lower().endswith(".csv") else "json"


# -- shared argument groups ----------------------------------------------------


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="scored CSV file")
    for role in ("score", "label", "group", "split"):
        p.add_argument(
            f"--{role}-col", default=DEFAULT_COLUMNS[role], help=f"column holding the {role} (default %(default)s)"
        )


def _load(args) -> object:
    cols = {role: getattr(args, f"{role}_col") for role in ("score", "label", "group", "split")}
    return load_csv(args.input, cols)


def _add_budget(p: argparse.ArgumentParser, required: bool = True) -> None:
    grp = p.add_mutually_exclusive_group(required=required)
    grp.add_argument("--rate", type=float, help="selection rate in [0, 1]; K = floor(rate * N)")
    grp.add_argument("--budget", type=int, help="number of positive decisions K")


def _budget(args, n: int) -> int:
    if args.budget is not None:
        if not 0 <= args.budget <= n:
            raise UsageError(f"--budget {args.budget} outside [0, {n}]")
        return args.budget
    return budget_for_rate(args.rate, n)


def _notions(text: str) -> list[str]:
    names = [t.strip().lower() for t in text.split(",") if t.strip()]
    for name in names:
        notion_spec(name)
    if not names:
        raise UsageError("no notions given")
    return names


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV}={raw!r} is not an integer") from None


def _config(args) -> synth.SynthConfig:
    cfg = synth.SynthConfig.load(args.config) if args.config else synth.SynthConfig()
    if args.seed is not None:
        cfg = synth.with_seed(cfg, args.seed)
    if args.n is not None:
        cfg = replace(cfg, n=args.n)
    return cfg


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="synthetic config file (key = value lines); defaults if omitted")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--n", type=int, help="override the config sample count")


# -- commands --------------------------------------------------------------------


def cmd_enforce(args) -> int:
    ds = _load(args)
    spec = notion_spec(args.notion)
    if args.transfer_from_split:
        val, test = ds.split(VALIDATION), ds.split(TEST)
        k_test = _budget(args, test.n)
        rate = k_test / test.n if args.budget is not None else args.rate
        fitted = enforce(val, spec, budget_for_rate(rate, val.n))
        alloc = transfer_proportions(fitted, test, k_test)
        rows = np.flatnonzero(ds.splits == TEST)
        payload = {
            "notion": args.notion,
            "fit_split": VALIDATION,
            "apply_split": TEST,
            "fit_counts": dict(fitted.allocation.counts),
            **alloc.to_dict(),
            "selected_rows": [int(rows[i]) for i in alloc.selected_indices],
            "rates": alloc.rates(test),
        }
        target = test
    else:
        k = _budget(args, ds.n)
        res = enforce(ds, spec, k)
        alloc = res.allocation
        payload = {"notion": args.notion, **res.to_dict(), "rates": alloc.rates(ds)}
        target = ds
    payload["metrics"] = metric_at_r(target, alloc).as_dict()
    if _format(args.output, args.format) == "csv":
        harms = payload.get("harms", {})
        header = ["group", "size", "count", "rate", "threshold", "harm"]
        rows_out = [
            [g, target.group_size(g), alloc.counts[g], alloc.counts[g] / target.group_size(g),
             payload["thresholds"][g], harms.get(g)]
            for g in target.groups
        ]
        atomic_write(args.output, to_csv(header, rows_out))
    else:
        atomic_write(args.output, to_json(payload))
    return EXIT_OK


def cmd_cost_sweep(args) -> int:
    ds = _load(args)
    notions = _notions(args.notions)
    grid = analysis.default_rate_grid(args.grid)
    if args.transfer_from_split:
        report = analysis.cost_sweep(ds.split(TEST), notions, grid, fit_ds=ds.split(VALIDATION))
    else:
        report = analysis.cost_sweep(ds, notions, grid)
    if _format(args.output, args.format) == "csv":
        atomic_write(args.output, to_csv(report.columns(), report.table() + [report.mean_row()]))
    else:
        atomic_write(args.output, to_json(report.to_dict()))
    if args.svg:
        out = Path(args.svg)
        out.mkdir(parents=True, exist_ok=True)
        for metric in analysis.PERF_METRICS:
            series = {n: [row.loss[n][metric] for row in report.rows] for n in report.notions}
            rates = [row.rate for row in report.rows]
            _svg(
                lambda tmp, s=series, m=metric: plotting.line_chart(tmp, rates, s, "selection rate", f"{m} loss"),
                out / f"cost_{metric}.svg",
            )
    return EXIT_OK


def cmd_minimax(args) -> int:
    ds = _load(args)
    spec = HarmSpec(HARMS[args.harm])
    k = _budget(args, ds.n)
    res = minimax.solve_minimax(ds, spec, k, budget_mode=args.budget_mode)
    payload = {**res.to_dict(), "budget_mode": args.budget_mode}
    payload["equality"] = minimax.check_equality_at_optimum(res, ds).to_dict()
    if args.oracle:
        ref = minimax.oracle_minimax(ds, spec, k)
        payload["oracle"] = {"max_harm": max(ref.achieved_harms.values()), "gap": ref.gap, "counts": ref.allocation.counts}
    atomic_write(args.output, to_json(payload))
    return EXIT_OK


def cmd_bounds(args) -> int:
    report = bounds.cost_upper_bound(args.metric, args.b, args.r, args.g, p=args.p, n_groups=args.groups)
    payload = report.to_dict()
    lev = {}
    for notion in ("dp", "eo", "precision"):
        if 0.0 < args.r < 1.0 and 0.0 < args.g < 1.0:
            lev[notion] = bounds.leveling_up_bound(notion, args.r, args.g)
    payload["leveling_up"] = lev
    if _format(args.output, args.format) == "csv":
        rows = [[name, value, report.applicable.get(name, True)] for name, value in report.bounds.items()]
        rows.append(["c", report.c_factor, True])
        rows.append(["effective", report.effective, True])
        atomic_write(args.output, to_csv(["bound", "value", "applicable"], rows))
    else:
        atomic_write(args.output, to_json(payload))
    return EXIT_OK


def _disadvantaged(ds, name: str | None) -> str:
    if name:
        return name
    stats = group_stats(ds)
    # lowest base rate; on ties the later group in file order
    return min(reversed(ds.groups), key=lambda g: stats[g].base_rate)


def cmd_alloc_curve(args) -> int:
    ds = _load(args)
    if args.grid < 2:
        raise UsageError("--grid needs at least 2 points")
    alphas = np.linspace(0.0, 1.0, args.grid)
    curve = analysis.allocation_curve(ds, args.k, alphas, _disadvantaged(ds, args.disadvantaged))
    if _format(args.output, args.format) == "csv":
        header = ["kind", "alpha", f"count_{curve.advantaged}", f"count_{curve.disadvantaged}", "precision"]
        rows = [
            ["point", p.alpha, p.counts[curve.advantaged], p.counts[curve.disadvantaged], p.precision]
            for p in curve.points
        ]
        rows += [
            [name, m.alpha, m.counts[curve.advantaged], m.counts[curve.disadvantaged], m.precision]
            for name, m in curve.markers.items()
        ]
        atomic_write(args.output, to_csv(header, rows))
    else:
        atomic_write(args.output, to_json(curve.to_dict()))
    if args.svg:
        path = Path(args.svg)
        _svg(lambda tmp: plotting.allocation_curve_chart(curve, tmp), path)
    return EXIT_OK


def _dataset_text(ds) -> str:
    buf = io.StringIO()
    write_csv(ds, buf)
    return buf.getvalue()


def cmd_synth(args) -> int:
    cfg = _config(args)
    atomic_write(args.output, _dataset_text(synth.generate(cfg)))
    return EXIT_OK


def cmd_perturb(args) -> int:
    cfg = _config(args)
    if args.param == "subgroup_size":
        ds = synth.subsample_group(synth.generate(cfg), args.group or cfg.disadvantaged, args.level, cfg.seed)
        new_cfg = cfg
    else:
        if args.param == "disparity":
            new_cfg = synth.perturb_disparity(cfg, args.level)
        elif args.param == "global_noise":
            new_cfg = synth.perturb_noise(cfg, args.level)
        else:
            new_cfg = synth.perturb_subgroup_noise(cfg, args.group or cfg.disadvantaged, args.level)
        ds = synth.generate(new_cfg)
    if args.config_out:
        atomic_write(args.config_out, new_cfg.to_text())
    atomic_write(args.output, _dataset_text(ds))
    return EXIT_OK


def cmd_sweep_params(args) -> int:
    cfg = _config(args)
    levels = _floats(args.levels)
    table = analysis.parameter_sweep(
        cfg,
        args.param,
        levels,
        args.seeds,
        _notions(args.notions),
        analysis.default_rate_grid(args.grid),
        metric=args.metric,
        workers=_workers(args),
    )
    if _format(args.output, args.format) == "csv":
        header = ["level"] + [f"{n}_mean_{table.metric}_loss" for n in table.notions]
        rows = table.rows() + [["spearman"] + [table.rank_correlation[n] for n in table.notions]]
        atomic_write(args.output, to_csv(header, rows))
    else:
        atomic_write(args.output, to_json(table.to_dict()))
    if args.svg:
        _svg(lambda tmp: plotting.trend_chart(table, tmp), Path(args.svg))
    return EXIT_OK


def cmd_report(args) -> int:
    ds = _load(args)
    notions = _notions(args.notions)
    grid = analysis.default_rate_grid(args.grid)
    sweep = analysis.cost_sweep(ds, notions, grid)
    stats = group_stats(ds)
    b = ds.total_positives / ds.n
    g = min(s.weight for s in stats.values())
    bound_rows = []
    for r in _floats(args.bound_rates):
        entry = {"rate": r}
        for metric in ("accuracy", "recall", "precision"):
            entry[metric] = bounds.cost_upper_bound(metric, b, r, min(g, 0.5), n_groups=len(ds.groups)).to_dict()
        bound_rows.append(entry)
    minimax_rows = []
    for r in _floats(args.minimax_rates):
        k = budget_for_rate(r, ds.n)
        res = minimax.solve_minimax(ds, notion_spec("eo"), k)
        minimax_rows.append({"rate": r, **res.to_dict(), "equality": minimax.check_equality_at_optimum(res, ds).to_dict()})
        minimax_rows[-1].pop("selected_indices")
    payload = {
        "dataset": {
            "n": ds.n,
            "positives": ds.total_positives,
            "groups": {k: vars(v) for k, v in stats.items()},
        },
        "cost_sweep": sweep.to_dict(),
        "bounds": bound_rows,
        "minimax": minimax_rows,
    }
    atomic_write(args.output, to_json(payload))
    if args.svg:
        out = Path(args.svg)
        out.mkdir(parents=True, exist_ok=True)
        rates = [row.rate for row in sweep.rows]
        for metric in analysis.PERF_METRICS:
            series = {n: [row.loss[n][metric] for row in sweep.rows] for n in sweep.notions}
            _svg(
                lambda tmp, s=series, m=metric: plotting.line_chart(tmp, rates, s, "selection rate", f"{m} loss"),
                out / f"cost_{metric}.svg",
            )
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcfair", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def output(p, default="-"):
        p.add_argument("--output", default=default, help="output file, '-' for stdout (default %(default)s)")
        p.add_argument("--format", choices=("json", "csv"), help="output format; inferred from the extension")

    p = sub.add_parser("enforce", help="fair allocation at a fixed budget")
    _add_input(p)
    p.add_argument("--notion", default="dp", choices=("dp", "eo"))
    _add_budget(p)
    p.add_argument(
        "--transfer-from-split",
        action="store_true",
        help="fit on the validation rows and apply the group shares to the test rows",
    )
    output(p)
    p.set_defaults(func=cmd_enforce)

    p = sub.add_parser("cost-sweep", help="cost of fairness across selection rates")
    _add_input(p)
    p.add_argument("--notions", default="dp,eo")
    p.add_argument("--grid", type=int, default=100, help="number of rates (1/n, 2/n, ..., 1)")
    p.add_argument("--transfer-from-split", action="store_true")
    p.add_argument("--svg", help="directory for one loss chart per metric")
    output(p)
    p.set_defaults(func=cmd_cost_sweep)

    p = sub.add_parser("minimax", help="allocation minimising the largest group harm")
    _add_input(p)
    p.add_argument("--harm", default="eo", choices=sorted(HARMS))
    _add_budget(p)
    p.add_argument("--budget-mode", default=minimax.EXACT, choices=(minimax.EXACT, minimax.AT_MOST))
    p.add_argument("--oracle", action="store_true", help="also run the exhaustive referee (small inputs)")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_minimax)

    p = sub.add_parser("bounds", help="closed-form upper bounds on the cost of fairness")
    p.add_argument("--metric", required=True, choices=bounds.METRICS)
    p.add_argument("--b", type=float, help="base rate of the dataset")
    p.add_argument("--r", type=float, required=True, help="selection rate")
    p.add_argument("--g", type=float, required=True, help="proportion of the smallest group")
    p.add_argument("--p", type=float, help="observed swap proportion")
    p.add_argument("--groups", type=int, default=2, help="number of groups (default %(default)s)")
    output(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("alloc-curve", help="precision of every budget split between two groups")
    _add_input(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--grid", type=int, default=101, help="number of alpha points on [0, 1]")
    p.add_argument("--disadvantaged", help="defaults to the group with the lowest base rate")
    p.add_argument("--svg")
    output(p)
    p.set_defaults(func=cmd_alloc_curve)

    p = sub.add_parser("synth", help="generate a synthetic scored dataset")
    _add_config(p)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("perturb", help="generate a perturbed synthetic dataset")
    _add_config(p)
    p.add_argument("--param", required=True, choices=analysis.PARAMS)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--group", help="target group (defaults to the disadvantaged group)")
    p.add_argument("--config-out", help="also write the perturbed config")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("sweep-params", help="average cost at several perturbation levels")
    _add_config(p)
    p.add_argument("--param", required=True, choices=analysis.PARAMS)
    p.add_argument("--levels", required=True, help="comma-separated, sorted")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--notions", default="dp,eo")
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--metric", default="precision", choices=analysis.PERF_METRICS)
    p.add_argument("--workers", type=int, help=f"process count (default ${THREADS_ENV} or 1)")
    p.add_argument("--svg")
    output(p)
    p.set_defaults(func=cmd_sweep_params)

    p = sub.add_parser("report", help="cost sweep, bounds and minimax in one JSON file")
    _add_input(p)
    p.add_argument("--notions", default="dp,eo")
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--bound-rates", default="0.1,0.3,0.5,0.7")
    p.add_argument("--minimax-rates", default="0.1,0.3,0.5,0.7")
    p.add_argument("--svg", help="directory for the loss charts")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"rcfair: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, DatasetError, synth.ConfigError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"rcfair: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - last resort
        print(f"rcfair: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
