"""Command-line entry point: generate, run, compare, verify, plot-data.

Exit codes: 0 success, 1 verification or run failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .actor_critic import SCHEDULE_PRESETS, AlgoConfig, ScheduleSpec
from .errors import ParameterError, ScacError
from .harness import (PAIRED_COLUMNS, RunFailure, compare_algorithms, import_records, records_csv,
                      records_json, run_batch)
from .mdp import GarnetSpec, Mdp, garnet_generate
from .policy import FeatureSet
from .verify import run_verification

OUTPUT_DIR_ENV = "SCAC_OUTPUT_DIR"
FULL_SCALE_RUNS = 100


def _schedule(text: str) -> ScheduleSpec:
    try:
        c0, c1, p = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"schedule must be c0,c1,p, got {text!r}") from exc
    try:
        return ScheduleSpec(c0, c1, p)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _garnet(text: str) -> str:
    try:
        GarnetSpec.parse(text)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return text


def _add_experiment_flags(p: argparse.ArgumentParser, with_algorithm: bool) -> None:
    p.add_argument("--config", type=Path, help="experiment config file; flags override it")
    p.add_argument("--spec", type=_garnet, help="GARNET X,U,B,sigma (default 30,4,2,0.1)")
    p.add_argument("--L", type=int, help="critic basis size (default 8)")
    p.add_argument("--l", type=int, help="ones per feature row (default 3)")
    p.add_argument("--seed", type=int, required=True)
    if with_algorithm:
        p.add_argument("--algorithm", choices=("single", "two_scale"))
    p.add_argument("--gamma-eta", type=float)
    p.add_argument("--gamma-w", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--b-w", type=float)
    p.add_argument("--preset", choices=sorted(SCHEDULE_PRESETS),
                   help="schedule constants of the small (X=30) or large (X=100) benchmark")
    p.add_argument("--schedule", type=_schedule, help="base / critic-w schedule c0,c1,p")
    p.add_argument("--actor-schedule", type=_schedule, help="baseline actor schedule c0,c1,p")
    p.add_argument("--n-steps", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--record-stride", type=int)
    p.add_argument("--shared-instance", action="store_true", default=None)
    p.add_argument("--exclude-constant", action="store_true", default=None,
                   help="critic basis whose span excludes the constant vector")
    p.add_argument("--mdp", type=Path, help="use this instance file for every run")
    p.add_argument("--full-scale", action="store_true", help=f"{FULL_SCALE_RUNS} runs per batch")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--out", help="output path; '-' or omitted writes to stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a GARNET instance")
    g.add_argument("--spec", type=_garnet, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("-o", "--out", help="output path; '-' writes to stdout")

    r = sub.add_parser("run", help="batch of runs of one algorithm, per-stride summary")
    _add_experiment_flags(r, with_algorithm=True)

    c = sub.add_parser("compare", help="paired single- vs two-time-scale experiment")
    _add_experiment_flags(c, with_algorithm=False)

    v = sub.add_parser("verify", help="exact-oracle identity suite")
    v.add_argument("--states", type=int, default=5)
    v.add_argument("--actions", type=int, default=3)
    v.add_argument("--branching", type=int, default=2)
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--thetas", type=int, default=1, help="random thetas per instance")
    v.add_argument("--seed", type=int, required=True)

    pd = sub.add_parser("plot-data", help="long-format series from an exported record file")
    pd.add_argument("input", type=Path)
    pd.add_argument("-o", "--out")
    return parser


def load_config(path: Path) -> dict:
    doc = json.loads(path.read_text())
    if doc.get("format") != "scac.experiment":
        raise ParameterError(f"{path} is not an experiment config")
    if doc.get("version") != 1:
        raise ParameterError(f"unsupported config version {doc.get('version')!r}")
    return doc


def _resolve(args) -> dict:
    doc = load_config(args.config) if args.config else {}
    garnet = doc.get("garnet", {"X": 30, "U": 4, "B": 2, "sigma": 0.1, "L": 8, "l": 3})
    if args.spec:
        parsed = GarnetSpec.parse(args.spec)
        garnet.update(X=parsed.X, U=parsed.U, B=parsed.B, sigma=parsed.sigma)
    if args.L is not None:
        garnet["L"] = args.L
    if args.l is not None:
        garnet["l"] = args.l
    spec = GarnetSpec(**garnet)
    spec.validate()

    algo = AlgoConfig.from_dict(doc["algo"]) if "algo" in doc else AlgoConfig.preset(
        "single", "large" if spec.X >= 100 else "small")
    if args.preset:
        critic, actor = SCHEDULE_PRESETS[args.preset]
        algo = replace(algo, schedule=critic, actor_schedule=actor)
    overrides = {k: v for k, v in {
        "algorithm": getattr(args, "algorithm", None), "gamma_eta": args.gamma_eta,
        "gamma_w": args.gamma_w, "lam": args.lam, "b_w": args.b_w,
        "schedule": args.schedule, "actor_schedule": args.actor_schedule}.items() if v is not None}
    algo = replace(algo, **overrides)

    n_steps = args.n_steps or doc.get("n_steps", 200_000)
    runs = FULL_SCALE_RUNS if args.full_scale else (args.runs or doc.get("n_runs", 20))
    instance = None
    if args.mdp:
        mdp = Mdp.load(args.mdp)
        if "features" not in doc:
            raise ParameterError("--mdp needs a config file carrying 'features'")
        instance = (mdp, FeatureSet.from_dict(doc["features"]))
    elif "features" in doc and "mdp" in doc:
        instance = (Mdp.from_dict(doc["mdp"]), FeatureSet.from_dict(doc["features"]))
    return dict(
        spec=spec, config=algo, n_runs=runs, base_seed=args.seed, n_steps=n_steps,
        stride=args.record_stride or doc.get("record_stride"),
        shared_instance=bool(args.shared_instance if args.shared_instance is not None
                             else doc.get("shared_instance", False)),
        exclude_constant=bool(args.exclude_constant if args.exclude_constant is not None
                              else doc.get("exclude_constant", False)),
        instance=instance,
    )


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(out)
    if not path.is_absolute() and os.environ.get(OUTPUT_DIR_ENV):
        path = Path(os.environ[OUTPUT_DIR_ENV]) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_generate(args) -> int:
    spec = GarnetSpec.parse(args.spec)
    mdp = garnet_generate(spec, args.seed)
    out = args.out
    if out is None:
        name = f"garnet_{spec.X}_{spec.U}_{spec.B}_{spec.sigma:g}_seed{args.seed}.json"
        out = str(Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / name)
    _emit(mdp.dumps(), out)
    return 0


def cmd_run(args) -> int:
    kw = _resolve(args)
    summary = run_batch(kw.pop("spec"), kw.pop("config"), kw.pop("n_runs"), kw.pop("base_seed"),
                        kw.pop("n_steps"), kw.pop("stride"), **kw)
    rows = summary.rows()
    _emit(records_csv(rows) if args.format == "csv" else records_json(summary, rows), args.out)
    return 0


def cmd_compare(args) -> int:
    kw = _resolve(args)
    base = kw.pop("config")
    configs = (replace(base, algorithm="single"), replace(base, algorithm="two_scale"))
    paired = compare_algorithms(kw.pop("spec"), configs, kw.pop("n_runs"), kw.pop("base_seed"),
                                kw.pop("n_steps"), kw.pop("stride"), **kw)
    rows = paired.rows()
    if args.format == "csv":
        text = records_csv(rows, PAIRED_COLUMNS)
    else:
        text = records_json(paired, rows, PAIRED_COLUMNS)
    _emit(text, args.out)
    return 0


def cmd_verify(args) -> int:
    if args.states < 3 or args.actions < 1 or args.trials < 1:
        raise ParameterError("verify needs --states >= 3, --actions >= 1, --trials >= 1")
    checks = run_verification(args.states, args.actions, args.trials, args.seed, args.thetas,
                              args.branching)
    for check in checks:
        print(check.line())
    return 0 if all(c.passed for c in checks) else 1


def cmd_plot_data(args) -> int:
    columns, rows = import_records(args.input)
    if not rows:
        raise ParameterError(f"{args.input} holds no rows")
    if tuple(columns) == PAIRED_COLUMNS:
        series = [("single", "a_mean", "a_se"), ("two_scale", "b_mean", "b_se"),
                  ("difference", "diff_mean", "diff_se")]
    else:
        series = [("eta_exact", "eta_exact_mean", "eta_exact_se"),
                  ("eta_tilde", "eta_tilde_mean", None), ("grad_norm", "grad_norm_mean", None),
                  ("w_dist", "w_dist_mean", None)]
    idx = {c: i for i, c in enumerate(columns)}
    out_rows = []
    for name, mean_col, se_col in series:
        for row in rows:
            se = row[idx[se_col]] if se_col else float("nan")
            out_rows.append((name, int(row[idx["n"]]), row[idx[mean_col]], se))
    text = records_csv(out_rows, ("series", "n", "mean", "se"))
    _emit(text, args.out)
    return 0


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "compare": cmd_compare,
            "verify": cmd_verify, "plot-data": cmd_plot_data}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        try:
            return COMMANDS[args.command](args)
        except RunFailure as exc:
            # a bad parameter surfaces inside the first run; report it as usage
            if isinstance(exc.cause, ParameterError):
                raise exc.cause from None
            raise
    except ParameterError as exc:
        parser.print_usage(sys.stderr)
        print(f"scac: error: {exc}", file=sys.stderr)
        return 2
    except (ScacError, OSError) as exc:
        print(f"scac: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
