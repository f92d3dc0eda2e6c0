"""Command-line entry point: ``privamp run|audit|weights``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .audit import run_suite
from .harness import (
    FAMILY_NAMES,
    ExperimentConfig,
    SyntheticSpec,
    aggregate,
    load_csv,
    make_synthetic,
    preprocess,
    run_experiment,
    save_outputs,
)
from .kmeans import DEFAULT_RHO, LloydConfig, full_data_epsilon, lloyd_profile
from .privacy import amplify
from .weights import SolverConfig, solve_dataset

log = logging.getLogger("privamp")

# settings shared by the config file and the flags; values are the defaults
RUN_DEFAULTS = {
    "input": None,
    "synthetic": None,
    "k": 25,
    "T": 10,
    "m": "1000",
    "B": "0.0001,0.001,0.01,0.1,1,3",
    "lambda": 0.5,
    "trim": 0.025,
    "rho": DEFAULT_RHO,
    "reps": 50,
    "families": ",".join(FAMILY_NAMES),
    "seed": 0,
    "out": "results/summary.csv",
}


def _csv_list(value, cast):
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    return [cast(v) for v in str(value).split(",") if v.strip()]


def load_config_file(path) -> dict:
    """Read a YAML or JSON file whose keys mirror the ``run`` flags."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        import yaml

        data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    unknown = set(data) - set(RUN_DEFAULTS)
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    return data


def resolve_run_settings(args) -> dict:
    """Defaults, then the config file, then any flag given on the command line."""
    settings = dict(RUN_DEFAULTS)
    if args.config:
        settings.update(load_config_file(args.config))
    for key in RUN_DEFAULTS:
        value = getattr(args, key.replace("lambda", "lam"))
        if value is not None:
            settings[key] = value
    return settings


def build_config(settings: dict) -> ExperimentConfig:
    synthetic = settings["synthetic"]
    if isinstance(synthetic, (list, tuple)):
        synthetic = ",".join(str(s) for s in synthetic)
    return ExperimentConfig(
        k=int(settings["k"]),
        T=int(settings["T"]),
        m_list=_csv_list(settings["m"], int),
        B_list=_csv_list(settings["B"], float),
        lam=float(settings["lambda"]),
        trim_fraction=float(settings["trim"]),
        rho=float(settings["rho"]),
        repetitions=int(settings["reps"]),
        families=_csv_list(settings["families"], str),
        seed=int(settings["seed"]),
        input_path=settings["input"],
        synthetic=SyntheticSpec.parse(synthetic) if isinstance(synthetic, str) else synthetic,
        output_path=settings["out"],
    )


def cmd_run(args) -> int:
    cfg = build_config(resolve_run_settings(args))
    data = cfg.load_data()
    _, stats = preprocess(data, cfg.trim_fraction)
    records = run_experiment(cfg, data=data)
    out = save_outputs(cfg, records, cfg.output_path, stats)
    failed = [r for r in records if r.error]
    for row in aggregate(records):
        print(f"{row.family:5s} B={row.B:<8g} m={row.m:<10g} eps={row.epsilon:<10.4g} "
              f"cost={row.cost_median:.5g} [{row.cost_q25:.5g}, {row.cost_q75:.5g}] reps={row.reps}")
    if failed:
        log.warning("%d run(s) failed or were skipped; see the runs file", len(failed))
    print(f"wrote {out}")
    return 0


def cmd_audit(args) -> int:
    reports = run_suite(seed=args.seed, quick=args.quick)
    for r in reports:
        status = "ok  " if r.ok else "FAIL"
        kind = "" if r.expect_pass else " (control)"
        print(f"{status} {r.name}{kind}: observed={r.observed:.6g} bound={r.bound:.6g}")
    bad = sum(not r.ok for r in reports)
    print(f"{len(reports) - bad}/{len(reports)} audits as expected")
    if args.json:
        Path(args.json).write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    return 0 if bad == 0 else 1


def cmd_weights(args) -> int:
    if args.input:
        data = load_csv(args.input)
    else:
        data = make_synthetic(SyntheticSpec.parse(args.synthetic), args.seed, args.trim)
    X, stats = preprocess(data, args.trim)
    cfg = LloydConfig.from_budget(args.B, args.T, stats.radius, stats.d, args.k)
    eps_star = full_data_epsilon(cfg)
    sol = solve_dataset(lloyd_profile(cfg), X, SolverConfig(eps_star))
    norms = np.abs(X).sum(axis=1)
    psi = amplify(cfg.per_point_rate(norms) * sol.weights, sol.probabilities)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["index", "l1_norm", "weight", "q", "psi", "evals"])
        for i in range(len(X)):
            writer.writerow([i, repr(float(norms[i])), repr(float(sol.weights[i])), repr(float(sol.probabilities[i])),
                             repr(float(psi[i])), int(sol.eval_counts[i])])
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"target epsilon {eps_star:.6g}, expected sample size {sol.expected_size:.6g} of {len(X)}",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privamp", description="Privacy-optimal Poisson sampling for DP k-means")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sampler sweep and write plot-ready CSV")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--input", help="CSV file of numeric rows")
    src.add_argument("--synthetic", help="Gaussian mixture n,d,k[,spread]")
    run.add_argument("--config", help="YAML or JSON file with the same keys as the flags")
    run.add_argument("--k", type=int, help="number of clusters (default 25)")
    run.add_argument("--T", type=int, help="Lloyd iterations (default 10)")
    run.add_argument("--m", help="comma-separated target sample sizes")
    run.add_argument("--B", help="comma-separated allocation constants")
    run.add_argument("--lambda", dest="lam", type=float, help="uniform share of the coreset mixture")
    run.add_argument("--trim", type=float, help="fraction of largest-norm rows to drop (default 0.025)")
    run.add_argument("--rho", type=float, help="noise allocation constant (default 0.225)")
    run.add_argument("--reps", type=int, help="repetitions per cell (default 50)")
    run.add_argument("--families", help=f"comma-separated subset of {','.join(FAMILY_NAMES)}")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="summary CSV path; runs and metadata files go next to it")
    run.set_defaults(func=cmd_run)

    audit = sub.add_parser("audit", help="run the audit suite; exit status 0 iff every audit behaves as expected")
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--quick", action="store_true", help="fewer trials")
    audit.add_argument("--json", help="also write the reports to this file")
    audit.set_defaults(func=cmd_audit)

    weights = sub.add_parser("weights", help="print optimal inclusion probabilities per point")
    wsrc = weights.add_mutually_exclusive_group(required=True)
    wsrc.add_argument("--input")
    wsrc.add_argument("--synthetic")
    weights.add_argument("--k", type=int, default=25)
    weights.add_argument("--T", type=int, default=10)
    weights.add_argument("--B", type=float, default=1.0)
    weights.add_argument("--trim", type=float, default=0.025)
    weights.add_argument("--seed", type=int, default=0)
    weights.add_argument("--out")
    weights.set_defaults(func=cmd_weights)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
