"""Command line front end: run verification experiments, write reports.

Each experiment writes a CSV of rows, a canonical JSON summary, and a PNG
figure into the output directory (``--out``, or ``HAARSHIFT_OUT``, default
``./out``).  Output bytes for CSV and JSON are reproducible functions of
the configuration and seed.  Exit status is 0 only if every requested
experiment passed its gates.

A JSON config file (``--config``) may hold any of the long option values
under the same names with dashes as underscores; explicit command line
options override it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, fields

from .grid import ScaleWindow
from .kernel import size_budget, truncation_tail_bound
from .report import write_report
from .shiftfamily import FAMILIES, LAMBDA_RULES, ShiftFamilySpec
from .verify import (
    SweepReport,
    boundary_lemma_check,
    ek_decay_check,
    fubini_check,
    holder_sweep,
    norm_suite,
    single_shift_holder_failure,
    size_estimate_sweep,
    vanishing_trials,
)

EXPERIMENTS = (
    "lemma",
    "ek",
    "fubini",
    "size",
    "holder",
    "single-shift",
    "vanishing",
    "norm",
)

# Grid draws per estimate when --n-samples is not given.  The probability
# checks need many cheap draws; the kernel sweeps batch heavier evaluations.
SAMPLE_DEFAULTS = {
    "lemma": 100000,
    "ek": 100000,
    "size": 2000,
    "holder": 24576,
}


@dataclass
class RunConfig:
    """Resolved run options (defaults, then config file, then flags)."""

    experiment: str = "all"
    seed: int = 20102
    # None picks the per-experiment default (see SAMPLE_DEFAULTS).
    n_samples: int | None = None
    n_instances: int = 50
    n_trials: int = 10000
    dim: int = 1
    delta: float = 0.5
    complexity_cap: int | None = None
    family: str = "cancellative"
    lambda_rule: str = "default"
    # Config-file only: [[m, n, value], ...] for the custom rule.
    lambda_table: list | None = None
    coeff_seed: int = 20102
    k_min: int = -14
    k_max: int = 6
    tau_list: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.25])
    k_list: list[int] = field(default_factory=lambda: [2, 3, 4, 5, 6])
    scales: list[int] = field(default_factory=lambda: list(range(4, 13)))
    m: int = 0
    n: int = 0
    out: str = ""
    threads: int = 1
    figures: bool = True
    dry_run: bool = False

    def samples(self, experiment: str) -> int:
        if self.n_samples is not None:
            return self.n_samples
        return SAMPLE_DEFAULTS[experiment]

    def window(self) -> ScaleWindow:
        return ScaleWindow(self.k_min, self.k_max, self.dim)

    def spec(self) -> ShiftFamilySpec:
        table = None
        if self.lambda_table is not None:
            table = tuple(
                (int(m), int(n), float(v)) for m, n, v in self.lambda_table
            )
        return ShiftFamilySpec(
            delta=self.delta,
            complexity_cap=self.complexity_cap,
            lambda_rule=self.lambda_rule,
            coeff_family=self.family,
            coeff_seed=self.coeff_seed,
            lambda_table=table,
        )


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="haarshift",
        description="Verification experiments for averaged Haar shift kernels.",
    )
    p.add_argument(
        "experiment",
        nargs="?",
        choices=EXPERIMENTS + ("all",),
        help="experiment to run (default: all)",
    )
    p.add_argument("--experiment", dest="experiment_opt", choices=EXPERIMENTS + ("all",))
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-samples", type=int, help="grid draws per estimate")
    p.add_argument("--n-instances", type=int, help="pairing-identity instances")
    p.add_argument("--n-trials", type=int, help="vanishing-identity trials")
    p.add_argument("--dim", type=int, choices=(1, 2, 3))
    p.add_argument("--delta", type=float, help="lambda decay exponent in (0, 1)")
    p.add_argument("--complexity-cap", type=int)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--lambda-rule", choices=[r for r in LAMBDA_RULES if r != "custom"])
    p.add_argument("--coeff-seed", type=int)
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--tau", type=float, action="append", dest="tau_list")
    p.add_argument("--m", type=int, help="single-shift output complexity")
    p.add_argument("--n", type=int, help="single-shift input complexity")
    p.add_argument("--out", help="output directory (or HAARSHIFT_OUT)")
    p.add_argument("--threads", type=int)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--dry-run", action="store_true")
    return p


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            setattr(cfg, key, value)
    overrides = {
        "seed": args.seed,
        "n_samples": args.n_samples,
        "n_instances": args.n_instances,
        "n_trials": args.n_trials,
        "dim": args.dim,
        "delta": args.delta,
        "complexity_cap": args.complexity_cap,
        "family": args.family,
        "lambda_rule": args.lambda_rule,
        "coeff_seed": args.coeff_seed,
        "k_min": args.k_min,
        "k_max": args.k_max,
        "tau_list": args.tau_list,
        "m": args.m,
        "n": args.n,
        "out": args.out,
        "threads": args.threads,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.experiment and args.experiment_opt and args.experiment != args.experiment_opt:
        raise ValueError("conflicting experiment given positionally and via option")
    cfg.experiment = args.experiment or args.experiment_opt or cfg.experiment
    if args.no_figures:
        cfg.figures = False
    if args.dry_run:
        cfg.dry_run = True
    if not cfg.out:
        cfg.out = os.environ.get("HAARSHIFT_OUT", "out")
    return cfg


def run_experiment(name: str, cfg: RunConfig) -> SweepReport:
    window = cfg.window()
    if name == "lemma":
        return boundary_lemma_check(
            cfg.dim, cfg.tau_list, cfg.samples(name), cfg.seed, window=window
        )
    if name == "ek":
        return ek_decay_check(
            cfg.dim, cfg.k_list, cfg.samples(name), cfg.seed, window=window
        )
    if name == "fubini":
        return fubini_check(cfg.n_instances, cfg.seed)
    if name == "size":
        return size_estimate_sweep(
            cfg.spec(),
            cfg.dim,
            cfg.samples(name),
            cfg.seed,
            window=window,
            threads=cfg.threads,
        )
    if name == "holder":
        return holder_sweep(
            cfg.spec(),
            cfg.dim,
            cfg.scales,
            cfg.samples(name),
            cfg.seed,
            window=window,
            threads=cfg.threads,
        )
    if name == "single-shift":
        return single_shift_holder_failure(
            spec=cfg.spec(),
            m=cfg.m,
            n=cfg.n,
            scales=cfg.scales,
            seed=cfg.seed,
            window=window if cfg.dim == 1 else None,
        )
    if name == "vanishing":
        return vanishing_trials(cfg.dim, cfg.n_trials, cfg.seed, window=window)
    if name == "norm":
        return norm_suite(cfg.seed)
    raise ValueError(f"unknown experiment {name!r}")


def _print_plan(names: list[str], cfg: RunConfig) -> None:
    window = cfg.window()
    spec = cfg.spec()
    print(f"plan: {len(names)} experiment(s), out={cfg.out}, seed={cfg.seed}")
    print(
        f"window: scales [{window.k_min}, {window.k_max}] in {window.dim}d"
        f" ({window.levels} levels)"
    )
    print(
        f"family: {spec.coeff_family}, delta={spec.delta}, cap={spec.cap},"
        f" rule={spec.lambda_rule}, coeff_seed={spec.coeff_seed}"
    )
    for r in (0.001, 0.01, 0.1):
        print(
            f"budget at r={r}: size<={size_budget(spec, window, r):.6g},"
            f" truncation<={truncation_tail_bound(spec, r, window):.3g}"
        )
    for name in names:
        if name in ("lemma", "ek"):
            detail = f"n_samples={cfg.samples(name)}"
        elif name == "fubini":
            detail = f"n_instances={cfg.n_instances} (exact, tolerance 0)"
        elif name == "vanishing":
            detail = f"n_trials={cfg.n_trials}"
        elif name in ("size", "holder"):
            detail = f"n_samples={cfg.samples(name)}, threads={cfg.threads}"
        elif name == "single-shift":
            detail = f"m={cfg.m}, n={cfg.n}, scales={cfg.scales[0]}..{cfg.scales[-1]}"
        else:
            detail = "dense battery"
        print(f"  job {name}: {detail}")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args)
        names = list(EXPERIMENTS) if cfg.experiment == "all" else [cfg.experiment]
        window = cfg.window()
        spec = cfg.spec()
        # Surface window/complexity incompatibility before any sampling.
        if spec.cap >= window.levels:
            raise ValueError(
                f"complexity cap {spec.cap} needs more than the window's"
                f" {window.levels} levels"
            )
        if max(cfg.m, cfg.n) >= window.levels:
            raise ValueError(
                f"single-shift complexity ({cfg.m}, {cfg.n}) does not fit a"
                f" {window.levels}-level window"
            )
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg.dry_run:
        _print_plan(names, cfg)
        return 0
    all_passed = True
    for name in names:
        try:
            report = run_experiment(name, cfg)
        except ValueError as exc:
            # Parameter rejected by a check (bad tau, degenerate pairs, ...).
            print(f"error: {name}: {exc}", file=sys.stderr)
            return 2
        paths = write_report(report, cfg.out, figures=cfg.figures)
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{name}: {verdict} ({len(report.rows)} rows) -> {paths['csv']}")
        all_passed = all_passed and report.passed
    print("all experiments passed" if all_passed else "FAILURES present")
    return 0 if all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
