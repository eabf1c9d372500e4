"""Command-line entry point.

Subcommands:

* ``tune``: run the GP tuner and/or baselines across replications, writing
  per-run trace CSVs, per-iteration overhead CSVs, aggregate distance curves
  and a JSON summary under ``--out``.
* ``screen``: rank parameter subsets of a dataset by merit and print its
  signal-to-noise table.
* ``overhead``: report per-iteration model-refit + selection wall time,
  excluding measurement time.

Exit codes: 0 success, 2 configuration error, 3 measurement-source failure.
Trace CSVs contain only decision content (no wall-clock columns), so repeated
runs with the same seed produce byte-identical files. The log level comes
from the ``GP_AUTOTUNE_LOG`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from gp_autotune.acquisition import KappaSchedule
from gp_autotune.analysis import (
    AggregateReport,
    distance_curve,
    estimate_noise_variance,
    rank_subsets,
    snr_from_dataset,
)
from gp_autotune.benchfn import (
    BENCHMARKS,
    ExternalCommandSource,
    ResponseSource,
    SourceUnavailableError,
    benchmark_source,
    playback,
)
from gp_autotune.space import (
    CATEGORICAL,
    INTEGER_GRID,
    ConfigSpace,
    DatasetParseError,
    ParameterDef,
    TabularDataset,
    load_dataset,
    load_space,
)
from gp_autotune.tuner import (
    BASELINES,
    BudgetConfig,
    RunTrace,
    default_design_size,
    run_baseline,
    run_bo4co,
)

logger = logging.getLogger(__name__)

ALGORITHMS = ("bo4co",) + tuple(sorted(BASELINES))


class ConfigError(ValueError):
    """The experiment specification is invalid."""


@dataclass
class ExperimentSpec:
    """Everything one tuning experiment needs, resolvable to a config file."""

    function: str | None = None
    grid: tuple[int, ...] | None = None
    noise: float = 0.0
    dataset: str | None = None
    space: str | None = None
    command: str | None = None
    algorithms: tuple[str, ...] = ("bo4co",)
    budget: int = 100
    init_design: int | None = None
    learn_cycle: int = 10
    restarts: int = 3
    kappa: str = "adaptive:0.1,2"
    kernel: str = "matern"
    mean: str = "const"
    gp_noise: str = "learned"
    replications: int = 1
    seed: int = 0
    jobs: int = 1
    out: str = "results"

    def validate(self) -> None:
        chosen = [s is not None for s in (self.function, self.dataset, self.command)]
        if sum(chosen) != 1:
            raise ConfigError("exactly one of function/dataset/command must be given")
        if self.function is not None and self.function not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.function!r}; choices: {sorted(BENCHMARKS)}")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {algo!r}; choices: {ALGORITHMS}")
        if not self.algorithms:
            raise ConfigError("at least one algorithm required")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.budget < 2:
            raise ConfigError("budget must be >= 2")
        if self.noise < 0:
            raise ConfigError("noise sigma must be >= 0")
        if self.kernel not in ("matern", "categorical", "product"):
            raise ConfigError("kernel must be matern|categorical|product")
        if self.mean not in ("const", "linear"):
            raise ConfigError("mean must be const|linear")
        for path_attr in ("dataset", "space"):
            p = getattr(self, path_attr)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{path_attr} file {p!r} does not exist")
        _parse_kappa(self.kappa, space_size=2)  # syntax check
        _parse_gp_noise(self.gp_noise)


_KERNEL_FAMILY = {"matern": "matern12", "categorical": "categorical-ard", "product": "product-mixed"}
_MEAN_FORM = {"const": "constant", "linear": "linear"}


def _parse_kappa(text: str, space_size: int) -> KappaSchedule:
    try:
        mode, _, rest = text.partition(":")
        if mode == "const":
            return KappaSchedule.constant(float(rest))
        if mode == "adaptive":
            if rest:
                eps_s, _, r_s = rest.partition(",")
                return KappaSchedule.adaptive(space_size, float(eps_s), int(r_s or 2))
            return KappaSchedule.adaptive(space_size)
    except ValueError as exc:
        raise ConfigError(f"bad --kappa value {text!r}: {exc}") from exc
    raise ConfigError(f"bad --kappa value {text!r}; use const:<v> or adaptive:<eps>,<r>")


def _parse_gp_noise(text: str) -> tuple[str, float | None]:
    if text == "learned":
        return "learned", None
    if text == "historical":
        return "historical", None
    if text.startswith("fixed:"):
        try:
            return "fixed", float(text.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad gp_noise {text!r}") from exc
    raise ConfigError(f"bad gp_noise {text!r}; use learned|historical|fixed:<var>")


def infer_space_from_csv(path: str) -> ConfigSpace:
    """Derive a space declaration from a dataset CSV's observed values."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1].strip() != "latency":
            raise DatasetParseError("last CSV column must be 'latency'")
        names = [h.strip() for h in header[:-1]]
        seen: list[list[str]] = [[] for _ in names]
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            for i, cell in enumerate(row[:-1]):
                cell = cell.strip()
                if cell not in seen[i]:
                    seen[i].append(cell)
    params = []
    for name, raw in zip(names, seen):
        try:
            nums = sorted(set(float(v) for v in raw))
            as_int = all(float(v).is_integer() for v in raw)
            options = tuple(int(v) if as_int else v for v in nums)
            params.append(ParameterDef(name, INTEGER_GRID, options))
        except ValueError:
            params.append(ParameterDef(name, CATEGORICAL, tuple(sorted(set(raw)))))
    return ConfigSpace(tuple(params))


def _load_tabular(spec: ExperimentSpec) -> TabularDataset:
    space = load_space(spec.space) if spec.space else infer_space_from_csv(spec.dataset)
    with open(spec.dataset, encoding="utf-8") as fh:
        return load_dataset(fh, space)


def build_source(spec: ExperimentSpec, seed: int) -> ResponseSource:
    """Construct the per-replication measurement backend."""
    if spec.function is not None:
        _, src = benchmark_source(spec.function, spec.grid, spec.noise, seed)
        return src
    if spec.dataset is not None:
        ds = _load_tabular(spec)
        noise = spec.noise if spec.noise > 0 else 0.0
        return playback(ds, noise=noise, seed=seed)
    if spec.space is None:
        raise ConfigError("external command sources need --space <declaration file>")
    return ExternalCommandSource(load_space(spec.space), spec.command)


def _gp_noise_var(spec: ExperimentSpec) -> float | None:
    mode, value = _parse_gp_noise(spec.gp_noise)
    if mode == "learned":
        return None
    if mode == "fixed":
        return value
    if spec.dataset is None:
        raise ConfigError("gp_noise=historical requires a dataset source with replicates")
    try:
        return estimate_noise_variance(_load_tabular(spec))
    except ValueError as exc:
        raise ConfigError(f"gp_noise=historical: {exc}") from exc


def run_single(spec: ExperimentSpec, algorithm: str, rep: int) -> RunTrace:
    """One (algorithm, replication) run with its derived seed."""
    seed = spec.seed + rep
    source = build_source(spec, seed)
    space = source.space
    n_init = spec.init_design if spec.init_design is not None else default_design_size(space)
    budget = BudgetConfig(
        n_max=min(spec.budget, space.size),
        n_init=min(n_init, space.size),
        learn_cycle=spec.learn_cycle,
        restarts=spec.restarts,
        seed=seed,
    )
    if algorithm == "bo4co":
        return run_bo4co(
            space,
            source,
            budget,
            kernel_family=_KERNEL_FAMILY[spec.kernel],
            mean_form=_MEAN_FORM[spec.mean],
            kappa=_parse_kappa(spec.kappa, space.size),
            noise_var=_gp_noise_var(spec),
        )
    return run_baseline(algorithm, space, source, budget)


def _run_task(args: tuple[ExperimentSpec, str, int]) -> tuple[str, int, RunTrace]:
    spec, algorithm, rep = args
    return algorithm, rep, run_single(spec, algorithm, rep)


# ------------------------------------------------------------- artifacts


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_trace_csv(path: Path, trace: RunTrace, space: ConfigSpace) -> None:
    """Decision content only; deterministic bytes for a given (spec, seed)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *space.names, "y", "kappa", "best_y"])
        for rec in trace.records:
            writer.writerow(
                [
                    rec.t,
                    *(str(v) for v in space.values_at(rec.point)),
                    _fmt(rec.y),
                    _fmt(rec.kappa),
                    _fmt(rec.best_y),
                ]
            )


def read_trace_bests(path: Path) -> list[float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [float(row["best_y"]) for row in reader]


def write_overhead_csv(path: Path, trace: RunTrace, n_init: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "overhead_ms"])
        for rec in trace.records:
            if rec.t > n_init:
                writer.writerow([rec.t, _fmt(rec.overhead_ms)])


def write_distance_csv(path: Path, report: AggregateReport) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "statistic", "value"])
        for t, stat, v in report.rows():
            writer.writerow([t, stat, _fmt(v)])


class _TraceOnDisk:
    """Adapter so re-aggregation can run on trace files alone."""

    def __init__(self, path: Path, algorithm: str):
        self._bests = read_trace_bests(path)
        self.algorithm = algorithm

    @property
    def n_evals(self) -> int:
        return len(self._bests)

    def best_so_far(self) -> list[float]:
        return list(self._bests)


def aggregate_from_traces(out_dir: Path) -> None:
    """Rebuild every distance CSV from trace files plus summary.json."""
    summary = json.loads((out_dir / "summary.json").read_text())
    gt = summary.get("ground_truth")
    if gt is None:
        return
    for algo_dir in sorted((out_dir / "traces").iterdir()):
        traces = [
            _TraceOnDisk(p, algo_dir.name) for p in sorted(algo_dir.glob("rep*.csv"))
        ]
        report = distance_curve(traces, gt["value"], algorithm=algo_dir.name)
        write_distance_csv(out_dir / f"distance_{algo_dir.name}.csv", report)


def _hyper_dict(trace: RunTrace) -> dict | None:
    h = trace.hyperparams
    if h is None:
        return None
    return {
        "kernel_family": h.kernel.family,
        "amplitude": h.kernel.amplitude,
        "scales": list(h.kernel.scales),
        "mean_form": h.mean.form,
        "mean_offset": h.mean.offset,
        "mean_slopes": list(h.mean.slopes),
        "noise_var": h.noise_var,
    }


def cmd_tune(spec: ExperimentSpec) -> int:
    spec.validate()
    probe = build_source(spec, spec.seed)
    space = probe.space
    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(spec, algo, rep) for algo in spec.algorithms for rep in range(spec.replications)]
    results: dict[tuple[str, int], RunTrace] = {}
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            for algo, rep, trace in pool.map(_run_task, tasks):
                results[(algo, rep)] = trace
    else:
        for task in tasks:
            algo, rep, trace = _run_task(task)
            results[(algo, rep)] = trace

    n_init_used = spec.init_design if spec.init_design is not None else default_design_size(space)
    summary: dict = {
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        "space": {"names": list(space.names), "size": space.size, "dim": space.dim},
        "ground_truth": None,
        "algorithms": {},
    }
    if probe.ground_truth is not None:
        summary["ground_truth"] = {
            "value": probe.ground_truth.value,
            "values": [_jsonable(v) for v in probe.ground_truth.raw_values],
        }

    for algo in spec.algorithms:
        traces = [results[(algo, rep)] for rep in range(spec.replications)]
        for rep, trace in enumerate(traces):
            write_trace_csv(out_dir / "traces" / algo / f"rep{rep:03d}.csv", trace, space)
            write_overhead_csv(out_dir / "overhead" / algo / f"rep{rep:03d}.csv", trace, n_init_used)
        if probe.ground_truth is not None:
            report = distance_curve(traces, probe.ground_truth.value, algorithm=algo)
            write_distance_csv(out_dir / f"distance_{algo}.csv", report)
        summary["algorithms"][algo] = [
            {
                "replication": rep,
                "seed": trace.seed,
                "n_evals": trace.n_evals,
                "best_y": _jsonable(trace.best_y),
                "best_x": [_jsonable(v) for v in space.values_at(trace.best_point)]
                if trace.best_point is not None
                else None,
                "hyperparams": _hyper_dict(trace),
            }
            for rep, trace in enumerate(traces)
        ]

    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(tasks)} trace(s) under {out_dir}")
    for algo in spec.algorithms:
        best = min(results[(algo, rep)].best_y for rep in range(spec.replications))
        print(f"  {algo}: best y* = {best:.6g}")
    return 0


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def cmd_screen(spec: ExperimentSpec, max_subset_size: int | None) -> int:
    if spec.dataset is None:
        raise ConfigError("screen requires --dataset")
    ds = _load_tabular(spec)
    if len(ds) == 0:
        raise ConfigError("dataset is empty")
    cap = max_subset_size or ds.space.dim
    if cap > ds.space.dim:
        raise ConfigError(f"--max-subset {cap} exceeds {ds.space.dim} parameters")
    ranking = rank_subsets(ds, cap)
    names = ds.space.names
    print(f"merit ranking ({len(ranking)} subsets, cap {cap}):")
    for rep in ranking[:20]:
        members = ",".join(names[i] for i in rep.subset)
        print(f"  {{{members}}}  merit={rep.merit:.4f}")
    rows = snr_from_dataset(ds)
    if rows:
        print("signal-to-noise (replicated configurations):")
        print(f"  {'configuration':30s} {'mean':>10s} {'std':>10s} {'mu/sigma':>10s}")
        for row in rows:
            ratio = "inf" if math.isinf(row.ratio) else f"{row.ratio:.2f}"
            print(f"  {row.label:30s} {row.mean:10.3f} {row.std:10.3f} {ratio:>10s}")
    else:
        print("signal-to-noise: no replicated configurations in dataset")

    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "merit_ranking.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "subset", "merit", "inter_correlation"])
        for rank, rep in enumerate(ranking, start=1):
            writer.writerow(
                [rank, " ".join(names[i] for i in rep.subset), _fmt(rep.merit), _fmt(rep.inter_correlation)]
            )
    with open(out_dir / "snr.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["configuration", "n", "mean", "std", "ratio"])
        for row in rows:
            writer.writerow([row.label, row.n, _fmt(row.mean), _fmt(row.std), _fmt(row.ratio)])
    (out_dir / "screen_summary.json").write_text(
        json.dumps(
            {
                "merit_rankings": [
                    {"subset": list(r.subset), "merit": r.merit} for r in ranking[:50]
                ],
                "snr": [
                    {"configuration": r.label, "mean": r.mean, "std": r.std,
                     "ratio": ("inf" if math.isinf(r.ratio) else r.ratio)}
                    for r in rows
                ],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    return 0


def cmd_overhead(spec: ExperimentSpec) -> int:
    spec.validate()
    if tuple(spec.algorithms) != ("bo4co",):
        spec.algorithms = ("bo4co",)
    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_overheads: list[float] = []
    for rep in range(spec.replications):
        trace = run_single(spec, "bo4co", rep)
        source = build_source(spec, spec.seed + rep)
        n_init = spec.init_design if spec.init_design is not None else default_design_size(source.space)
        write_overhead_csv(out_dir / "overhead" / "bo4co" / f"rep{rep:03d}.csv", trace, n_init)
        all_overheads.extend(r.overhead_ms for r in trace.records if r.t > n_init)
    if not all_overheads:
        print("no loop iterations were run (budget entirely in the initial design)")
        return 0
    arr = np.array(all_overheads)
    print(
        f"per-iteration overhead over {len(arr)} iteration(s): "
        f"median {np.median(arr):.1f} ms, p95 {np.quantile(arr, 0.95):.1f} ms, max {arr.max():.1f} ms"
    )
    return 0


# ------------------------------------------------------------- argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML experiment file; flags override its keys")
    parser.add_argument("--dataset", help="measurement CSV for playback")
    parser.add_argument("--space", help="space declaration YAML (else inferred from the CSV)")
    parser.add_argument("--function", help=f"benchmark function: {', '.join(sorted(BENCHMARKS))}")
    parser.add_argument("--command", help="external measurement command")
    parser.add_argument("--grid", help="comma-separated per-dimension grid sizes")
    parser.add_argument("--noise", type=float, help="Gaussian noise sigma added per evaluation")
    parser.add_argument("--budget", type=int, help="total evaluation budget N_max")
    parser.add_argument("--init-design", type=int, dest="init_design", help="initial design size n")
    parser.add_argument("--learn-cycle", type=int, dest="learn_cycle", help="relearn every N_l evaluations")
    parser.add_argument("--restarts", type=int, help="hyperparameter learning restarts")
    parser.add_argument("--kappa", help="const:<v> or adaptive:<eps>,<r>")
    parser.add_argument("--kernel", choices=("matern", "categorical", "product"))
    parser.add_argument("--mean", choices=("const", "linear"))
    parser.add_argument("--gp-noise", dest="gp_noise", help="learned | historical | fixed:<var>")
    parser.add_argument("--algorithms", help=f"comma-separated from: {', '.join(ALGORITHMS)}")
    parser.add_argument("--replications", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int, help="concurrent replications")
    parser.add_argument("--out", help="output directory")


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    values: dict = {}
    if args.config:
        try:
            doc = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a mapping")
        values.update(doc)
    for key in ExperimentSpec.__dataclass_fields__:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if isinstance(values.get("grid"), str):
        values["grid"] = tuple(int(v) for v in values["grid"].split(","))
    elif isinstance(values.get("grid"), list):
        values["grid"] = tuple(int(v) for v in values["grid"])
    if isinstance(values.get("algorithms"), str):
        values["algorithms"] = tuple(a.strip() for a in values["algorithms"].split(",") if a.strip())
    elif isinstance(values.get("algorithms"), list):
        values["algorithms"] = tuple(values["algorithms"])
    unknown = set(values) - set(ExperimentSpec.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentSpec(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gp-autotune",
        description="GP-guided configuration tuning with classical baselines",
    )
    sub = parser.add_subparsers(dest="command_name", required=True)
    p_tune = sub.add_parser("tune", help="run tuning experiments")
    _add_common(p_tune)
    p_screen = sub.add_parser("screen", help="merit ranking and SNR table for a dataset")
    _add_common(p_screen)
    p_screen.add_argument("--max-subset", type=int, dest="max_subset", help="largest subset size")
    p_overhead = sub.add_parser("overhead", help="per-iteration tuner overhead report")
    _add_common(p_overhead)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("GP_AUTOTUNE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = _spec_from_args(args)
        if args.command_name == "tune":
            return cmd_tune(spec)
        if args.command_name == "screen":
            return cmd_screen(spec, args.max_subset)
        return cmd_overhead(spec)
    except (ConfigError, DatasetParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SourceUnavailableError as exc:
        print(f"measurement source failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
