"""Command-line surface: train, predict, sobol, benchmark.

A thin single-threaded driver around the library; worker counts inside
library calls are capped by the SSE_THREADS environment variable.  All
errors go to stderr with an ``error:`` prefix and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import benchmarks, figures
from .core import SseConfig, gen_error_estimate, load_model, save_model, train
from .input_model import InputModel, marginal_from_spec
from .sensitivity import first_order_sobol

_INPUT_KEYS = {"variables"}
_VARIABLE_KEYS = {"family", "mean", "cov", "std", "lower", "upper"}
_SSE_KEYS = {"p_max", "q_grid", "rank", "n_min", "seed"}
_BENCHMARK_KEYS = {"case", "sizes", "replications", "n_val", "d_pce"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parsed configuration file."""

    input_model: InputModel | None = None
    variable_names: tuple = ()
    p_max: int = 5
    q_grid: tuple = SseConfig().q_grid
    rank: int = 2
    n_min: int | None = None
    seed: int = 0
    case: str | None = None
    sizes: tuple | None = None
    replications: int | None = None
    n_val: int | None = None
    d_pce: int | None = None

    def sse_config(self, seed=None):
        return SseConfig(
            max_degree=self.p_max,
            q_grid=self.q_grid,
            rank=self.rank,
            n_min=self.n_min,
            seed=self.seed if seed is None else int(seed),
        )


def _parse_sections(path):
    """Sectioned key=value text; '#' starts a comment; unknown keys are errors."""
    sections = []
    current = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"{path}:{lineno}: empty section name")
            current = (name, {})
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if current is None:
            raise ConfigError(f"{path}:{lineno}: key outside of any section")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in current[1]:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        current[1][key] = value
    return sections


def _tokens(value):
    return value.replace(",", " ").split()


def _build_marginal(name, entries, path):
    if "family" not in entries:
        raise ConfigError(f"{path}: variable {name!r} needs a family")
    family = entries["family"].lower()
    given = {k: v for k, v in entries.items() if k != "family"}
    try:
        if family == "uniform":
            allowed = {"lower", "upper"}
            spec = {"family": family, "lower": float(given["lower"]), "upper": float(given["upper"])}
        elif family == "gaussian":
            allowed = {"mean", "std", "cov"}
            mean = float(given["mean"])
            if "std" in given and "cov" in given:
                raise ConfigError(f"{path}: variable {name!r}: give std or cov, not both")
            std = float(given["std"]) if "std" in given else abs(mean) * float(given["cov"])
            spec = {"family": family, "mean": mean, "std": std}
        elif family in ("lognormal", "gumbel"):
            allowed = {"mean", "cov"}
            spec = {"family": family, "mean": float(given["mean"]), "cov": float(given["cov"])}
        else:
            raise ConfigError(f"{path}: variable {name!r}: unknown family {family!r}")
    except KeyError as exc:
        raise ConfigError(f"{path}: variable {name!r}: missing key {exc.args[0]!r}") from None
    extra = set(given) - allowed
    if extra:
        raise ConfigError(f"{path}: variable {name!r}: unknown keys {sorted(extra)}")
    try:
        return marginal_from_spec(spec)
    except ValueError as exc:
        raise ConfigError(f"{path}: variable {name!r}: {exc}") from None


def parse_config(path):
    """Parse and validate a run configuration file."""
    cfg = RunConfig()
    variable_sections = {}
    names = ()
    for name, entries in _parse_sections(path):
        if name == "input":
            extra = set(entries) - _INPUT_KEYS
            if extra:
                raise ConfigError(f"{path}: [input]: unknown keys {sorted(extra)}")
            if "variables" not in entries:
                raise ConfigError(f"{path}: [input] needs a variables key")
            names = tuple(_tokens(entries["variables"]))
            if len(set(names)) != len(names) or not names:
                raise ConfigError(f"{path}: [input] variables must be unique and nonempty")
        elif name.startswith("variable "):
            var = name[len("variable "):].strip()
            if var in variable_sections:
                raise ConfigError(f"{path}: duplicate section [variable {var}]")
            variable_sections[var] = entries
        elif name == "sse":
            extra = set(entries) - _SSE_KEYS
            if extra:
                raise ConfigError(f"{path}: [sse]: unknown keys {sorted(extra)}")
            try:
                if "p_max" in entries:
                    cfg.p_max = int(entries["p_max"])
                if "q_grid" in entries:
                    cfg.q_grid = tuple(float(q) for q in _tokens(entries["q_grid"]))
                if "rank" in entries:
                    cfg.rank = int(entries["rank"])
                if "n_min" in entries:
                    cfg.n_min = int(entries["n_min"])
                if "seed" in entries:
                    cfg.seed = int(entries["seed"])
            except ValueError as exc:
                raise ConfigError(f"{path}: [sse]: {exc}") from None
        elif name == "benchmark":
            extra = set(entries) - _BENCHMARK_KEYS
            if extra:
                raise ConfigError(f"{path}: [benchmark]: unknown keys {sorted(extra)}")
            try:
                if "case" in entries:
                    cfg.case = entries["case"]
                if "sizes" in entries:
                    cfg.sizes = tuple(int(s) for s in _tokens(entries["sizes"]))
                if "replications" in entries:
                    cfg.replications = int(entries["replications"])
                if "n_val" in entries:
                    cfg.n_val = int(entries["n_val"])
                if "d_pce" in entries:
                    cfg.d_pce = int(entries["d_pce"])
            except ValueError as exc:
                raise ConfigError(f"{path}: [benchmark]: {exc}") from None
        else:
            raise ConfigError(f"{path}: unknown section [{name}]")

    if names:
        missing = [v for v in names if v not in variable_sections]
        if missing:
            raise ConfigError(f"{path}: missing [variable ...] sections for {missing}")
        unused = set(variable_sections) - set(names)
        if unused:
            raise ConfigError(f"{path}: variable sections not listed in [input]: {sorted(unused)}")
        marginals = tuple(_build_marginal(v, variable_sections[v], path) for v in names)
        cfg.input_model = InputModel(marginals)
        cfg.variable_names = names
    elif variable_sections:
        raise ConfigError(f"{path}: [variable ...] sections without an [input] section")
    return cfg


# ---------------------------------------------------------------------------
# delimited files


def _read_csv_rows(path):
    with open(path, "r", newline="") as fh:
        return list(csv.reader(fh))


def _parse_float(cell, path, lineno):
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"{path}: line {lineno}: not a number: {cell!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"{path}: line {lineno}: non-finite value")
    return value


def read_design_csv(path, dimension):
    """Training CSV with header x1..xM,y; returns (X, y)."""
    rows = _read_csv_rows(path)
    if not rows:
        raise ValueError(f"{path}: empty design file")
    header = [c.strip() for c in rows[0]]
    if len(header) != dimension + 1:
        raise ValueError(
            f"{path}: expected {dimension + 1} columns (x1..x{dimension},y), got {len(header)}"
        )
    if header[-1] != "y":
        raise ValueError(f"{path}: last column must be named 'y'")
    xs, ys = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dimension + 1:
            raise ValueError(f"{path}: line {lineno}: expected {dimension + 1} fields, got {len(row)}")
        values = [_parse_float(cell, path, lineno) for cell in row]
        xs.append(values[:-1])
        ys.append(values[-1])
    if not xs:
        raise ValueError(f"{path}: design file has no data rows")
    return np.asarray(xs), np.asarray(ys)


def read_points_csv(path, dimension):
    """Prediction CSV with one column per input; returns (header, rows, X)."""
    rows = _read_csv_rows(path)
    if not rows:
        raise ValueError(f"{path}: empty points file")
    header = [c.strip() for c in rows[0]]
    if len(header) != dimension:
        raise ValueError(f"{path}: expected {dimension} columns, got {len(header)}")
    data = []
    kept = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dimension:
            raise ValueError(f"{path}: line {lineno}: expected {dimension} fields, got {len(row)}")
        data.append([_parse_float(cell, path, lineno) for cell in row])
        kept.append(row)
    return header, kept, np.asarray(data)


# ---------------------------------------------------------------------------
# commands


def cmd_train(config_path, design_path, out_path, seed=None):
    cfg = parse_config(config_path)
    if cfg.input_model is None:
        raise ConfigError(f"{config_path}: training requires an [input] section")
    x, y = read_design_csv(design_path, cfg.input_model.dimension)
    model = train(cfg.input_model, x, y, cfg.sse_config(seed))
    save_model(model, out_path)
    _, eps_rel = gen_error_estimate(model)
    print(f"eps_gen_hat={eps_rel!r}")
    print(f"depth={model.depth}")
    print(f"n_expansions={model.n_expansions}")
    return 0


def cmd_predict(model_path, points_path, out_path):
    model = load_model(model_path)
    header, raw_rows, x = read_points_csv(points_path, model.dimension)
    flat = model.flattened()
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ["y_pred"])
        if len(raw_rows):
            values = flat.predict(x)
            for row, value in zip(raw_rows, values):
                writer.writerow(row + [repr(float(value))])
    return 0


def cmd_sobol(model_path, out_path):
    model = load_model(model_path)
    result = first_order_sobol(model.flattened())
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "partial_variance", "sobol_index"])
        for d in range(result.dimension):
            writer.writerow(
                [f"x{d + 1}", repr(float(result.partial_variance[d])), repr(float(result.sobol_index[d]))]
            )
    return 0


def cmd_benchmark(case_name, mode, out_dir, seed=None, config_path=None):
    cfg = parse_config(config_path) if config_path else RunConfig()
    case_name = case_name or cfg.case
    if not case_name:
        raise ConfigError("no benchmark case given (flag --case or config [benchmark] case)")
    case = benchmarks.get_case(case_name)
    master_seed = benchmarks.DEFAULT_MASTER_SEED if seed is None else int(seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = benchmarks.run_convergence(
        case,
        sizes=cfg.sizes,
        replications=cfg.replications,
        mode=mode,
        master_seed=master_seed,
        n_val=cfg.n_val,
        q_grid=cfg.q_grid if config_path else None,
        rank=cfg.rank,
        d_sse=cfg.p_max if config_path else None,
        d_pce=cfg.d_pce,
        n_min=cfg.n_min,
    )
    benchmarks.write_convergence_csv(records, out / "convergence.csv")
    benchmarks.write_boxplot_csv(records, out / "boxplot_summary.csv")
    accuracy = benchmarks.estimator_accuracy(records)

    figures.convergence_figure(records, out / "convergence.png")
    figures.estimator_figure(records, out / "estimator_accuracy.png")

    lines = [f"case={case.name}", f"mode={mode}", f"master_seed={master_seed}", ""]
    lines.append("eta medians (case, N, method, median):")
    sizes = sorted({rec.n for rec in records})
    for n in sizes:
        for method in ("sse", "pce"):
            med = benchmarks.median_eta(records, case.name, n, method)
            lines.append(f"  {case.name} N={n} {method} median_eta={med!r}")
    lines.append("")
    lines.append("error-estimator accuracy (method, count, pearson_log, spearman, underestimation):")
    for acc in accuracy:
        lines.append(
            f"  {acc.method} count={acc.count} pearson_log={acc.pearson_log!r} "
            f"spearman={acc.spearman!r} underestimation_fraction={acc.underestimation_fraction!r}"
        )
    structural = all(
        rec.depth <= math.floor(math.log2(rec.n / rec.n_min))
        and rec.n_expansions <= 2 * rec.n / rec.n_min - 1
        for rec in records
        if rec.method == "sse"
    )
    lines.append("")
    lines.append(f"structural_bounds_ok={structural}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'convergence.csv'}")
    print(f"wrote {out / 'boxplot_summary.csv'}")
    print(f"wrote {out / 'summary.txt'}")
    print(f"wrote {out / 'convergence.png'}")
    print(f"wrote {out / 'estimator_accuracy.png'}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sse",
        description="Recursive spectral surrogate models on a partition of the input probability space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a surrogate from a design CSV")
    p_train.add_argument("--config", required=True, help="run configuration file")
    p_train.add_argument("--design", required=True, help="training CSV (x1..xM,y with header)")
    p_train.add_argument("--out", required=True, help="output model JSON path")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_pred = sub.add_parser("predict", help="evaluate a trained model on points")
    p_pred.add_argument("--model", required=True, help="model JSON path")
    p_pred.add_argument("--points", required=True, help="points CSV (x1..xM with header)")
    p_pred.add_argument("--out", required=True, help="output CSV path")

    p_sobol = sub.add_parser("sobol", help="first-order Sobol indices of a trained model")
    p_sobol.add_argument("--model", required=True, help="model JSON path")
    p_sobol.add_argument("--out", required=True, help="output CSV path")

    p_bench = sub.add_parser("benchmark", help="run a benchmark case study")
    p_bench.add_argument("--case", default=None, help="benchmark case name")
    p_bench.add_argument("--mode", choices=("smoke", "paper"), default="smoke")
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.add_argument("--seed", type=int, default=None, help="master seed")
    p_bench.add_argument("--config", default=None, help="optional configuration overrides")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args.config, args.design, args.out, args.seed)
        if args.command == "predict":
            return cmd_predict(args.model, args.points, args.out)
        if args.command == "sobol":
            return cmd_sobol(args.model, args.out)
        if args.command == "benchmark":
            return cmd_benchmark(args.case, args.mode, args.out, args.seed, args.config)
        raise RuntimeError(f"unhandled command {args.command!r}")
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
