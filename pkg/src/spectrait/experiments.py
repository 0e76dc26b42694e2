"""Config-driven sweeps comparing the methods across training fractions.

A sweep is declared in a TOML file: a target dataset (CSV path or
simulator settings), an optional source dataset for the transfer
methods, the methods to run, training fractions, seeds, and per-method
hyperparameter blocks. Each (method, fraction, seed) row splits the
target with that seed, trains on the train side only, predicts the held
out remainder and records RMSE and R^2. Failures are isolated per row.

Outputs are deterministic: re-running a config reproduces report.csv
and summary.txt byte for byte. Wall-clock timings are inherently not,
so they go to a separate timings.csv.
"""

import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import simulator
from .data import Domain, load_csv, split
from .metrics import r2 as r2_metric
from .metrics import rmse as rmse_metric
from .mlp import MlpRegressor, fine_tune
from .nngp import NngpGpRegressor
from .plsr import PlsrRegressor, select_components
from .transfer import TransferGpRegressor

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

KNOWN_METHODS = ("plsr", "mlp", "nngp", "mlp-finetune", "transfer-gp")
SOURCE_METHODS = ("mlp-finetune", "transfer-gp")


@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset comes from: a CSV file or the simulator."""

    csv: str = None
    trait: str = None
    sim_config: str = None  # path to a simulator TOML; None with csv set
    n: int = None
    seed: int = None  # overrides the simulator config's seed
    geometry_delta: float = 0.0
    baseline_delta: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    target: DatasetSpec
    methods: tuple
    fractions: tuple
    seeds: tuple
    output_dir: str
    source: DatasetSpec = None
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.methods:
            raise ValueError("config needs at least one method")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {KNOWN_METHODS}")
        if not all(0.0 < f < 1.0 for f in self.fractions):
            raise ValueError("training fractions must lie in (0, 1)")
        if not self.seeds:
            raise ValueError("config needs at least one seed")


@dataclass(frozen=True)
class ReportRow:
    method: str
    fraction: float
    seed: int
    rmse: float = None
    r2: float = None
    lam: float = None
    status: str = "ok"

    @property
    def ok(self):
        return self.status == "ok"


def _dataset_spec_from_dict(doc):
    if "csv" in doc:
        return DatasetSpec(csv=doc["csv"], trait=doc.get("trait"))
    if "simulator" in doc:
        sim = doc["simulator"]
        return DatasetSpec(
            sim_config=sim.get("config"),
            n=int(sim["n"]),
            seed=sim.get("seed"),
            geometry_delta=float(sim.get("geometry_delta", 0.0)),
            baseline_delta=float(sim.get("baseline_delta", 0.0)),
        )
    raise ValueError("dataset table needs either 'csv' or a [.. .simulator] table")


def load_experiment_config(path):
    """Parse an experiment TOML file; paths are relative to the file."""
    path = Path(path)
    with open(path, "rb") as fh:
        doc = _toml.load(fh)
    run = doc.get("run", {})
    methods = tuple(run.get("methods", []))
    needs_source = any(m in SOURCE_METHODS for m in methods)
    source = None
    if "source" in doc:
        source = _dataset_spec_from_dict(doc["source"])
    elif needs_source:
        raise ValueError("transfer methods require a [source] dataset table")
    return ExperimentConfig(
        target=_dataset_spec_from_dict(doc["target"]),
        source=source,
        methods=methods,
        fractions=tuple(float(f) for f in run.get("fractions", (0.05, 0.10))),
        seeds=tuple(int(s) for s in run.get("seeds", ())),
        output_dir=doc.get("output", {}).get("directory", "results"),
        method_params=doc.get("methods", {}),
    ), path.parent


def resolve_dataset(spec, domain, base_dir="."):
    """Materialize a dataset spec (CSV load or seeded simulation)."""
    base = Path(base_dir)
    if spec.csv is not None:
        return load_csv(base / spec.csv, domain=domain, trait=spec.trait)
    if spec.sim_config is not None:
        cfg = simulator.load_config(base / spec.sim_config)
    else:
        cfg = simulator.default_config()
    if spec.seed is not None:
        cfg = simulator.replace_seed(cfg, int(spec.seed))
    if spec.geometry_delta or spec.baseline_delta:
        cfg = simulator.shift_domain(cfg, spec.geometry_delta, spec.baseline_delta)
    return simulator.generate(cfg, spec.n, domain=domain)


def _fit_and_predict(method, params, train, X_test, source, seed, pretrain_cache):
    """Train one method and predict the test spectra.

    Sees only the training dataset and the raw test spectra; test labels
    never enter here, which keeps the train/evaluate stages separate.
    Returns (predictions, fitted transfer model or None).
    """
    params = dict(params or {})
    if method == "plsr":
        components = params.pop("components", "cv")
        if components == "cv":
            components = select_components(
                train.X, train.y,
                k_max=int(params.pop("k_max", 15)),
                folds=int(params.pop("cv_folds", 5)),
                seed=seed,
            )
        model = PlsrRegressor(n_components=int(components)).fit(train.X, train.y)
        return model.predict(X_test), None
    if method == "mlp":
        model = MlpRegressor(seed=seed, **_mlp_kwargs(params)).fit(train.X, train.y)
        return model.predict(X_test), None
    if method == "nngp":
        model = NngpGpRegressor(**_nngp_kwargs(params)).fit(train.X, train.y)
        return model.predict(X_test), None
    if method == "mlp-finetune":
        if source is None:
            raise ValueError("mlp-finetune requires a source dataset")
        pre_params = _mlp_kwargs(params.pop("pretrain", {}))
        key = (seed, tuple(sorted(pre_params.items())))
        if key not in pretrain_cache:
            pretrain_cache[key] = MlpRegressor(seed=seed, **pre_params).fit(
                source.X, source.y
            )
        tuned = fine_tune(
            pretrain_cache[key], train.X, train.y,
            freeze_layers=int(params.pop("freeze_layers", 1)),
            learning_rate=float(params.pop("learning_rate", 1e-4)),
            max_epochs=int(params.pop("max_epochs", 200)),
            batch_size=int(params.pop("batch_size", 32)),
            seed=seed,
        )
        return tuned.predict(X_test), None
    if method == "transfer-gp":
        if source is None:
            raise ValueError("transfer-gp requires a source dataset")
        model = TransferGpRegressor(landmark_seed=seed, **_transfer_kwargs(params))
        model.fit(source.X, source.y, train.X, train.y)
        return model.predict(X_test), model
    raise ValueError(f"unknown method {method!r}")


def _mlp_kwargs(params):
    out = {}
    for key in ("learning_rate", "batch_size", "max_epochs", "patience",
                "validation_fraction", "sigma_w2", "sigma_b2"):
        if key in params:
            out[key] = params[key]
    if "hidden" in params:
        out["hidden"] = tuple(int(h) for h in params["hidden"])
    return out


def _nngp_kwargs(params):
    out = {}
    for key in ("depth", "sigma_w2", "sigma_b2", "noise", "noise_grid"):
        if key in params:
            out[key] = params[key]
    return out


def _transfer_kwargs(params):
    out = {}
    for key in ("lam", "depth", "sigma_w2", "sigma_b2", "noise", "noise_grid",
                "lambda_grid", "landmarks", "refine_iters"):
        if key in params:
            out[key] = params[key]
    if isinstance(out.get("noise"), list):
        out["noise"] = tuple(out["noise"])
    return out


@dataclass
class ExperimentResult:
    rows: list
    lambda_curves: dict  # (method, fraction, seed) -> (grid, lml)
    timings: list  # (method, fraction, seed, seconds)


def run(config, base_dir="."):
    """Execute every (method, fraction, seed) row of a sweep.

    Rows are ordered by (method, fraction, seed); a failure in one row is
    recorded in its status and does not abort the others.
    """
    target = resolve_dataset(config.target, Domain.TARGET, base_dir)
    source = None
    if config.source is not None:
        source = resolve_dataset(config.source, Domain.SOURCE, base_dir)

    rows, curves, timings = [], {}, []
    pretrain_cache = {}
    for method in sorted(config.methods):
        block = config.method_params.get(method, {})
        for fraction in config.fractions:
            for seed in config.seeds:
                started = time.perf_counter()
                try:
                    train, test = split(target, fraction, seed)
                    preds, extra = _fit_and_predict(
                        method, block, train, test.X, source, seed, pretrain_cache
                    )
                    lam = None
                    if isinstance(extra, TransferGpRegressor):
                        lam = extra.lambda_
                        if extra.lambda_estimate_ is not None:
                            curves[(method, fraction, seed)] = (
                                extra.lambda_estimate_.grid,
                                extra.lambda_estimate_.lml,
                            )
                    row = ReportRow(method, fraction, seed,
                                    rmse=rmse_metric(test.y, preds),
                                    r2=r2_metric(test.y, preds), lam=lam)
                except Exception as exc:  # isolate the failure to this row
                    row = ReportRow(method, fraction, seed,
                                    status=f"error: {exc}")
                timings.append((method, fraction, seed,
                                time.perf_counter() - started))
                rows.append(row)
    return ExperimentResult(rows, curves, timings)


def _fmt(value):
    return "" if value is None else repr(float(value))


def report_csv_text(rows):
    lines = ["method,fraction,seed,rmse,r2,lambda,status"]
    for r in rows:
        lines.append(
            f"{r.method},{_fmt(r.fraction)},{r.seed},{_fmt(r.rmse)},"
            f"{_fmt(r.r2)},{_fmt(r.lam)},{r.status}"
        )
    return "\n".join(lines) + "\n"


def summarize(rows):
    """Fixed-format mean +- std table across seeds per (method, fraction).

    Error rows are excluded from the statistics and counted in the
    failed column. Uses the population standard deviation.
    """
    if not rows:
        raise ValueError("nothing to summarize")
    groups = {}
    for r in rows:
        groups.setdefault((r.method, r.fraction), []).append(r)
    header = (f"{'method':<14} {'fraction':>8} {'seeds':>5} {'failed':>6} "
              f"{'rmse_mean':>12} {'rmse_std':>12} {'r2_mean':>12} {'r2_std':>12}")
    lines = [header, "-" * len(header)]
    for (method, fraction) in sorted(groups):
        group = groups[(method, fraction)]
        ok = [r for r in group if r.ok]
        failed = len(group) - len(ok)
        if ok:
            rmses = np.array([r.rmse for r in ok])
            r2s = np.array([r.r2 for r in ok])
            stats = (f"{rmses.mean():>12.6f} {rmses.std():>12.6f} "
                     f"{r2s.mean():>12.6f} {r2s.std():>12.6f}")
        else:
            stats = f"{'-':>12} {'-':>12} {'-':>12} {'-':>12}"
        lines.append(f"{method:<14} {fraction:>8.4f} {len(group):>5d} "
                     f"{failed:>6d} {stats}")
    return "\n".join(lines) + "\n"


def write_outputs(result, out_dir):
    """Write report.csv, summary.txt, lambda curves and timings.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv_text(result.rows), encoding="utf-8")
    (out / "summary.txt").write_text(summarize(result.rows), encoding="utf-8")
    for (method, fraction, seed), (grid, lml) in sorted(result.lambda_curves.items()):
        name = f"lambda_curve_{method}_f{_fmt(fraction)}_s{seed}.csv"
        lines = ["lambda,lml"]
        lines += [f"{_fmt(g)},{_fmt(v)}" for g, v in zip(grid, lml)]
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    lines = ["method,fraction,seed,seconds"]
    lines += [f"{m},{_fmt(f)},{s},{sec:.3f}" for m, f, s, sec in result.timings]
    (out / "timings.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_to_dir(config_path):
    """CLI entry: load a config, run it, write outputs next to it.

    Returns the number of successful rows (zero means total failure,
    which the CLI maps to a nonzero exit code).
    """
    config, base_dir = load_experiment_config(config_path)
    result = run(config, base_dir)
    write_outputs(result, Path(base_dir) / config.output_dir)
    return sum(1 for r in result.rows if r.ok), len(result.rows)
