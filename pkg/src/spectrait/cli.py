"""Command-line interface: dataset tooling, training, evaluation, sweeps."""

import sys

import click
import numpy as np

from . import experiments, model_io, simulator
from .data import Domain, load_csv, save_csv, split as split_dataset
from .metrics import r2 as r2_metric
from .metrics import rmse as rmse_metric
from .mlp import MlpRegressor, fine_tune as fine_tune_model
from .nngp import NngpGpRegressor
from .plsr import PlsrRegressor, select_components
from .transfer import TransferGpRegressor

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml


@click.group()
def main():
    """Leaf trait regression from hyperspectral reflectance."""


@main.command("split")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--fraction", required=True, type=float)
@click.option("--seed", required=True, type=int)
@click.option("--out-train", required=True, type=click.Path())
@click.option("--out-test", required=True, type=click.Path())
@click.option("--trait", default=None, help="Trait column name (default: detected)")
def split_cmd(input_path, fraction, seed, out_train, out_test, trait):
    """Seeded train/test split of a spectra CSV."""
    ds = load_csv(input_path, trait=trait)
    train, test = split_dataset(ds, fraction, seed)
    trait_name = trait or "chl"
    save_csv(train, out_train, trait=trait_name)
    save_csv(test, out_test, trait=trait_name)
    click.echo(f"wrote {train.n} train rows to {out_train}, "
               f"{test.n} test rows to {out_test}")


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--n", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--domain", type=click.Choice(["source", "target"]), default="source")
def simulate_cmd(config_path, n, out_path, domain):
    """Generate a synthetic labeled reflectance CSV."""
    cfg = simulator.load_config(config_path)
    ds = simulator.generate(cfg, n, domain=Domain(domain))
    save_csv(ds, out_path)
    click.echo(f"wrote {ds.n} samples x {ds.d} bands to {out_path}")


@main.group("train")
def train_group():
    """Train a model on a labeled spectra CSV."""


def _load_train(path, trait=None):
    return load_csv(path, trait=trait)


@train_group.command("plsr")
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--components", default="cv", help="Component count or 'cv'")
@click.option("--cv-folds", default=5, type=int)
@click.option("--cv-seed", default=0, type=int)
@click.option("--k-max", default=15, type=int)
@click.option("--model-out", required=True, type=click.Path())
@click.option("--trait", default=None)
def train_plsr(train_path, components, cv_folds, cv_seed, k_max, model_out, trait):
    ds = _load_train(train_path, trait)
    if components == "cv":
        k = select_components(ds.X, ds.y, k_max=k_max, folds=cv_folds, seed=cv_seed)
        click.echo(f"cross-validation selected {k} components")
    else:
        k = int(components)
    model = PlsrRegressor(n_components=k).fit(ds.X, ds.y)
    model_io.save_model(model_out, model)
    click.echo(f"saved plsr model to {model_out}")


@train_group.command("mlp")
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TOML with training hyperparameters")
@click.option("--seed", default=0, type=int)
@click.option("--model-out", required=True, type=click.Path())
@click.option("--trait", default=None)
def train_mlp(train_path, config_path, seed, model_out, trait):
    ds = _load_train(train_path, trait)
    kwargs = {}
    if config_path:
        with open(config_path, "rb") as fh:
            kwargs = experiments._mlp_kwargs(_toml.load(fh))
    model = MlpRegressor(seed=seed, **kwargs).fit(ds.X, ds.y)
    model_io.save_model(model_out, model)
    click.echo(f"saved mlp model to {model_out} "
               f"(best validation loss {model.best_val_loss_:.6g})")


@train_group.command("nngp")
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--depth", default=3, type=int)
@click.option("--sigw2", default=1.6, type=float)
@click.option("--sigb2", default=0.1, type=float)
@click.option("--noise", default="grid", help="Noise variance or 'grid'")
@click.option("--model-out", required=True, type=click.Path())
@click.option("--trait", default=None)
def train_nngp(train_path, depth, sigw2, sigb2, noise, model_out, trait):
    ds = _load_train(train_path, trait)
    noise_value = noise if noise == "grid" else float(noise)
    model = NngpGpRegressor(depth=depth, sigma_w2=sigw2, sigma_b2=sigb2,
                            noise=noise_value).fit(ds.X, ds.y)
    model_io.save_model(model_out, model)
    click.echo(f"saved nngp model to {model_out} (noise {model.noise_:g}, "
               f"evidence {model.lml_:.6g})")


@train_group.command("transfer-gp")
@click.option("--source", "source_path", required=True, type=click.Path(exists=True))
@click.option("--target", "target_path", required=True, type=click.Path(exists=True))
@click.option("--lambda", "lam", default="auto", help="Relatedness in [0,1] or 'auto'")
@click.option("--landmarks", default="exact", help="Landmark count or 'exact'")
@click.option("--landmark-seed", default=0, type=int)
@click.option("--depth", default=3, type=int)
@click.option("--sigw2", default=1.6, type=float)
@click.option("--sigb2", default=0.1, type=float)
@click.option("--noise", default="auto",
              help="'auto', a single variance, or 'source,target'")
@click.option("--model-out", required=True, type=click.Path())
@click.option("--report", "report_path", default=None, type=click.Path(),
              help="CSV with the evaluated lambda grid and evidence curve")
@click.option("--trait", default=None)
def train_transfer(source_path, target_path, lam, landmarks, landmark_seed,
                   depth, sigw2, sigb2, noise, model_out, report_path, trait):
    source = load_csv(source_path, domain=Domain.SOURCE, trait=trait)
    target = load_csv(target_path, domain=Domain.TARGET, trait=trait)
    lam_value = lam if lam == "auto" else float(lam)
    landmarks_value = landmarks if landmarks == "exact" else int(landmarks)
    if noise == "auto":
        noise_value = "auto"
    elif "," in noise:
        noise_value = tuple(float(v) for v in noise.split(","))
    else:
        noise_value = float(noise)
    model = TransferGpRegressor(
        lam=lam_value, depth=depth, sigma_w2=sigw2, sigma_b2=sigb2,
        noise=noise_value, landmarks=landmarks_value, landmark_seed=landmark_seed,
    ).fit(source.X, source.y, target.X, target.y)
    model_io.save_model(model_out, model)
    click.echo(f"saved transfer-gp model to {model_out} "
               f"(lambda {model.lambda_:g}, noise "
               f"{model.noise_source_:g}/{model.noise_target_:g})")
    if report_path:
        est = model.lambda_estimate_
        lines = ["lambda,lml"]
        if est is not None:
            lines += [f"{float(g)!r},{float(v)!r}" for g, v in zip(est.grid, est.lml)]
        else:
            lines.append(f"{float(model.lambda_)!r},{float(model.lml_)!r}")
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        click.echo(f"wrote lambda curve to {report_path}")


@main.command("finetune")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TOML with fine-tune hyperparameters")
@click.option("--seed", default=0, type=int)
@click.option("--model-out", required=True, type=click.Path())
@click.option("--trait", default=None)
def finetune_cmd(model_path, train_path, config_path, seed, model_out, trait):
    """Continue training a pretrained MLP on target data."""
    model = model_io.load_model(model_path)
    if not isinstance(model, MlpRegressor):
        raise click.ClickException("finetune requires an mlp model file")
    ds = _load_train(train_path, trait)
    kwargs = {}
    if config_path:
        with open(config_path, "rb") as fh:
            doc = _toml.load(fh)
        for key in ("freeze_layers", "learning_rate", "max_epochs", "batch_size"):
            if key in doc:
                kwargs[key] = doc[key]
    tuned = fine_tune_model(model, ds.X, ds.y, seed=seed, **kwargs)
    model_io.save_model(model_out, tuned)
    click.echo(f"saved fine-tuned model to {model_out}")


@main.command("evaluate")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--test", "test_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--fraction", default="", help="Training fraction tag for the report")
@click.option("--seed", default="", help="Seed tag for the report")
@click.option("--trait", default=None)
def evaluate_cmd(model_path, test_path, report_path, fraction, seed, trait):
    """Score a saved model on a held-out CSV."""
    model = model_io.load_model(model_path)
    kind = model_io.model_kind(model_path)
    ds = load_csv(test_path, trait=trait)
    preds = model.predict(ds.X)
    preds = np.asarray(preds)
    row_rmse = rmse_metric(ds.y, preds)
    row_r2 = r2_metric(ds.y, preds)
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("method,n_train_fraction,seed,rmse,r2\n")
        fh.write(f"{kind},{fraction},{seed},{row_rmse!r},{row_r2!r}\n")
    click.echo(f"{kind}: rmse {row_rmse:.6f}, r2 {row_r2:.6f} "
               f"on {ds.n} samples; report at {report_path}")


@main.group("experiment")
def experiment_group():
    """Config-driven method comparison sweeps."""


@experiment_group.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def experiment_run(config_path):
    """Run a sweep; exits nonzero only if every row failed."""
    ok, total = experiments.run_to_dir(config_path)
    click.echo(f"{ok}/{total} rows succeeded")
    if ok == 0:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
