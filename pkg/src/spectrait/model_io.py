"""Versioned binary persistence for fitted models.

Layout (documented here and in the README):

    magic   16 bytes  b"SPECTRAIT-MODEL\\n"
    length   4 bytes  big-endian uint32, byte length of the JSON header
    header   UTF-8 JSON: {"format_version": 1, "kind": <model kind>,
             "meta": {scalar fields}, "arrays": [{"name", "shape",
             "dtype"}, ...]}
    data     the arrays' raw bytes, row-major (C order), concatenated in
             header order

Array dtypes are restricted to float64 and int64. The header's ``kind``
selects the estimator class on load; ``meta`` carries its constructor
parameters plus fitted scalars, and the arrays restore fitted state.
"""

import json
import struct

import numpy as np

from .data import Scaler
from .mlp import MlpRegressor
from .nngp import NngpGpRegressor
from .plsr import NipalsFit, PlsrRegressor
from .transfer import LambdaEstimate, TransferGpRegressor

MAGIC = b"SPECTRAIT-MODEL\n"
FORMAT_VERSION = 1

_ALLOWED_DTYPES = {"float64": np.float64, "int64": np.int64}


def _write(path, kind, meta, arrays):
    entries = []
    blobs = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        if arr.dtype == np.float64:
            dtype = "float64"
        elif arr.dtype in (np.int64, np.intp, np.int32):
            arr = arr.astype(np.int64)
            dtype = "int64"
        else:
            raise TypeError(f"array '{name}' has unsupported dtype {arr.dtype}")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        blobs.append(arr.tobytes(order="C"))
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "kind": kind, "meta": meta,
         "arrays": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(">I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def _read(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a spectrait model file")
        (header_len,) = struct.unpack(">I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported format version {header.get('format_version')}"
            )
        arrays = {}
        for entry in header["arrays"]:
            dtype = _ALLOWED_DTYPES[entry["dtype"]]
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            buf = fh.read(count * np.dtype(dtype).itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(
                entry["shape"]
            ).copy()
    return header["kind"], header["meta"], arrays


def _scaler_arrays(scaler):
    if scaler is None:
        return []
    return [("scaler_band_mean", scaler.band_mean), ("scaler_band_std", scaler.band_std)]


def _scaler_meta(scaler):
    if scaler is None:
        return {"has_scaler": False}
    return {"has_scaler": True, "label_mean": scaler.label_mean,
            "label_std": scaler.label_std}


def _restore_scaler(meta, arrays):
    if not meta.get("has_scaler"):
        return None
    return Scaler(arrays["scaler_band_mean"], arrays["scaler_band_std"],
                  float(meta["label_mean"]), float(meta["label_std"]))


def save_model(path, model):
    """Persist a fitted estimator; the kind is inferred from its class."""
    if isinstance(model, PlsrRegressor):
        meta = {"params": {"n_components": model.n_components}}
        meta.update(_scaler_meta(model.scaler_))
        arrays = [("W", model.fit_.W), ("P", model.fit_.P), ("q", model.fit_.q),
                  ("coef", model.coef_)] + _scaler_arrays(model.scaler_)
        _write(path, "plsr", meta, arrays)
    elif isinstance(model, MlpRegressor):
        meta = {"params": {
            "hidden": list(model.hidden), "learning_rate": model.learning_rate,
            "batch_size": model.batch_size, "max_epochs": model.max_epochs,
            "patience": model.patience,
            "validation_fraction": model.validation_fraction,
            "sigma_w2": model.sigma_w2, "sigma_b2": model.sigma_b2,
            "seed": model.seed,
        }, "n_layers": len(model.weights_)}
        meta.update(_scaler_meta(model.scaler_))
        arrays = []
        for i, (W, b) in enumerate(zip(model.weights_, model.biases_)):
            arrays.append((f"weight_{i}", W))
            arrays.append((f"bias_{i}", b))
        arrays += _scaler_arrays(model.scaler_)
        _write(path, "mlp", meta, arrays)
    elif isinstance(model, NngpGpRegressor):
        meta = {"params": {
            "depth": model.depth, "sigma_w2": model.sigma_w2,
            "sigma_b2": model.sigma_b2, "standardize": model.standardize,
        }, "noise": model.noise_, "jitter": model.jitter_, "lml": model.lml_}
        meta.update(_scaler_meta(model.scaler_))
        arrays = [("X_train", model.X_train_), ("L", model.L_),
                  ("alpha", model.alpha_)] + _scaler_arrays(model.scaler_)
        _write(path, "nngp", meta, arrays)
    elif isinstance(model, TransferGpRegressor):
        meta = {"params": {
            "depth": model.depth, "sigma_w2": model.sigma_w2,
            "sigma_b2": model.sigma_b2, "standardize": model.standardize,
            "landmarks": model.landmarks, "landmark_seed": model.landmark_seed,
        }, "lambda": model.lambda_, "noise_source": model.noise_source_,
            "noise_target": model.noise_target_, "n_source": model.n_source_}
        meta.update(_scaler_meta(model.scaler_))
        arrays = [("X_source", model.X_source_), ("X_target", model.X_target_),
                  ("alpha", model.alpha_)]
        if model.landmarks == "exact":
            meta["jitter"] = model.jitter_
            meta["lml"] = model.lml_
            arrays.append(("L", model.L_))
        else:
            arrays += [("Z", model.Z_), ("d_inv", model.d_inv_),
                       ("M", model.M_factor_[0]),
                       ("landmark_idx", model.landmark_idx_)]
            meta["m_lower"] = bool(model.M_factor_[1])
        if model.lambda_estimate_ is not None:
            arrays += [("lambda_grid", model.lambda_estimate_.grid),
                       ("lambda_lml", model.lambda_estimate_.lml)]
        arrays += _scaler_arrays(model.scaler_)
        _write(path, "transfer-gp", meta, arrays)
    else:
        raise TypeError(f"cannot persist model of type {type(model).__name__}")


def load_model(path):
    """Load a model saved by :func:`save_model`."""
    kind, meta, arrays = _read(path)
    scaler = _restore_scaler(meta, arrays)
    if kind == "plsr":
        model = PlsrRegressor(**meta["params"])
        model.scaler_ = scaler
        model.fit_ = NipalsFit(arrays["W"], arrays["P"], arrays["q"])
        model.coef_ = arrays["coef"]
    elif kind == "mlp":
        params = dict(meta["params"])
        params["hidden"] = tuple(params["hidden"])
        model = MlpRegressor(**params)
        model.scaler_ = scaler
        n_layers = meta["n_layers"]
        model.weights_ = [arrays[f"weight_{i}"] for i in range(n_layers)]
        model.biases_ = [arrays[f"bias_{i}"] for i in range(n_layers)]
        model.training_log_ = []
    elif kind == "nngp":
        model = NngpGpRegressor(**meta["params"])
        model.scaler_ = scaler
        model.noise_ = float(meta["noise"])
        model.jitter_ = float(meta["jitter"])
        model.lml_ = float(meta["lml"])
        model.X_train_ = arrays["X_train"]
        model.L_ = arrays["L"]
        model.alpha_ = arrays["alpha"]
    elif kind == "transfer-gp":
        params = dict(meta["params"])
        model = TransferGpRegressor(**params)
        model.scaler_ = scaler
        model.lambda_ = float(meta["lambda"])
        model.noise_source_ = float(meta["noise_source"])
        model.noise_target_ = float(meta["noise_target"])
        model.n_source_ = int(meta["n_source"])
        model.X_source_ = arrays["X_source"]
        model.X_target_ = arrays["X_target"]
        model.alpha_ = arrays["alpha"]
        if params["landmarks"] == "exact":
            model.L_ = arrays["L"]
            model.jitter_ = float(meta["jitter"])
            model.lml_ = float(meta["lml"])
        else:
            model.Z_ = arrays["Z"]
            model.d_inv_ = arrays["d_inv"]
            model.M_factor_ = (arrays["M"], meta["m_lower"])
            model.landmark_idx_ = arrays["landmark_idx"]
        if "lambda_grid" in arrays:
            model.lambda_estimate_ = LambdaEstimate(
                model.lambda_, model.noise_source_, model.noise_target_,
                arrays["lambda_grid"], arrays["lambda_lml"])
        else:
            model.lambda_estimate_ = None
    else:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    return model


def model_kind(path):
    """Peek at a model file's kind without loading the arrays."""
    kind, _, _ = _read(path)
    return kind
