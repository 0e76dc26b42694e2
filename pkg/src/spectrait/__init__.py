"""Leaf trait regression from hyperspectral reflectance.

Baselines (PLSR, finite-width MLP with pretrain/fine-tune) and Gaussian
process regression under the infinite-width network kernel, plus an
adaptive transfer-kernel GP that learns how related a source task is to
the target before borrowing its data.
"""

from .data import (
    Domain,
    LabeledDataset,
    Scaler,
    WavelengthGrid,
    apply_scaler,
    fit_scaler,
    invert_scaler,
    load_csv,
    save_csv,
    split,
)
from .metrics import MetricReport, evaluate, r2, rmse
from .mlp import MlpRegressor, fine_tune
from .nngp import (
    NngpGpRegressor,
    NngpParams,
    kernel_diag,
    kernel_entry,
    kernel_matrix,
    log_marginal_likelihood,
    select_noise,
)
from .plsr import PlsrRegressor, select_components
from .simulator import (
    AbsorberSpec,
    SimulatorConfig,
    generate,
    shift_domain,
    specific_absorption,
)
from .transfer import (
    LambdaEstimate,
    TransferGpRegressor,
    assemble_transfer_kernel,
    estimate_lambda,
)

__version__ = "0.1.0"

__all__ = [
    "AbsorberSpec",
    "Domain",
    "LabeledDataset",
    "LambdaEstimate",
    "MetricReport",
    "MlpRegressor",
    "NngpGpRegressor",
    "NngpParams",
    "PlsrRegressor",
    "Scaler",
    "SimulatorConfig",
    "TransferGpRegressor",
    "WavelengthGrid",
    "apply_scaler",
    "assemble_transfer_kernel",
    "estimate_lambda",
    "evaluate",
    "fine_tune",
    "fit_scaler",
    "generate",
    "invert_scaler",
    "kernel_diag",
    "kernel_entry",
    "kernel_matrix",
    "load_csv",
    "log_marginal_likelihood",
    "r2",
    "rmse",
    "save_csv",
    "select_components",
    "select_noise",
    "shift_domain",
    "specific_absorption",
    "split",
]
