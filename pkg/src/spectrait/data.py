"""Datasets of labeled leaf spectra: CSV ingestion, splitting, standardization.

A dataset couples an n x d reflectance matrix on a fixed wavelength grid with
one scalar trait value per sample (chlorophyll content in ug/cm2 for the
default task) and a domain tag distinguishing source from target data.
Datasets are immutable after construction and safe to share across threads.
"""

import csv
import enum
from dataclasses import dataclass, replace

import numpy as np

from .validation import as_float_matrix, as_float_vector

WAVELENGTH_MIN_NM = 400.0
WAVELENGTH_MAX_NM = 2500.0

# Sensor noise can push reflectance slightly outside the physical [0, 1].
REFLECTANCE_MIN = -0.05
REFLECTANCE_MAX = 1.05


class Domain(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class WavelengthGrid:
    """Strictly increasing band centers in nm within the optical domain."""

    wavelengths: np.ndarray

    def __post_init__(self):
        w = as_float_vector(np.asarray(self.wavelengths), "wavelengths")
        if w.size < 1:
            raise ValueError("grid must contain at least one band")
        if np.any(np.diff(w) <= 0):
            raise ValueError("non-increasing grid")
        if w[0] < WAVELENGTH_MIN_NM or w[-1] > WAVELENGTH_MAX_NM:
            raise ValueError(
                f"wavelengths must lie within [{WAVELENGTH_MIN_NM:g}, "
                f"{WAVELENGTH_MAX_NM:g}] nm"
            )
        object.__setattr__(self, "wavelengths", _readonly(w))

    def __len__(self):
        return self.wavelengths.size

    def __eq__(self, other):
        if not isinstance(other, WavelengthGrid):
            return NotImplemented
        return np.array_equal(self.wavelengths, other.wavelengths)

    def __hash__(self):
        return hash(self.wavelengths.tobytes())


@dataclass(frozen=True)
class LabeledDataset:
    """Reflectance spectra with scalar trait labels and a domain tag."""

    grid: WavelengthGrid
    X: np.ndarray
    y: np.ndarray
    domain: Domain
    standardized: bool = False

    def __post_init__(self):
        X = as_float_matrix(self.X, "X")
        y = as_float_vector(self.y, "y")
        if X.shape[0] != y.size:
            raise ValueError(
                f"X has {X.shape[0]} rows but y has {y.size} entries"
            )
        if X.shape[1] != len(self.grid):
            raise ValueError(
                f"X has {X.shape[1]} columns but the grid has "
                f"{len(self.grid)} bands"
            )
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "y", _readonly(y))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def with_domain(self, domain):
        """Copy of this dataset carrying a different domain tag."""
        return replace(self, domain=domain)

    def take(self, indices):
        """Row subset (keeps grid, domain and standardized flag)."""
        idx = np.asarray(indices, dtype=np.intp)
        return replace(self, X=self.X[idx], y=self.y[idx])


@dataclass(frozen=True)
class Scaler:
    """Per-band and label location/scale captured from a training set.

    Uses the population standard deviation (divide by n). Bands or labels
    with zero variance record a standard deviation of 1 so that flat
    simulated bands standardize to zero instead of erroring.
    """

    band_mean: np.ndarray
    band_std: np.ndarray
    label_mean: float
    label_std: float

    def __post_init__(self):
        object.__setattr__(self, "band_mean", _readonly(self.band_mean))
        object.__setattr__(self, "band_std", _readonly(self.band_std))

    @classmethod
    def fit(cls, X, y):
        X = as_float_matrix(X, "X")
        y = as_float_vector(y, "y")
        if X.shape[0] == 0:
            raise ValueError("cannot fit a scaler on an empty dataset")
        band_std = X.std(axis=0)
        band_std = np.where(band_std > 0.0, band_std, 1.0)
        label_std = float(y.std())
        if label_std <= 0.0:
            label_std = 1.0
        return cls(X.mean(axis=0), band_std, float(y.mean()), label_std)

    @property
    def d(self):
        return self.band_mean.size

    def transform(self, X):
        X = as_float_matrix(X, "X")
        if X.shape[1] != self.d:
            raise ValueError(f"X has {X.shape[1]} columns, scaler expects {self.d}")
        return (X - self.band_mean) / self.band_std

    def inverse_transform(self, X):
        X = as_float_matrix(X, "X")
        if X.shape[1] != self.d:
            raise ValueError(f"X has {X.shape[1]} columns, scaler expects {self.d}")
        return X * self.band_std + self.band_mean

    def transform_labels(self, y):
        return (as_float_vector(y, "y") - self.label_mean) / self.label_std

    def inverse_labels(self, y):
        return as_float_vector(y, "y") * self.label_std + self.label_mean


def fit_scaler(train):
    """Capture per-band and label statistics from a training dataset."""
    return Scaler.fit(train.X, train.y)


def apply_scaler(scaler, ds, transform_labels=True):
    """Standardize a dataset's spectra (and optionally labels)."""
    y = scaler.transform_labels(ds.y) if transform_labels else ds.y
    return LabeledDataset(ds.grid, scaler.transform(ds.X), y, ds.domain,
                          standardized=True)


def invert_scaler(scaler, ds, transform_labels=True):
    """Undo :func:`apply_scaler`; round-trips to within 1e-12."""
    y = scaler.inverse_labels(ds.y) if transform_labels else ds.y
    return LabeledDataset(ds.grid, scaler.inverse_transform(ds.X), y, ds.domain,
                          standardized=False)


def split(ds, fraction, seed):
    """Deterministic seeded shuffle split into (train, test).

    The train set has exactly ``round(fraction * n)`` rows. The same seed
    and fraction always reproduce the identical index sets. Raises
    ``ValueError`` when the fraction would leave either side empty.
    """
    n = ds.n
    if n < 2:
        raise ValueError("need at least 2 samples to split")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n_train = int(round(fraction * n))
    if n_train < 1 or n_train > n - 1:
        raise ValueError(
            f"fraction {fraction} yields an empty train or test set for n={n}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return ds.take(train_idx), ds.take(test_idx)


def _parse_header(cells, trait=None):
    """Locate band columns (numeric headers, in nm) and the trait column."""
    band_cols, band_nm, trait_cols = [], [], []
    for j, cell in enumerate(cells):
        name = cell.strip()
        try:
            band_nm.append(float(name))
            band_cols.append(j)
        except ValueError:
            trait_cols.append((j, name))
    if trait is not None:
        matches = [j for j, name in trait_cols if name == trait]
        if not matches:
            raise ValueError(f"missing trait column '{trait}' in header")
        if len(trait_cols) > 1:
            extra = [name for _, name in trait_cols if name != trait]
            raise ValueError(
                f"unexpected non-band columns in header: {extra}"
            )
        trait_col = matches[0]
        trait_name = trait
    else:
        if len(trait_cols) == 0:
            raise ValueError("missing trait column: header has only band columns")
        if len(trait_cols) > 1:
            names = [name for _, name in trait_cols]
            raise ValueError(
                f"expected exactly one trait column, found {names}"
            )
        trait_col, trait_name = trait_cols[0]
    if not band_cols:
        raise ValueError("header contains no band columns")
    return band_cols, np.asarray(band_nm), trait_col, trait_name


def load_csv(path, domain=Domain.TARGET, trait=None):
    """Load a labeled spectra CSV.

    The header row names band columns by wavelength in nm plus one trait
    column (for example ``400,410,...,2500,chl``). The domain tag comes
    from the caller, not the file. Errors carry the offending row and
    column so malformed exports are easy to locate.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        band_cols, band_nm, trait_col, trait_name = _parse_header(header, trait)
        grid = WavelengthGrid(band_nm)  # raises "non-increasing grid" if unsorted

        rows, labels = [], []
        for i, cells in enumerate(reader, start=2):  # 1-based incl. header
            if not cells:
                continue
            if len(cells) != len(header):
                raise ValueError(
                    f"{path}: row {i} has {len(cells)} cells, expected {len(header)}"
                )
            spectrum = np.empty(len(band_cols))
            for k, j in enumerate(band_cols):
                try:
                    v = float(cells[j])
                except ValueError:
                    raise ValueError(
                        f"{path}: row {i}, column '{header[j].strip()}': "
                        f"non-numeric value {cells[j]!r}"
                    ) from None
                if not np.isfinite(v):
                    raise ValueError(
                        f"{path}: row {i}, column '{header[j].strip()}': "
                        f"non-finite value"
                    )
                if v < REFLECTANCE_MIN or v > REFLECTANCE_MAX:
                    raise ValueError(
                        f"{path}: row {i}, column '{header[j].strip()}': "
                        f"reflectance {v!r} outside [{REFLECTANCE_MIN}, "
                        f"{REFLECTANCE_MAX}]"
                    )
                spectrum[k] = v
            try:
                label = float(cells[trait_col])
            except ValueError:
                raise ValueError(
                    f"{path}: row {i}, column '{trait_name}': "
                    f"non-numeric value {cells[trait_col]!r}"
                ) from None
            if not np.isfinite(label):
                raise ValueError(
                    f"{path}: row {i}, column '{trait_name}': non-finite value"
                )
            rows.append(spectrum)
            labels.append(label)

    if not rows:
        raise ValueError(f"{path}: no data rows")
    X = np.vstack(rows)
    y = np.asarray(labels)
    return LabeledDataset(grid, X, y, domain)


def save_csv(ds, path, trait="chl"):
    """Write a raw (unstandardized) dataset in the band-columns-then-trait
    CSV layout accepted by :func:`load_csv`.

    Values are written with shortest round-trip formatting so a
    load/save cycle is numerically exact.
    """
    if ds.standardized:
        raise ValueError("refusing to save a standardized dataset as reflectance CSV")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([_format_number(w) for w in ds.grid.wavelengths] + [trait])
        for i in range(ds.n):
            writer.writerow(
                [_format_number(v) for v in ds.X[i]] + [_format_number(ds.y[i])]
            )


def _format_number(v):
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)
