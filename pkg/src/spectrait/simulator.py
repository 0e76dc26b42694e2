"""Synthetic leaf reflectance generator used as the transfer source task.

The model is a smooth baseline curve attenuated by Beer-Lambert absorption:

    R(lambda) = baseline(lambda) * exp(-g * sum_a c_a * k_a(lambda) / s_a) + noise

where each absorber ``a`` contributes a specific-absorption curve
``k_a(lambda)`` built from Gaussian bands, ``c_a`` is its concentration
drawn uniformly per sample, ``s_a`` a fixed normalization, and ``g`` a
scalar optical-path factor standing in for viewing geometry. Chlorophyll
is mandatory and provides the regression label. The generator is fully
deterministic per seed and per row, so samples are reproducible in any
evaluation order.

This is deliberately not a radiative-transfer model. It only needs a
chlorophyll-monotone spectral signature plus a tunable geometry/baseline
shift so that source and target tasks can be made more or less related.
"""

import sys
from dataclasses import dataclass, replace

import numpy as np

from .data import Domain, LabeledDataset, WavelengthGrid

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

CHLOROPHYLL = "chlorophyll"

GEOMETRY_MIN = 0.0  # exclusive
GEOMETRY_MAX = 2.0
NOISE_STD_MAX = 0.1


@dataclass(frozen=True)
class AbsorberSpec:
    """Gaussian-band absorption spectrum with a concentration range.

    Concentrations are in ug/cm2 for pigments and g/cm2 for water; the
    generator normalizes by the range maximum, so only relative depths
    matter for the spectra.
    """

    name: str
    centers: tuple
    widths: tuple
    amplitudes: tuple
    conc_range: tuple

    def __post_init__(self):
        centers = tuple(float(c) for c in self.centers)
        widths = tuple(float(w) for w in self.widths)
        amps = tuple(float(a) for a in self.amplitudes)
        if not (len(centers) == len(widths) == len(amps)):
            raise ValueError(
                f"absorber '{self.name}': centers/widths/amplitudes lengths differ"
            )
        if any(w <= 0 for w in widths):
            raise ValueError(f"absorber '{self.name}': band widths must be > 0")
        if any(a <= 0 for a in amps):
            raise ValueError(f"absorber '{self.name}': band amplitudes must be > 0")
        low, high = (float(v) for v in self.conc_range)
        if not low < high:
            raise ValueError(f"absorber '{self.name}': concentration range low >= high")
        if low < 0:
            raise ValueError(f"absorber '{self.name}': concentrations must be >= 0")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "conc_range", (low, high))

    @property
    def conc_scale(self):
        """Normalization keeping exponents in a numerically benign range."""
        return self.conc_range[1]


@dataclass(frozen=True)
class SimulatorConfig:
    grid: WavelengthGrid
    absorbers: tuple
    plateau: float
    shoulder_nm: float
    shoulder_steepness: float
    geometry: float
    noise_std: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "absorbers", tuple(self.absorbers))
        names = [a.name for a in self.absorbers]
        if CHLOROPHYLL not in names:
            raise ValueError("simulator requires a 'chlorophyll' absorber (the label)")
        if len(set(names)) != len(names):
            raise ValueError("absorber names must be unique")
        if not 0.0 < self.plateau <= 1.0:
            raise ValueError("baseline plateau must lie in (0, 1]")
        if self.shoulder_steepness <= 0:
            raise ValueError("shoulder steepness must be > 0")
        if not GEOMETRY_MIN < self.geometry <= GEOMETRY_MAX:
            raise ValueError(
                f"geometry factor must lie in ({GEOMETRY_MIN:g}, {GEOMETRY_MAX:g}]"
            )
        if not 0.0 <= self.noise_std < NOISE_STD_MAX:
            raise ValueError(f"noise std must lie in [0, {NOISE_STD_MAX:g})")
        lo, hi = self.grid.wavelengths[0], self.grid.wavelengths[-1]
        for a in self.absorbers:
            for c in a.centers:
                if not lo <= c <= hi:
                    raise ValueError(
                        f"absorber '{a.name}' band center {c:g} nm outside grid "
                        f"[{lo:g}, {hi:g}]"
                    )

    @property
    def chlorophyll(self):
        for a in self.absorbers:
            if a.name == CHLOROPHYLL:
                return a
        raise AssertionError("unreachable: validated in __post_init__")


def specific_absorption(spec, grid):
    """Evaluate an absorber's Gaussian-band absorption on a grid.

    k(lambda) = sum over bands of amplitude * exp(-(lambda - center)^2 / (2 width^2))
    """
    lam = grid.wavelengths
    k = np.zeros(len(grid))
    for center, width, amp in zip(spec.centers, spec.widths, spec.amplitudes):
        k += amp * np.exp(-((lam - center) ** 2) / (2.0 * width**2))
    return k


def baseline_curve(config):
    """Logistic baseline rising to the plateau past the shoulder wavelength."""
    lam = config.grid.wavelengths
    z = (lam - config.shoulder_nm) / config.shoulder_steepness
    return config.plateau / (1.0 + np.exp(-z))


def clean_reflectance(config, concentrations):
    """Noise-free reflectance for given per-absorber concentrations.

    ``concentrations`` maps absorber name to value. This is the
    deterministic core of :func:`generate`, exposed so monotonicity in
    any concentration can be checked by direct evaluation.
    """
    optical_depth = np.zeros(len(config.grid))
    for a in config.absorbers:
        k = specific_absorption(a, config.grid)
        optical_depth += (concentrations[a.name] / a.conc_scale) * k
    r = baseline_curve(config) * np.exp(-config.geometry * optical_depth)
    return np.clip(r, 0.0, 1.0)


def generate(config, n, domain=Domain.SOURCE):
    """Draw ``n`` labeled samples from the simulator.

    Each row consumes an independent seeded substream spawned from the
    config seed, so the output is byte-identical across calls and does
    not depend on generation order. The label is the chlorophyll
    concentration.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d = len(config.grid)
    base = baseline_curve(config)
    curves = [(a, specific_absorption(a, config.grid)) for a in config.absorbers]

    X = np.empty((n, d))
    y = np.empty(n)
    streams = np.random.SeedSequence(config.seed).spawn(n)
    for i in range(n):
        rng = np.random.default_rng(streams[i])
        optical_depth = np.zeros(d)
        for a, k in curves:
            low, high = a.conc_range
            c = rng.uniform(low, high)
            optical_depth += (c / a.conc_scale) * k
            if a.name == CHLOROPHYLL:
                y[i] = c
        r = base * np.exp(-config.geometry * optical_depth)
        if config.noise_std > 0:
            r = r + rng.normal(0.0, config.noise_std, size=d)
        X[i] = np.clip(r, 0.0, 1.0)
    return LabeledDataset(config.grid, X, y, domain)


def replace_seed(config, seed):
    """Same simulator with a different stream of samples."""
    return replace(config, seed=int(seed))


def shift_domain(config, geometry_delta, baseline_delta):
    """Shifted sibling of a config: geometry and plateau moved by deltas.

    Used to manufacture a target task at a controlled distance from the
    source. Raises if the shift leaves the valid parameter ranges.
    """
    return replace(
        config,
        geometry=config.geometry + geometry_delta,
        plateau=config.plateau + baseline_delta,
    )


def default_config(seed=0):
    """Built-in config mirroring configs/simulator_default.toml."""
    grid = WavelengthGrid(np.arange(400.0, 2500.0 + 1, 10.0))
    absorbers = (
        AbsorberSpec(
            name=CHLOROPHYLL,
            centers=(430.0, 460.0, 640.0, 660.0),
            widths=(20.0, 30.0, 40.0, 25.0),
            amplitudes=(0.8, 0.6, 0.5, 1.0),
            conc_range=(10.0, 80.0),
        ),
        AbsorberSpec(
            name="water",
            centers=(1450.0, 1940.0),
            widths=(50.0, 60.0),
            amplitudes=(0.9, 1.1),
            conc_range=(0.001, 0.03),
        ),
    )
    return SimulatorConfig(
        grid=grid,
        absorbers=absorbers,
        plateau=0.55,
        shoulder_nm=710.0,
        shoulder_steepness=45.0,
        geometry=1.0,
        noise_std=0.01,
        seed=seed,
    )


def config_from_dict(doc):
    """Build a SimulatorConfig from a parsed TOML document."""
    grid_doc = doc.get("grid", {})
    if "wavelengths" in grid_doc:
        grid = WavelengthGrid(np.asarray(grid_doc["wavelengths"], dtype=float))
    else:
        try:
            start, stop, step = (
                float(grid_doc["start"]),
                float(grid_doc["stop"]),
                float(grid_doc["step"]),
            )
        except KeyError as e:
            raise ValueError(
                "grid needs either 'wavelengths' or 'start'/'stop'/'step'"
            ) from e
        grid = WavelengthGrid(np.arange(start, stop + step / 2, step))

    absorbers = []
    for a in doc.get("absorbers", []):
        absorbers.append(
            AbsorberSpec(
                name=a["name"],
                centers=a["centers"],
                widths=a["widths"],
                amplitudes=a["amplitudes"],
                conc_range=tuple(a["concentration_range"]),
            )
        )
    baseline = doc.get("baseline", {})
    return SimulatorConfig(
        grid=grid,
        absorbers=tuple(absorbers),
        plateau=float(baseline.get("plateau", 0.55)),
        shoulder_nm=float(baseline.get("shoulder_nm", 710.0)),
        shoulder_steepness=float(baseline.get("steepness", 45.0)),
        geometry=float(doc.get("geometry", 1.0)),
        noise_std=float(doc.get("noise_std", 0.0)),
        seed=int(doc.get("seed", 0)),
    )


def load_config(path):
    """Parse a simulator config TOML file."""
    with open(path, "rb") as fh:
        return config_from_dict(_toml.load(fh))
