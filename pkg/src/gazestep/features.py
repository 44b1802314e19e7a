"""Fixed-length root-density embeddings of fitted GPDs.

Every density is sampled on its own central 90% window (5th to 95th
percentile), re-interpolated onto one shared 200-point grid spanning the
union of all windows, zero outside its own window, then square-rooted.
Euclidean distances between the resulting vectors, scaled by the square
root of the grid spacing, approximate the L2 distance between root
densities, i.e. Hellinger geometry on the fitted distributions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gpd import GpdParams, pdf, quantile
from .serialize import atomic_write_text, format_float

GRID_SIZE = 200
WINDOW_SAMPLES = 100
WINDOW_LO = 0.05
WINDOW_HI = 0.95

FEATURES_SCHEMA = "gazestep.features"
FEATURES_VERSION = 1


@dataclass
class FeatureVector:
    values: np.ndarray  # (GRID_SIZE,) square roots of the embedded density
    grid_lo: float
    grid_hi: float
    source: tuple = (-1, "")  # (trial_index, observer_id)


@dataclass(frozen=True)
class FeatureSelection:
    """Grid indices in descending variance order."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError("selection indices must be distinct")
        if any(i < 0 or i >= GRID_SIZE for i in idx):
            raise ValueError(f"selection indices must lie in [0, {GRID_SIZE})")
        object.__setattr__(self, "indices", idx)


def common_grid(params_set) -> tuple[float, float, np.ndarray]:
    """Shared grid spanning all densities' central windows.

    grid_lo is the smallest 5th percentile, grid_hi the largest 95th, with
    GRID_SIZE equally spaced points inclusive of both endpoints.
    """
    params_set = list(params_set)
    if not params_set:
        raise ValueError("need at least one parameter set")
    lo = min(quantile(WINDOW_LO, p) for p in params_set)
    hi = max(quantile(WINDOW_HI, p) for p in params_set)
    return lo, hi, np.linspace(lo, hi, GRID_SIZE)


def embed_pdf(p: GpdParams, grid: np.ndarray, source=(-1, "")) -> FeatureVector:
    """Root-density vector of one GPD on the shared grid.

    The density is sampled at WINDOW_SAMPLES equally spaced points on its own
    central window and linearly interpolated onto the grid; grid points
    outside the window get zero.
    """
    grid = np.asarray(grid, dtype=float)
    w_lo = quantile(WINDOW_LO, p)
    w_hi = quantile(WINDOW_HI, p)
    xs = np.linspace(w_lo, w_hi, WINDOW_SAMPLES)
    ys = pdf(xs, p)
    # snap within float noise of the window edges so a grid point that
    # coincides with an edge up to rounding is not zeroed out
    tol = 1e-9 * (w_hi - w_lo)
    inside = (grid >= w_lo - tol) & (grid <= w_hi + tol)
    embedded = np.zeros_like(grid)
    embedded[inside] = np.interp(np.clip(grid[inside], w_lo, w_hi), xs, ys)
    return FeatureVector(
        values=np.sqrt(embedded),
        grid_lo=float(grid[0]),
        grid_hi=float(grid[-1]),
        source=source,
    )


def select_top_variance(vectors, k: int) -> FeatureSelection:
    """Indices of the K highest-variance grid positions, ties to lower index."""
    vectors = list(vectors)
    if len(vectors) < 2:
        raise ValueError("variance selection needs at least 2 vectors")
    if not 1 <= k <= GRID_SIZE:
        raise ValueError(f"K must lie in [1, {GRID_SIZE}]")
    matrix = np.stack([v.values for v in vectors])
    variances = matrix.var(axis=0, ddof=1)
    order = np.argsort(-variances, kind="stable")
    return FeatureSelection(indices=tuple(int(i) for i in order[:k]))


def project(vector: FeatureVector, sel: FeatureSelection) -> np.ndarray:
    """Gather the selected components in selection order."""
    if any(i >= len(vector.values) for i in sel.indices):
        raise ValueError("selection index out of range for this vector")
    return vector.values[list(sel.indices)]


def write_feature_matrix(path, vectors, grid_lo: float, grid_hi: float, config: dict) -> None:
    """Feature matrix CSV: grid metadata comments, then one row per vector."""
    lines = [
        f"# schema={FEATURES_SCHEMA} version={FEATURES_VERSION}",
        f"# config={_kv(config)}",
        f"# grid_lo={format_float(grid_lo)}",
        f"# grid_hi={format_float(grid_hi)}",
        "trial,observer," + ",".join(f"v{i:03d}" for i in range(GRID_SIZE)),
    ]
    for v in vectors:
        trial, obs = v.source
        row = ",".join(format_float(x) for x in v.values)
        lines.append(f"{trial},{obs},{row}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_feature_matrix(path) -> tuple[dict, list[FeatureVector]]:
    from pathlib import Path

    meta = {}
    vectors = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or FEATURES_SCHEMA not in lines[0]:
        raise ValueError(f"{path}: not a feature matrix file; run the features command")
    body_started = False
    for line in lines:
        if line.startswith("#"):
            text = line.lstrip("# ")
            if "=" in text and not text.startswith("schema"):
                key, _, val = text.partition("=")
                meta[key.strip()] = val.strip()
            continue
        if not body_started:
            body_started = True  # header row
            continue
        parts = line.split(",")
        vectors.append(
            FeatureVector(
                values=np.array([float(x) for x in parts[2:]]),
                grid_lo=float(meta["grid_lo"]),
                grid_hi=float(meta["grid_hi"]),
                source=(int(parts[0]), parts[1]),
            )
        )
    return meta, vectors


def _kv(d: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in sorted(d.items()))
