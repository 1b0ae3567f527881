"""Seeded simulation of the driving Wiener increments and fBm synthesis.

Increments come from numpy's counter-based Philox generator keyed through
SeedSequence, so a path is a pure function of (seed, grid, d): regenerating it
never depends on what else has been drawn, and Monte-Carlo batches derive
per-sample streams by spawning.  Refinement splits each cell increment with
independent bridge noise, so a coarse path and its refinements are coupled
realisations of the same Wiener path.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .algebra import Grid
from .kernel import CellAveragedKernel

__all__ = [
    "WienerPath",
    "FbmPath",
    "sample_wiener",
    "sample_wiener_batch",
    "refine_wiener",
    "refine_increments",
    "synthesize_fbm",
    "fbm_increment",
    "wiener_to_csv",
    "wiener_from_csv",
]

_BRIDGE_TAG = 0xB51D6E


def _generator(entropy) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class WienerPath:
    """Increments of a d-dimensional Wiener path over the grid cells.

    ``increments[m, i]`` is the increment over cell m of component i+1
    (components are labelled 1..d in the public API), i.i.d. N(0, delta).
    """

    grid: Grid
    d: int
    seed: int
    increments: np.ndarray

    def __post_init__(self):
        if self.increments.shape != (self.grid.N, self.d):
            raise ValueError("increments must have shape (N, d)")


@dataclass(frozen=True)
class FbmPath:
    """Synthesised fBm values per grid point and component; starts at zero."""

    grid: Grid
    values: np.ndarray  # (N+1, d)


def sample_wiener(grid: Grid, d: int, seed: int) -> WienerPath:
    """Deterministic Wiener increments for (seed, grid, d)."""
    if d < 1:
        raise ValueError("need at least one component")
    rng = _generator(seed)
    inc = rng.standard_normal((grid.N, d)) * np.sqrt(grid.delta)
    return WienerPath(grid=grid, d=d, seed=seed, increments=inc)


def sample_wiener_batch(grid: Grid, d: int, seed: int, n_samples: int) -> np.ndarray:
    """Increments of n_samples independent paths, shape (N, d, n_samples).

    Per-sample streams are spawned from the root seed, so sample i is the same
    no matter how many samples are requested or in which chunks.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    out = np.empty((grid.N, d, n_samples))
    root = np.sqrt(grid.delta)
    children = np.random.SeedSequence(seed).spawn(n_samples)
    for i, child in enumerate(children):
        rng = np.random.Generator(np.random.Philox(child))
        out[:, :, i] = rng.standard_normal((grid.N, d)) * root
    return out


def refine_increments(increments: np.ndarray, grid: Grid, seed: int) -> np.ndarray:
    """Split each cell increment in two with fresh bridge noise.

    The two halves sum to the parent increment exactly and are independent
    N(0, delta/2); the bridge stream is keyed by (seed, N) so a refinement
    ladder is reproducible.  Works on (N, d) and batched (N, d, S) arrays.
    """
    n = grid.N
    half = increments / 2.0
    fine = np.empty((2 * n,) + increments.shape[1:])
    if increments.ndim == 3:
        s = increments.shape[2]
        children = np.random.SeedSequence([seed, _BRIDGE_TAG, n]).spawn(s)
        xi = np.empty_like(increments)
        for i, child in enumerate(children):
            rng = np.random.Generator(np.random.Philox(child))
            xi[:, :, i] = rng.standard_normal(increments.shape[:2])
        xi *= np.sqrt(grid.delta / 4.0)
    else:
        rng = _generator([seed, _BRIDGE_TAG, n])
        xi = rng.standard_normal(increments.shape) * np.sqrt(grid.delta / 4.0)
    fine[0::2] = half + xi
    fine[1::2] = half - xi
    return fine


def refine_wiener(path: WienerPath) -> WienerPath:
    """Coupled refinement of a path onto the doubled grid."""
    fine_grid = path.grid.refine()
    fine = refine_increments(path.increments, path.grid, path.seed)
    return WienerPath(grid=fine_grid, d=path.d, seed=path.seed, increments=fine)


def synthesize_fbm(path: WienerPath, table: CellAveragedKernel) -> FbmPath:
    """B_{t_k}(i) = sum_{m<k} Kbar(t_k, m) * dW_m(i) through the kernel table."""
    if table.grid.N != path.grid.N or abs(table.grid.T - path.grid.T) > 1e-12:
        raise ValueError("kernel table and path live on different grids")
    values = table.table @ path.increments
    return FbmPath(grid=path.grid, values=values)


def fbm_increment(table: CellAveragedKernel, s_idx: int, t_idx: int, increments: np.ndarray):
    """delta B over a window, directly from the kernel-row difference.

    Accepts (N, d) or batched (N, d, S) increments; returns (d,) or (d, S).
    """
    row = table.delta_row(s_idx, t_idx)
    return np.einsum("m,md...->d...", row, increments)


def wiener_to_csv(path: WienerPath, filename: str):
    """Columns: cell index, component (1-based), increment."""
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "component", "increment"])
        for m in range(path.grid.N):
            for i in range(path.d):
                w.writerow([m, i + 1, f"{path.increments[m, i]:.17g}"])


def wiener_from_csv(filename: str, grid: Grid, d: int, seed: int = -1) -> WienerPath:
    inc = np.zeros((grid.N, d))
    with open(filename, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:3] != ["cell", "component", "increment"]:
            raise ValueError("not a Wiener-increment CSV")
        for row in r:
            inc[int(row[0]), int(row[1]) - 1] = float(row[2])
    return WienerPath(grid=grid, d=d, seed=seed, increments=inc)
