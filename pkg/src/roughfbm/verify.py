"""Checks of the three rough-path properties on computed stacks.

The multiplicative (Chen) and geometric (shuffle) identities hold exactly for
the PLPC discretisation, so they are asserted per sample at rounding-level
relative tolerances.  Regularity is statistical: moment-scaling slopes are
fitted over window sizes and Hölder/GRR norms are tracked under coupled grid
refinement, with a supercritical-exponent probe as negative control.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import Grid, Increment2, grr_estimate, holder_norm2
from .combinat import shuffles
from .iterated import stack_values_batch
from .kernel import CellAveragedKernel, VolterraKernel
from .wiener import refine_increments, sample_wiener_batch

__all__ = [
    "DefectReport",
    "ScalingReport",
    "chen_defect",
    "chen_defect_batch",
    "shuffle_defect",
    "shuffle_defect_batch",
    "scaling_study",
    "holder_study",
    "level2_symmetry_split",
]

DEFECT_FLOOR = 1e-30


@dataclass(frozen=True)
class DefectReport:
    """Identity defect relative to the largest participating term."""

    identity: str
    windows: tuple
    index_tuples: tuple
    defect: float
    scale: float
    relative: float
    passed: bool
    floor: float = DEFECT_FLOOR


@dataclass(frozen=True)
class ScalingReport:
    """Log-log moment fit of E|B^n|^2 against the window size."""

    level: int
    hurst: float
    window_sizes: tuple
    samples: int
    moments: tuple
    std_errors: tuple
    slope: float
    half_width: float
    expected_slope: float
    passed: bool


def _relative(defect, scale, floor=DEFECT_FLOOR):
    return np.abs(defect) / np.maximum(scale, floor)


def _value(stack, n, si, ti, idx):
    """Accessor working for both RoughPathStack and raw batch dicts."""
    if hasattr(stack, "value"):
        return stack.value(n, (si, ti), idx)
    arr = stack[(n, si, ti)]
    return arr[tuple(i - 1 for i in idx)]


def chen_defect_batch(stack, s_idx, u_idx, t_idx, index_tuple):
    """Chen defect and reference scale; values may carry a sample axis.

    defect = B^n_{st} - B^n_{su} - B^n_{ut}
             - sum_{n1=1}^{n-1} B^{n1}_{su} (x) B^{n-n1}_{ut}
    """
    idx = tuple(index_tuple)
    n = len(idx)
    b_st = _value(stack, n, s_idx, t_idx, idx)
    b_su = _value(stack, n, s_idx, u_idx, idx)
    b_ut = _value(stack, n, u_idx, t_idx, idx)
    defect = b_st - b_su - b_ut
    scale = np.maximum(np.abs(b_st), np.maximum(np.abs(b_su), np.abs(b_ut)))
    for n1 in range(1, n):
        cross = _value(stack, n1, s_idx, u_idx, idx[:n1]) * _value(
            stack, n - n1, u_idx, t_idx, idx[n1:]
        )
        defect = defect - cross
        scale = np.maximum(scale, np.abs(cross))
    return defect, scale


def chen_defect(stack, s, u, t, index_tuple, tol: float = 1e-9) -> DefectReport:
    """Per-sample Chen identity check on one (s, u, t) triple."""
    grid = stack.grid
    si, ui, ti = grid.index_of(s), grid.index_of(u), grid.index_of(t)
    if not (si <= ui <= ti):
        raise ValueError("need s <= u <= t")
    defect, scale = chen_defect_batch(stack, si, ui, ti, index_tuple)
    rel = float(_relative(defect, scale))
    return DefectReport(
        identity="chen",
        windows=((s, u), (u, t), (s, t)),
        index_tuples=(tuple(index_tuple),),
        defect=float(defect),
        scale=float(scale),
        relative=rel,
        passed=rel <= tol,
    )


def shuffle_defect_batch(stack, s_idx, t_idx, i_tuple, j_tuple):
    """Shuffle defect B^n(i) B^m(j) - sum over interleavings of B^{n+m}."""
    i_tuple, j_tuple = tuple(i_tuple), tuple(j_tuple)
    n, m = len(i_tuple), len(j_tuple)
    prod = _value(stack, n, s_idx, t_idx, i_tuple) * _value(stack, m, s_idx, t_idx, j_tuple)
    defect = np.array(prod, dtype=float, copy=True)
    scale = np.abs(prod)
    for word in shuffles(i_tuple, j_tuple):
        term = _value(stack, n + m, s_idx, t_idx, word)
        defect = defect - term
        scale = np.maximum(scale, np.abs(term))
    return defect, scale


def shuffle_defect(stack, s, t, i_tuple, j_tuple, tol: float = 1e-9) -> DefectReport:
    """Per-sample geometric (shuffle) identity check on one window."""
    grid = stack.grid
    si, ti = grid.index_of(s), grid.index_of(t)
    defect, scale = shuffle_defect_batch(stack, si, ti, i_tuple, j_tuple)
    rel = float(_relative(defect, scale))
    return DefectReport(
        identity="shuffle",
        windows=((s, t),),
        index_tuples=(tuple(i_tuple), tuple(j_tuple)),
        defect=float(defect),
        scale=float(scale),
        relative=rel,
        passed=rel <= tol,
    )


def level2_symmetry_split(stack, s_idx, t_idx):
    """Symmetric-part defect and antisymmetric part of level 2.

    Returns (sym_defect, antisym) where sym_defect = sym(B^2) - B^1 (x) B^1 / 2
    (exactly zero for the PLPC construction) and antisym is the signed-area
    analogue, whose Monte-Carlo mean should vanish.
    """
    arr2 = stack[(2, s_idx, t_idx)] if not hasattr(stack, "data") else stack.data[(2, s_idx, t_idx)]
    arr1 = stack[(1, s_idx, t_idx)] if not hasattr(stack, "data") else stack.data[(1, s_idx, t_idx)]
    sym = 0.5 * (arr2 + np.swapaxes(arr2, 0, 1))
    anti = 0.5 * (arr2 - np.swapaxes(arr2, 0, 1))
    outer = 0.5 * np.einsum("i...,j...->ij...", arr1, arr1)
    return sym - outer, anti


# -- moment scaling -------------------------------------------------------------


def _weighted_slope(x, y, w):
    """Weighted least-squares slope of y on x with 1.96-sigma half width."""
    x, y, w = map(np.asarray, (x, y, w))
    xbar = np.sum(w * x) / np.sum(w)
    ybar = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xbar) ** 2)
    slope = np.sum(w * (x - xbar) * (y - ybar)) / sxx
    intercept = ybar - slope * xbar
    half = 1.96 / math.sqrt(sxx)
    return slope, intercept, half


def scaling_study(
    level: int,
    H: float,
    grid: Grid,
    window_sizes,
    samples: int,
    seed: int,
    d: int = 2,
    tol_q: float = 1e-8,
    slope_tol: float | None = None,
    chunk: int = 250,
    table: CellAveragedKernel | None = None,
    strict_cap: bool = True,
    workers: int = 1,
) -> ScalingReport:
    """Monte-Carlo fit of the moment-scaling exponent of level ``level``.

    Windows are anchored at the horizon, (T - w, T); the Frobenius square over
    all component tuples is averaged per size and the log-log slope compared
    against 2 n H.
    """
    sizes = sorted(float(w) for w in window_sizes)
    if len(sizes) < 3:
        raise ValueError("need at least three window sizes for a slope")
    if max(sizes) / min(sizes) < 7.9:
        raise ValueError("window sizes should span at least three octaves")
    if samples < 100:
        raise ValueError("need at least 100 samples")
    if table is None:
        table = VolterraKernel(H, tol_q=tol_q).cell_table(grid)
    windows = [(grid.T - w, grid.T) for w in sizes]
    sums = np.zeros(len(sizes))
    sq_sums = np.zeros(len(sizes))
    done = 0
    chunk_specs = []
    while done < samples:
        take = min(chunk, samples - done)
        chunk_specs.append((done, take))
        done += take
    job = [
        (grid, d, seed, start, take, windows, level, table, strict_cap)
        for start, take in chunk_specs
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scaling_chunk, job))
    else:
        results = [_scaling_chunk(args) for args in job]
    for part_sums, part_sq in results:  # fixed chunk order keeps this deterministic
        sums += part_sums
        sq_sums += part_sq
    moments = sums / samples
    variances = np.maximum(sq_sums / samples - moments**2, 0.0)
    ses = np.sqrt(variances / samples)
    log_m = np.log(moments)
    se_log = ses / moments
    slope, _, half = _weighted_slope(np.log(sizes), log_m, 1.0 / se_log**2)
    expected = 2.0 * level * H
    tol = slope_tol if slope_tol is not None else {1: 0.05, 2: 0.10, 3: 0.15}.get(level, 0.2)
    return ScalingReport(
        level=level,
        hurst=H,
        window_sizes=tuple(sizes),
        samples=samples,
        moments=tuple(float(m) for m in moments),
        std_errors=tuple(float(s) for s in ses),
        slope=float(slope),
        half_width=float(half),
        expected_slope=expected,
        passed=abs(slope - expected) <= tol,
    )


def _chunk_increments(grid: Grid, d: int, seed: int, start: int, take: int) -> np.ndarray:
    """Increments for samples [start, start+take), stable under chunking."""
    children = np.random.SeedSequence(seed).spawn(start + take)[start:]
    out = np.empty((grid.N, d, take))
    root = math.sqrt(grid.delta)
    for i, child in enumerate(children):
        rng = np.random.Generator(np.random.Philox(child))
        out[:, :, i] = rng.standard_normal((grid.N, d)) * root
    return out


def _scaling_chunk(args):
    """Per-window sums of |B^n|^2 and its square over one sample chunk."""
    grid, d, seed, start, take, windows, level, table, strict_cap = args
    incs = _chunk_increments(grid, d, seed, start, take)
    values = stack_values_batch(windows, [level], table, incs, d, strict_cap=strict_cap)
    sums = np.zeros(len(windows))
    sq_sums = np.zeros(len(windows))
    for i, (s, t) in enumerate(windows):
        arr = values[(level, grid.index_of(s), grid.index_of(t))]
        flat = arr.reshape(-1, take)
        frob = np.sum(flat * flat, axis=0)
        sums[i] = np.sum(frob)
        sq_sums[i] = np.sum(frob * frob)
    return sums, sq_sums


# -- Hölder / GRR refinement study ----------------------------------------------


def _mesh_level_increment(level, table, incs, d, mesh_step, strict_cap=True):
    """Level values over all pairs of the mesh, wrapped as an Increment2."""
    grid = table.grid
    mesh_idx = list(range(0, grid.N + 1, mesh_step))
    npts = len(mesh_idx)
    windows = [
        (mesh_idx[a], mesh_idx[b]) for a in range(npts) for b in range(a + 1, npts)
    ]
    values = stack_values_batch(windows, [level], table, incs, d, strict_cap=strict_cap)
    mesh_grid = Grid(grid.T, npts - 1)
    shape = (npts, npts) + (d,) * level
    arr = np.zeros(shape)
    for a in range(npts):
        for b in range(a + 1, npts):
            arr[a, b] = values[(level, mesh_idx[a], mesh_idx[b])]
    return Increment2(mesh_grid, arr)


def holder_study(
    H: float,
    level: int,
    gamma: float,
    n_values,
    mesh_step: int,
    seeds,
    d: int = 2,
    T: float = 1.0,
    p: int | None = None,
    tol_q: float = 1e-8,
    supercritical: bool = False,
    tables: dict | None = None,
) -> dict:
    """Hölder-norm and GRR stability of level ``level`` under coupled refinement.

    For each seed, a Wiener path sampled on the coarsest grid is refined
    through ``n_values`` (bridge-coupled), the level is evaluated over every
    pair of an every-``mesh_step``-cells mesh, and holder_norm2 at exponent
    level*gamma plus the GRR double-sum term are recorded per grid size.

    ``gamma`` must stay below H unless ``supercritical`` is set: exponents
    above H are only meaningful as a divergence probe (negative control).
    """
    if not supercritical and gamma >= H:
        raise ValueError(f"gamma must satisfy gamma < H, got gamma={gamma}, H={H}")
    n_values = sorted(int(n) for n in n_values)
    if p is None:
        gamma_eff = min(gamma, 0.8 * H)
        p = int(math.floor(1.0 / (H - gamma_eff))) + 1
    mu = level * gamma
    if tables is None:
        tables = {}
    for n in n_values:
        if n not in tables:
            tables[n] = VolterraKernel(H, tol_q=tol_q).cell_table(Grid(T, n))
    per_seed = []
    for seed in seeds:
        incs = sample_wiener_batch(Grid(T, n_values[0]), d, seed, 1)
        cur_n = n_values[0]
        ladder = {}
        while True:
            if cur_n in tables:
                ladder[cur_n] = incs
            if cur_n >= n_values[-1]:
                break
            incs = refine_increments(incs, Grid(T, cur_n), seed)
            cur_n *= 2
        norms, grrs = {}, {}
        for n in n_values:
            inc2 = _mesh_level_increment(
                level, tables[n], ladder[n], d, mesh_step, strict_cap=not supercritical
            )
            norms[n] = holder_norm2(inc2, mu)
            grrs[n] = grr_estimate(inc2, mu, p)
        per_seed.append({"seed": seed, "holder": norms, "grr": grrs})
    ratios = {
        "holder": _refinement_ratios(per_seed, "holder", n_values),
        "grr": _refinement_ratios(per_seed, "grr", n_values),
    }
    return {
        "H": H,
        "level": level,
        "gamma": gamma,
        "exponent": mu,
        "p": p,
        "mesh_step": mesh_step,
        "n_values": n_values,
        "per_seed": per_seed,
        "ratios": ratios,
    }


def _refinement_ratios(per_seed, key, n_values):
    """Per-seed ratios norm(next)/norm(prev) along the refinement ladder."""
    out = []
    for rec in per_seed:
        r = {}
        for a, b in zip(n_values[:-1], n_values[1:]):
            prev = rec[key][a]
            r[(a, b)] = rec[key][b] / prev if prev > 0 else math.inf
        out.append(r)
    return out
