"""Discrete iterated Stratonovich integrals and the rough-path levels above fBm.

The canonical discretisation is PLPC: factors are piecewise constant per cell
(cell-averaged kernel rows) and the Wiener path is interpolated piecewise
linearly.  Every iterated integral is then an honest Riemann integral, so the
region algebra behind the Chen and shuffle identities holds exactly per sample
and the identities are checked at rounding level, not asymptotically.

On a simplex {s < u_1 < ... < u_n < t} the exact integral reduces to a sum
over nondecreasing cell multi-indices in which a run of m coordinates sharing
a cell carries the ordered-volume weight 1/m!.  Sweeping the cells once and
extending all suffix runs gives the same value in O(N n^2) operations:

    I_l <- I_l + sum_{m=1..l} I_{l-m} * (prod_{r=l-m+1..l} phi_r(k) dW_k(i_r)) / m!

with all right-hand sides read at their pre-cell values.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import Grid
from .combinat import compositions, composition_prefix_sums, valley_interleavings
from .kernel import CellAveragedKernel
from .wiener import WienerPath

__all__ = [
    "SampledIntegrand",
    "LevelCapError",
    "simplex_strat_plpc",
    "brute_force_oracle",
    "ito_iterated",
    "strat_via_ito_decomposition",
    "hat_B",
    "level_B",
    "build_stack",
    "RoughPathStack",
    "stack_values_batch",
]

_BRUTE_MAX_N = 3
_BRUTE_MAX_CELLS = 64


class LevelCapError(ValueError):
    """Level exceeds the admissible stack height n <= floor(1/H)."""


@dataclass(frozen=True)
class SampledIntegrand:
    """One coordinate factor: per-cell values plus the noise component it rides.

    ``values[m]`` is the factor on cell m (typically a cell-averaged kernel
    row, a delta-row, or ones); ``component`` is 1-based.
    """

    values: np.ndarray
    component: int

    def __post_init__(self):
        if self.component < 1:
            raise ValueError("components are labelled 1..d")


def _window_cells(grid: Grid, window) -> tuple[int, int]:
    s, t = window
    a, b = grid.index_of(s), grid.index_of(t)
    if a > b:
        raise ValueError(f"window must satisfy s <= t, got {window}")
    return a, b


def _check_factors(factors, path: WienerPath):
    if len(factors) < 1:
        raise ValueError("need at least one factor")
    for f in factors:
        if f.values.shape != (path.grid.N,):
            raise ValueError("factor values must be per-cell on the path grid")
        if f.component > path.d:
            raise ValueError(f"component {f.component} exceeds d={path.d}")


def _strat_core(elems: list[np.ndarray]) -> np.ndarray:
    """Exact PLPC simplex integral from per-slot elementary arrays.

    elems[l] has shape (K, *batch) holding phi_l(k) * dW_k(i_l); the return
    value has shape (*batch,).
    """
    n = len(elems)
    ncells = elems[0].shape[0]
    batch = elems[0].shape[1:]
    inv_fact = [1.0] * (n + 1)
    for m in range(2, n + 1):
        inv_fact[m] = inv_fact[m - 1] / m
    levels = [np.ones(batch)] + [np.zeros(batch) for _ in range(n)]
    for k in range(ncells):
        e = [el[k] for el in elems]
        base = [lv.copy() for lv in levels]
        pr = list(e)  # pr[l]: product over the run of length m ending at slot l
        for m in range(1, n + 1):
            if m > 1:
                for l in range(n - 1, m - 2, -1):
                    pr[l] = pr[l] * e[l - m + 1]
            c = inv_fact[m]
            for l in range(m - 1, n):
                levels[l + 1] += base[l + 1 - m] * pr[l] * c
    return levels[n]


def _ito_core(elems: list[np.ndarray]) -> np.ndarray:
    """Left-point discrete iterated integral: strictly increasing cells, no ties."""
    n = len(elems)
    ncells = elems[0].shape[0]
    batch = elems[0].shape[1:]
    levels = [np.ones(batch)] + [np.zeros(batch) for _ in range(n)]
    for k in range(ncells):
        e = [el[k] for el in elems]
        for l in range(n, 0, -1):
            levels[l] = levels[l] + levels[l - 1] * e[l - 1]
    return levels[n]


def simplex_strat_plpc(factors, window, path: WienerPath) -> float:
    """Exact iterated integral of the factor product over {s < u_1 < ... < u_n < t}.

    The value is the Riemann integral of the piecewise-constant factors against
    the piecewise-linear interpolation of the Wiener path, computed by the
    suffix-run recursion in O(N n^2).
    """
    _check_factors(factors, path)
    a, b = _window_cells(path.grid, window)
    if a == b:
        return 0.0
    elems = [
        f.values[a:b] * path.increments[a:b, f.component - 1] for f in factors
    ]
    return float(_strat_core(elems))


def brute_force_oracle(factors, window, path: WienerPath) -> float:
    """Desk-scale direct sum over nondecreasing cell multi-indices.

    Each run of m coordinates sharing a cell carries weight 1/m!, the exact
    ordered volume inside the tie cell.  Guarded to n <= 3 and <= 64 cells.
    """
    _check_factors(factors, path)
    n = len(factors)
    a, b = _window_cells(path.grid, window)
    if n > _BRUTE_MAX_N or (b - a) > _BRUTE_MAX_CELLS:
        raise ValueError(
            f"oracle guarded to n <= {_BRUTE_MAX_N}, cells <= {_BRUTE_MAX_CELLS}"
        )
    elems = [
        f.values[a:b] * path.increments[a:b, f.component - 1] for f in factors
    ]
    total = 0.0
    for cells in itertools.combinations_with_replacement(range(b - a), n):
        term = 1.0
        for l, k in enumerate(cells):
            term *= elems[l][k]
        weight = 1.0
        for _, run in itertools.groupby(cells):
            weight /= math.factorial(sum(1 for _ in run))
        total += weight * term
    return total


def _bracket_elems(factors, a: int, b: int, path: WienerPath, nu) -> list[np.ndarray]:
    """Per-slot integrator increments for an Ito integral with composition nu.

    A part of size 1 consumes phi * dW of its component; a part of size 2
    consumes the quadrature increment phi * phi' * delta when the two
    components coincide (and zero otherwise).
    """
    ms = composition_prefix_sums(nu)
    delta = path.grid.delta
    elems = []
    for j, part in enumerate(nu):
        m = ms[j]  # 1-based index of the last factor consumed by this slot
        if part == 1:
            f = factors[m - 1]
            elems.append(f.values[a:b] * path.increments[a:b, f.component - 1])
        else:
            f1, f2 = factors[m - 2], factors[m - 1]
            if f1.component == f2.component:
                elems.append(f1.values[a:b] * f2.values[a:b] * delta)
            else:
                elems.append(np.zeros(b - a))
    return elems


def ito_iterated(factors, window, path: WienerPath, composition=None) -> float:
    """Discrete Ito iterated integral (left point, strictly increasing cells).

    With ``composition`` given, parts of size 2 consume the bracket quadrature
    sum phi*phi'*delta (zero unless the paired components coincide) instead of
    a noise increment.
    """
    _check_factors(factors, path)
    n = len(factors)
    nu = tuple(composition) if composition is not None else (1,) * n
    if sum(nu) != n or any(p not in (1, 2) for p in nu):
        raise ValueError(f"composition {nu} does not match {n} factors")
    a, b = _window_cells(path.grid, window)
    if a == b:
        return 0.0
    elems = _bracket_elems(factors, a, b, path, nu)
    return float(_ito_core(elems))


def strat_via_ito_decomposition(factors, window, path: WienerPath) -> float:
    """Second estimator of the Stratonovich value through its Ito decomposition.

    Sums 2^(k-n) * J(nu) over compositions nu of n into k parts of size 1 and
    2, with J built by the bracket-aware Ito recursion.
    """
    _check_factors(factors, path)
    n = len(factors)
    total = 0.0
    for k in range(math.floor(n / 2), n + 1):
        for nu in compositions(n, k):
            total += 2.0 ** (k - n) * ito_iterated(factors, window, path, nu)
    return total


# -- rough-path levels ---------------------------------------------------------


def _check_level(n: int, table: CellAveragedKernel, strict_cap: bool):
    if n < 1:
        raise ValueError("level must be >= 1")
    cap = table.level_cap
    if strict_cap and cap is not None and n > cap:
        raise LevelCapError(
            f"level {n} exceeds the admissible cap floor(1/H) = {cap}"
        )


def _check_tuple(idx, n: int, d: int):
    idx = tuple(int(i) for i in idx)
    if len(idx) != n:
        raise ValueError(f"index tuple {idx} does not have length {n}")
    if any(i < 1 or i > d for i in idx):
        raise ValueError(f"index tuple {idx} outside component range 1..{d}")
    return idx


def _valley_rows(n: int, j: int, s_idx: int, t_idx: int, table: CellAveragedKernel):
    """Factor row per original coordinate label: K(s,.) left of the valley,
    the increment row at the valley, K(t,.) right of it."""
    rows = {}
    for l in range(1, n + 1):
        if l < j:
            rows[l] = table.row(s_idx)
        elif l == j:
            rows[l] = table.delta_row(s_idx, t_idx)
        else:
            rows[l] = table.row(t_idx)
    return rows


def hat_B(
    n: int,
    j: int,
    window,
    index_tuple,
    path: WienerPath,
    table: CellAveragedKernel,
    strict_cap: bool = True,
) -> float:
    """One valley contribution to level n over a window.

    Decomposes the valley region into ascending simplices, evaluates each with
    the PLPC recursion over (0, t), sums, and applies the sign (-1)^(j-1).
    Integration runs over [0, t]: the kernel rows supply the localisation.
    """
    _check_level(n, table, strict_cap)
    if not (1 <= j <= n):
        raise ValueError(f"need 1 <= j <= n, got j={j}")
    idx = _check_tuple(index_tuple, n, path.d)
    a, b = _window_cells(path.grid, window)
    if a == b:
        return 0.0
    rows = _valley_rows(n, j, a, b, table)
    total = 0.0
    for perm in valley_interleavings(n, j):
        factors = [SampledIntegrand(rows[c], idx[c - 1]) for c in perm]
        total += simplex_strat_plpc(factors, (0.0, window[1]), path)
    return (-1.0) ** (j - 1) * total


def level_B(
    n: int,
    window,
    index_tuple,
    path: WienerPath,
    table: CellAveragedKernel,
    strict_cap: bool = True,
) -> float:
    """Level-n value over a window: the sum of all valley contributions.

    Level 1 is the plain fBm increment delta B_{st}(i) computed from the
    kernel-row difference (identical to the j = 1 valley formula).
    """
    _check_level(n, table, strict_cap)
    idx = _check_tuple(index_tuple, n, path.d)
    a, b = _window_cells(path.grid, window)
    if n == 1:
        row = table.delta_row(a, b)
        return float(row @ path.increments[:, idx[0] - 1])
    return sum(
        hat_B(n, j, window, idx, path, table, strict_cap=strict_cap)
        for j in range(1, n + 1)
    )


@dataclass(frozen=True)
class RoughPathStack:
    """Levels 1..n_max over a family of windows, with full provenance.

    ``data[(n, s_idx, t_idx)]`` is an ndarray of shape (d,)*n mapping the
    component tuple (i_1, ..., i_n) (1-based) to the level value.
    """

    grid: Grid
    d: int
    n_max: int
    seed: int
    H: float | None
    c_H: float
    scheme: str
    data: dict = field(repr=False)
    version: str = "0.1.0"

    def value(self, n: int, window_idx, index_tuple) -> float:
        s_idx, t_idx = window_idx
        arr = self.data[(n, s_idx, t_idx)]
        key = tuple(i - 1 for i in index_tuple)
        return float(arr[key])

    def windows(self) -> list[tuple[int, int]]:
        return sorted({(s, t) for (_, s, t) in self.data})

    def provenance(self) -> dict:
        return {
            "seed": self.seed,
            "N": self.grid.N,
            "T": self.grid.T,
            "H": self.H,
            "d": self.d,
            "n_max": self.n_max,
            "scheme": self.scheme,
            "c_H": self.c_H,
            "version": self.version,
        }

    def to_csv(self, filename: str):
        pts = self.grid.points
        with open(filename, "w", newline="") as fh:
            fh.write("# provenance: " + json.dumps(self.provenance(), sort_keys=True) + "\n")
            cols = ["n", "s", "t"] + [f"i{k+1}" for k in range(self.n_max)] + ["value"]
            fh.write(",".join(cols) + "\n")
            for (n, si, ti) in sorted(self.data):
                arr = self.data[(n, si, ti)]
                for key in itertools.product(range(self.d), repeat=n):
                    idx = [str(i + 1) for i in key] + [""] * (self.n_max - n)
                    fh.write(
                        f"{n},{pts[si]:.17g},{pts[ti]:.17g},"
                        + ",".join(idx)
                        + f",{float(arr[key]):.17g}\n"
                    )

    def to_json(self, filename: str):
        pts = self.grid.points
        entries = []
        for (n, si, ti) in sorted(self.data):
            arr = self.data[(n, si, ti)]
            for key in itertools.product(range(self.d), repeat=n):
                entries.append(
                    {
                        "n": n,
                        "s": pts[si],
                        "t": pts[ti],
                        "indices": [i + 1 for i in key],
                        "value": float(arr[key]),
                    }
                )
        with open(filename, "w") as fh:
            json.dump(
                {"provenance": self.provenance(), "entries": entries},
                fh,
                sort_keys=True,
                indent=1,
            )


def stack_values_batch(
    windows,
    levels,
    table: CellAveragedKernel,
    increments: np.ndarray,
    d: int,
    strict_cap: bool = True,
    max_block: int = 1 << 22,
) -> dict:
    """Level values for many windows and all component tuples, batched.

    ``increments`` has shape (N, d) or (N, d, S).  Returns a dict keyed by
    (n, s_idx, t_idx) with arrays of shape (d,)*n (+ (S,) when batched).
    Windows sharing the same endpoint t are evaluated in one recursion sweep,
    which is what makes mesh-sized studies affordable.
    """
    single = increments.ndim == 2
    incs = increments[:, :, None] if single else increments
    nsamp = incs.shape[2]
    grid = table.grid
    win_idx = [
        (grid.index_of(w[0]), grid.index_of(w[1])) if not isinstance(w[0], (int, np.integer))
        else (int(w[0]), int(w[1]))
        for w in windows
    ]
    out = {}
    for n in levels:
        _check_level(n, table, strict_cap)
        tuples = list(itertools.product(range(1, d + 1), repeat=n))
        ntup = len(tuples)
        comp0 = np.array(tuples) - 1  # (ntup, n), 0-based
        if n == 1:
            for si, ti in win_idx:
                row = table.delta_row(si, ti)
                vals = np.einsum("m,mds->ds", row, incs)  # (d, S)
                out[(1, si, ti)] = vals[..., 0] if single else vals
            continue
        by_t: dict[int, list[int]] = {}
        for w, (si, ti) in enumerate(win_idx):
            by_t.setdefault(ti, []).append(w)
        for ti, wlist in by_t.items():
            ncells = ti
            acc = {w: np.zeros((ntup, nsamp)) for w in wlist}
            if ncells == 0:
                for w in wlist:
                    si = win_idx[w][0]
                    out[(n, si, ti)] = _shape_level(acc[w], d, n, single)
                continue
            # chunk the window axis so elems stay bounded in memory
            per_cfg = ncells * nsamp * n * 8
            wchunk = max(1, min(len(wlist), max_block // max(per_cfg * ntup, 1)))
            for j in range(1, n + 1):
                sign = (-1.0) ** (j - 1)
                for perm in valley_interleavings(n, j):
                    for w0 in range(0, len(wlist), wchunk):
                        ws = wlist[w0 : w0 + wchunk]
                        elems = []
                        for p, label in enumerate(perm):
                            rows = np.empty((len(ws), ncells))
                            for wi, w in enumerate(ws):
                                si = win_idx[w][0]
                                if label < j:
                                    rows[wi] = table.row(si)[:ncells]
                                elif label == j:
                                    rows[wi] = table.delta_row(si, ti)[:ncells]
                                else:
                                    rows[wi] = table.row(ti)[:ncells]
                            comp = comp0[:, label - 1]  # (ntup,)
                            # (ncells, nw, ntup, S)
                            e = (
                                rows.T[:, :, None, None]
                                * incs[:ncells][:, comp, :][:, None, :, :]
                            )
                            elems.append(e.reshape(ncells, -1, nsamp))
                        vals = _strat_core(elems).reshape(len(ws), ntup, nsamp)
                        for wi, w in enumerate(ws):
                            acc[w] += sign * vals[wi]
            for w in wlist:
                si = win_idx[w][0]
                out[(n, si, ti)] = _shape_level(acc[w], d, n, single)
    return out


def _shape_level(arr: np.ndarray, d: int, n: int, single: bool) -> np.ndarray:
    shaped = arr.reshape((d,) * n + (arr.shape[-1],))
    return shaped[..., 0] if single else shaped


def build_stack(
    windows,
    n_max: int,
    path: WienerPath,
    table: CellAveragedKernel,
    strict_cap: bool = True,
) -> RoughPathStack:
    """Levels 1..n_max over the given windows for one path."""
    _check_level(n_max, table, strict_cap)
    data = stack_values_batch(
        windows, range(1, n_max + 1), table, path.increments, path.d, strict_cap
    )
    return RoughPathStack(
        grid=path.grid,
        d=path.d,
        n_max=n_max,
        seed=path.seed,
        H=table.H,
        c_H=table.c_H,
        scheme="plpc",
        data=data,
    )
