"""k-increments on a uniform grid, the coboundary operator, and discrete Hölder norms.

A 0-increment is a function of one grid time, a 1-increment of an ordered pair
(s, t), a 2-increment of an ordered triple (s, u, t).  The coboundary delta
sends each family to the next level and satisfies delta(delta(.)) = 0; Chen
defects of iterated integrals live in its kernel.  All norms here are maxima
over grid tuples, i.e. discrete restrictions of the continuum suprema, so
refinement stability (not a single value) is the meaningful diagnostic.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "Grid",
    "Increment1",
    "Increment2",
    "Increment3",
    "delta1",
    "delta2",
    "holder_norm2",
    "holder_norm3",
    "multiparam_norm",
    "grr_estimate",
    "increment2_to_csv",
    "increment3_to_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid t_k = k*T/N, k = 0..N."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.N < 2:
            raise ValueError(f"need at least 2 cells, got N={self.N}")

    @property
    def delta(self) -> float:
        return self.T / self.N

    @property
    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def index_of(self, t: float) -> int:
        """Grid index of an on-grid time; rejects off-grid values."""
        k = int(round(t / self.delta))
        if k < 0 or k > self.N or abs(k * self.delta - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"time {t} is not a point of Grid(T={self.T}, N={self.N})")
        return k

    def refine(self) -> "Grid":
        return Grid(self.T, 2 * self.N)


def _check_diag_zero(values: np.ndarray, ndim_time: int, scale_tol: float = 1e-9):
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if scale == 0.0:
        return
    if ndim_time == 2:
        diag = np.abs(np.einsum("ii...->i...", values))
    else:
        p = values.shape[0]
        idx = np.arange(p)
        diag = np.maximum(np.abs(values[idx, idx]), np.abs(values[:, idx, idx]).T)
    if float(np.max(diag)) > scale_tol * scale:
        raise ValueError("increment does not vanish when adjacent time arguments coincide")


@dataclass(frozen=True)
class Increment1:
    """Values g_{t_k}, one per grid point; trailing axes are tensor components."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[0] != self.grid.N + 1:
            raise ValueError("leading axis must enumerate the grid points")


@dataclass(frozen=True)
class Increment2:
    """Values h_{st} indexed [s_idx, t_idx]; only s <= t is meaningful, diagonal is 0."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        p = self.grid.N + 1
        if self.values.shape[:2] != (p, p):
            raise ValueError("leading two axes must enumerate grid point pairs")
        _check_diag_zero(self.values, 2)


@dataclass(frozen=True)
class Increment3:
    """Values h_{sut} indexed [s_idx, u_idx, t_idx]; vanishes on adjacent ties."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        p = self.grid.N + 1
        if self.values.shape[:3] != (p, p, p):
            raise ValueError("leading three axes must enumerate grid point triples")
        _check_diag_zero(self.values, 3)


def delta1(g: Increment1) -> Increment2:
    """(delta g)_{st} = g_t - g_s."""
    v = g.values
    out = v[np.newaxis, :] - v[:, np.newaxis]
    return Increment2(g.grid, out)


def delta2(h: Increment2) -> Increment3:
    """(delta h)_{sut} = h_{st} - h_{su} - h_{ut}."""
    v = h.values
    out = v[:, np.newaxis, :] - v[:, :, np.newaxis] - v[np.newaxis, :, :]
    return Increment3(h.grid, out)


def _component_norm(values: np.ndarray, ndim_time: int) -> np.ndarray:
    """Frobenius norm over tensor axes, one scalar per time tuple."""
    extra = values.ndim - ndim_time
    if extra == 0:
        return np.abs(values)
    flat = values.reshape(values.shape[:ndim_time] + (-1,))
    return np.sqrt(np.sum(flat * flat, axis=-1))


def holder_norm2(h: Increment2, mu: float) -> float:
    """max over s < t of |h_{st}| / (t - s)^mu."""
    if not mu > 0:
        raise ValueError("Hölder exponent must be positive")
    p = h.grid.N + 1
    mag = _component_norm(h.values, 2)
    a, b = np.triu_indices(p, k=1)
    gaps = (b - a) * h.grid.delta
    return float(np.max(mag[a, b] / gaps**mu))


def holder_norm3(h: Increment3, gamma: float, rho: float) -> float:
    """max over s < u < t of |h_{sut}| / ((u-s)^gamma (t-u)^rho)."""
    if not (gamma > 0 and rho > 0):
        raise ValueError("Hölder exponents must be positive")
    p = h.grid.N + 1
    mag = _component_norm(h.values, 3)
    d = h.grid.delta
    best = 0.0
    for a in range(p - 2):
        for u in range(a + 1, p - 1):
            t = np.arange(u + 1, p)
            w = ((u - a) * d) ** gamma * ((t - u) * d) ** rho
            best = max(best, float(np.max(mag[a, u, u + 1 :] / w)))
    return best


def multiparam_norm(h, beta: float, max_shift_time: float | None = None) -> float:
    """max over grid shifts eps = k*delta of |h_{s+eps,...} - h_{s,...}| / eps^beta.

    Shifts are restricted to integer multiples of the spacing, eps <= min(1, T),
    and base tuples stay inside the simplex (s_1 <= ... <= s_j).
    """
    if not beta > 0:
        raise ValueError("exponent must be positive")
    if isinstance(h, Increment1):
        j, grid, values = 1, h.grid, h.values
    elif isinstance(h, Increment2):
        j, grid, values = 2, h.grid, h.values
    elif isinstance(h, Increment3):
        j, grid, values = 3, h.grid, h.values
    else:
        raise TypeError("expected Increment1/2/3")
    p = grid.N + 1
    d = grid.delta
    cap = min(1.0, grid.T) if max_shift_time is None else max_shift_time
    kmax = int(math.floor(cap / d + 1e-9))
    mask = None
    if j >= 2:
        idx = [np.arange(p).reshape((-1,) + (1,) * (j - 1 - ax)) for ax in range(j)]
        mask = np.ones((p,) * j, dtype=bool)
        for ax in range(j - 1):
            mask &= idx[ax] <= idx[ax + 1]
    best = 0.0
    for k in range(1, kmax + 1):
        hi = tuple(slice(k, p) for _ in range(j))
        lo = tuple(slice(0, p - k) for _ in range(j))
        diff = _component_norm(values[hi] - values[lo], j)
        if mask is not None:
            diff = diff[mask[lo]]
        if diff.size:
            best = max(best, float(np.max(diff)) / (k * d) ** beta)
    return best


def grr_estimate(R: Increment2, kappa: float, p: int) -> float:
    """Discrete Garsia-Rodemich-Rumsey double integral term.

    Returns (sum over grid pairs u < v of |R_{uv}|^{2p} / (v-u)^{2*kappa*p+4}
    * delta^2)^(1/(2p)).  Evaluated through logsumexp so that large p does not
    underflow the |R|^{2p} factors.
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be an integer >= 1")
    n = R.grid.N + 1
    mag = _component_norm(R.values, 2)
    a, b = np.triu_indices(n, k=1)
    gaps = (b - a) * R.grid.delta
    vals = mag[a, b]
    if not np.any(vals > 0):
        return 0.0
    with np.errstate(divide="ignore"):
        log_terms = (
            2.0 * p * np.log(vals)
            - (2.0 * kappa * p + 4.0) * np.log(gaps)
            + 2.0 * math.log(R.grid.delta)
        )
    total = logsumexp(log_terms)
    return float(np.exp(total / (2.0 * p)))


def _tensor_headers(shape: tuple[int, ...]) -> list[str]:
    if not shape:
        return ["v"]
    return ["v_" + "_".join(str(i + 1) for i in idx) for idx in itertools.product(*map(range, shape))]


def increment2_to_csv(h: Increment2, path: str):
    """One row per grid pair s <= t with the flattened tensor value."""
    extra = h.values.shape[2:]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "t"] + _tensor_headers(extra))
        pts = h.grid.points
        for a in range(h.grid.N + 1):
            for b in range(a, h.grid.N + 1):
                flat = np.asarray(h.values[a, b]).reshape(-1)
                w.writerow([f"{pts[a]:.17g}", f"{pts[b]:.17g}"] + [f"{x:.17g}" for x in flat])


def increment3_to_csv(h: Increment3, path: str):
    """One row per grid triple s <= u <= t with the flattened tensor value."""
    extra = h.values.shape[3:]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "u", "t"] + _tensor_headers(extra))
        pts = h.grid.points
        for a in range(h.grid.N + 1):
            for u in range(a, h.grid.N + 1):
                for b in range(u, h.grid.N + 1):
                    flat = np.asarray(h.values[a, u, b]).reshape(-1)
                    w.writerow(
                        [f"{pts[a]:.17g}", f"{pts[u]:.17g}", f"{pts[b]:.17g}"]
                        + [f"{x:.17g}" for x in flat]
                    )
