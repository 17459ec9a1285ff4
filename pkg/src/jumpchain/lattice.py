"""The lattice (1/n)Z^d truncated to a window, and the maps between lattice
functions and functions on R^d.

Cells are the half-open cubes prod [a_i - 1/2n, a_i + 1/2n); the discrete
inner product carries the cell volume n^{-d}, so that extension by constants
on cells is an isometry.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate

from .errors import ConfigError, LatticeMismatch, NumericalError
from .quadrature import as_points, cell_rule


def round_index(x, n):
    """Integer multi-index m with x in the cell of m/n: floor(n x + 1/2)."""
    return np.floor(np.asarray(x, dtype=float) * n + 0.5).astype(np.int64)


def round_to_lattice(x, n):
    """[x]_n: the lattice point whose cell contains x."""
    return round_index(x, n) / n


class Lattice:
    """Window {a in (1/n)Z^d : |a| <= R_w}, states ordered lexicographically."""

    def __init__(self, n, dim=1, window_radius=8.0):
        if int(n) != n or n < 1:
            raise ConfigError("lattice.n must be a positive integer")
        if int(dim) < 1:
            raise ConfigError("lattice.d must be a positive integer")
        if not window_radius >= 0:
            raise ConfigError("window radius must be >= 0")
        self.n = int(n)
        self.dim = int(dim)
        self.window_radius = float(window_radius)
        K = int(math.floor(self.window_radius * self.n + 1e-9))
        self.extent = K
        axes = np.arange(-K, K + 1)
        grid = np.meshgrid(*([axes] * self.dim), indexing="ij")
        m = np.stack([g.ravel() for g in grid], axis=1)
        keep = (m.astype(float) ** 2).sum(axis=1) <= (self.window_radius * self.n) ** 2 + 1e-9
        self.indices = np.ascontiguousarray(m[keep])
        self._lookup = np.full((2 * K + 1,) * self.dim, -1, dtype=np.int64)
        self._lookup[tuple((self.indices + K).T)] = np.arange(len(self.indices))

    @property
    def spacing(self):
        return 1.0 / self.n

    @property
    def cell_volume(self):
        return float(self.n) ** (-self.dim)

    @property
    def points(self):
        return self.indices / self.n

    def __len__(self):
        return len(self.indices)

    def __eq__(self, other):
        return isinstance(other, Lattice) and (self.n, self.dim, self.window_radius) == (
            other.n, other.dim, other.window_radius)

    def __hash__(self):
        return hash((self.n, self.dim, self.window_radius))

    def __repr__(self):
        return f"Lattice(n={self.n}, dim={self.dim}, window_radius={self.window_radius:g})"

    def index_of(self, m):
        """State indices of integer multi-indices m (shape (N, d)); -1 outside."""
        m = np.asarray(m, dtype=np.int64).reshape(-1, self.dim)
        out = np.full(len(m), -1, dtype=np.int64)
        inside = np.all(np.abs(m) <= self.extent, axis=1)
        out[inside] = self._lookup[tuple((m[inside] + self.extent).T)]
        return out

    def locate(self, x):
        """State index of the cell containing each point x; -1 outside the window."""
        return self.index_of(round_index(as_points(x, self.dim), self.n))

    def check_same(self, other):
        if self != other:
            raise LatticeMismatch(f"{self!r} differs from {other!r}")


@dataclass(frozen=True)
class LatticeFunction:
    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.lattice),):
            raise LatticeMismatch(f"expected {len(self.lattice)} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    def norm(self):
        return math.sqrt(l2n_inner(self, self))

    def to_csv(self, path):
        from .csvio import write_csv
        cols = [f"a{i + 1}" for i in range(self.lattice.dim)] + ["value"]
        write_csv(path, cols, np.column_stack([self.lattice.points, self.values]))


def _cell_nodes(lattice, q):
    nodes, weights = cell_rule(lattice.dim, q)
    pts = lattice.points[:, None, :] + nodes[None, :, :] / lattice.n
    return pts, weights


def restrict(f, lattice, q=3):
    """r_n f: cell averages of f by a tensor Gauss rule of order q per axis."""
    pts, w = _cell_nodes(lattice, q)
    vals = np.asarray(f(pts.reshape(-1, lattice.dim)), dtype=float).reshape(len(lattice), -1)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("restriction: f is not finite at some quadrature node")
    return LatticeFunction(lattice, vals @ w)


def extend(fn):
    """e_n f_n: the piecewise-constant function equal to f_n(a) on the cell of a."""
    lat, vals = fn.lattice, fn.values

    def e(x):
        idx = lat.locate(x)
        return np.where(idx >= 0, vals[np.maximum(idx, 0)], 0.0)

    return e


def l2n_inner(f, g):
    """<f, g> = n^{-d} sum_a f(a) g(a)."""
    f.lattice.check_same(g.lattice)
    return f.lattice.cell_volume * float(np.dot(f.values, g.values))


@dataclass(frozen=True)
class L2Error:
    """L^2 distance split into the in-window part and the leakage outside."""

    error: float
    inside: float
    leakage: float

    def __float__(self):
        return self.error


def _outside_mass_1d(f, edge):
    g = lambda s: float(f(np.array([[s]]))[0]) ** 2
    right, _ = integrate.quad(g, edge, np.inf, limit=200)
    left, _ = integrate.quad(g, -np.inf, -edge, limit=200)
    return left + right


def strong_convergence_error(fn, f, q=6, subdivisions=2, outer_radius=None):
    """||e_n f_n - f||_{L^2(R^d)} with the mass of f outside the window as leakage.

    Inside the window each cell is integrated with ``subdivisions^d``
    sub-cells of a q-point tensor rule.  Outside, d = 1 uses adaptive
    quadrature on the two half-lines; for d > 1 the cells of the box of
    half-width ``outer_radius`` (default 2 R_w) outside the window are used.
    """
    lat = fn.lattice
    d, n = lat.dim, lat.n
    s = int(subdivisions)
    nodes, w = cell_rule(d, q)
    sub = (np.stack(np.meshgrid(*([np.arange(s)] * d), indexing="ij"), -1).reshape(-1, d) + 0.5) / s - 0.5
    local = (sub[:, None, :] + nodes[None, :, :] / s).reshape(-1, d)
    wl = np.tile(w / s**d, len(sub))
    inside = 0.0
    chunk = max(1, 200000 // len(local))
    for start in range(0, len(lat), chunk):
        pts = lat.points[start:start + chunk, None, :] + local[None, :, :] / n
        fv = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(pts.shape[0], -1)
        if not np.all(np.isfinite(fv)):
            raise NumericalError("strong_convergence_error: f not finite on the window")
        diff = (fn.values[start:start + chunk, None] - fv) ** 2
        inside += float(np.sum(diff @ wl)) * lat.cell_volume
    if d == 1:
        leak2 = _outside_mass_1d(f, (lat.extent + 0.5) / n)
    else:
        R = 2 * lat.window_radius if outer_radius is None else float(outer_radius)
        box = Lattice(n, d, R * math.sqrt(d))
        far = box.indices[np.all(np.abs(box.indices) <= R * n, axis=1)]
        far = far[lat.index_of(far) < 0]
        leak2 = 0.0
        for start in range(0, len(far), chunk):
            pts = far[start:start + chunk, None, :] / n + local[None, :, :] / n
            fv = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(pts.shape[0], -1)
            leak2 += float(np.sum((fv**2) @ wl)) * lat.cell_volume
    return L2Error(math.sqrt(inside + leak2), math.sqrt(inside), math.sqrt(leak2))
