"""Conductance matrices C^n(a, b) on a lattice window.

Rows are stored by *offset*: for every window state a the matrix keeps the
rates C(a, a + o) for a fixed, lexicographically sorted set of integer
offsets o (|o|/n up to a reach radius), including offsets whose target lies
outside the window.  Rates towards targets outside the window, plus the mass
beyond the reach, form the lost rate of the row.  Stationary sources
(k(x, y) depending on y - x only) share a single stencil across rows, which
keeps wide windows cheap; other sources store a dense (states x offsets)
table.

Two schemes are provided: cell-averaged kernels, where

    C(a, b) = n^d * int_{cell a} int_{cell b} k(x, y) dy dx,  |a - b| > 2 sqrt(d) / n^p,

and measure-valued rows, where C(a, b) = nu(a, cell(b) - a) for
|a - b| > sqrt(d) / n^p.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy import sparse
from scipy.signal import fftconvolve

from .errors import ConfigError, LatticeMismatch, NumericalError
from .lattice import Lattice, LatticeFunction
from .quadrature import QuadratureSpec, as_points, gauss01, shell_integral

__all__ = [
    "QuadratureSpec", "ConductanceMatrix", "build_dirichlet_conductances",
    "build_measure_conductances", "total_rate", "split_symmetric", "default_window_radius",
    "cutoff_radius", "load_conductances",
]

DIRICHLET = "dirichlet"
SEMIMARTINGALE = "semimartingale"
_FFT_THRESHOLD = 2_000_000
_NODE_BUDGET = 2_000_000
_MAX_NODES_PER_ITEM = 1 << 17


def cutoff_radius(scheme, n, p, d):
    """Short-range cutoff: pairs with |a - b| at or below it carry no rate."""
    if scheme == DIRICHLET:
        return 2 * math.sqrt(d) / n**p
    if scheme == SEMIMARTINGALE:
        return math.sqrt(d) / n**p
    raise ConfigError(f"unknown scheme {scheme!r}")


def _check_p(p):
    if not (0 < p <= 1):
        raise ConfigError(f"p must lie in (0, 1], got {p}")


def _offset_set(n, d, cut, reach):
    """Integer offsets o with cut < |o|/n <= reach, lexicographically sorted."""
    K = int(math.floor(reach * n + 1e-9))
    axes = np.arange(-K, K + 1)
    m = np.stack([g.ravel() for g in np.meshgrid(*([axes] * d), indexing="ij")], axis=1)
    r2 = (m.astype(float) ** 2).sum(axis=1)
    keep = (r2 > (cut * n) ** 2 * (1 + 1e-9)) & (r2 <= (reach * n) ** 2 * (1 + 1e-12))
    return np.ascontiguousarray(m[keep])


@dataclass
class BuildStats:
    """Bookkeeping of a matrix build."""

    nonconverged: int = 0
    clamped: int = 0
    pruned_entries: int = 0
    levels: int = 0
    notes: list = field(default_factory=list)


class ConductanceMatrix:
    """Nonnegative (or, for antisymmetric parts, signed) rates on a window.

    ``values`` has shape (K,) for a shared stencil or (M, K) for per-row
    rates, aligned with ``offsets`` (K, d).  ``far_tail`` is the rate beyond
    the reach radius (scalar or per row); ``pruned`` the per-row mass of
    entries dropped as negligible.
    """

    def __init__(self, lattice, offsets, values, far_tail=0.0, scheme="custom", p=1.0,
                 reach=None, pruned=None, signed=False, stats=None, paired=None):
        self.lattice = lattice
        self.offsets = np.ascontiguousarray(np.asarray(offsets, dtype=np.int64).reshape(-1, lattice.dim))
        self.values = np.asarray(values, dtype=float)
        if self.values.shape[-1] != len(self.offsets):
            raise ValueError("values and offsets disagree in length")
        if self.values.ndim == 2 and self.values.shape[0] != len(lattice):
            raise ValueError("per-row values need one row per window state")
        self.far_tail = np.broadcast_to(np.asarray(far_tail, dtype=float), (len(lattice),)).copy()
        self.scheme = scheme
        self.p = float(p)
        self.reach = float(reach) if reach is not None else (
            float(np.abs(self.offsets).max(initial=0)) / lattice.n)
        self.pruned = np.zeros(len(lattice)) if pruned is None else np.broadcast_to(
            np.asarray(pruned, dtype=float), (len(lattice),)).copy()
        self.signed = signed
        self.stats = stats or BuildStats()
        self.paired = paired
        self._cache = {}

    # -- basic structure -------------------------------------------------
    @property
    def stationary(self):
        return self.values.ndim == 1

    @property
    def n(self):
        return self.lattice.n

    @property
    def dim(self):
        return self.lattice.dim

    def __len__(self):
        return len(self.lattice)

    def jumps(self):
        """Jump vectors o/n of the stored offsets, shape (K, d)."""
        return self.offsets / self.n

    def full_values(self):
        """Rates as an (M, K) array (broadcast view for stencils)."""
        if self.stationary:
            return np.broadcast_to(self.values, (len(self), len(self.offsets)))
        return self.values

    def targets(self):
        """State index of a + o for every (row, offset); -1 outside the window."""
        if "targets" not in self._cache:
            if self.stationary and len(self) * len(self.offsets) > _FFT_THRESHOLD:
                raise NumericalError("target table too large for a stencil matrix; use row()")
            m = self.lattice.indices[:, None, :] + self.offsets[None, :, :]
            self._cache["targets"] = self.lattice.index_of(m.reshape(-1, self.dim)).reshape(
                len(self), len(self.offsets))
        return self._cache["targets"]

    def offset_index(self, o):
        """Position of integer offset o in ``offsets`` (-1 when absent)."""
        if "oindex" not in self._cache:
            self._cache["oindex"] = {tuple(v): i for i, v in enumerate(self.offsets.tolist())}
        return self._cache["oindex"].get(tuple(int(v) for v in np.ravel(o)), -1)

    def row(self, i):
        """In-window part of row i: (target indices, rates) in lexicographic order."""
        m = self.lattice.indices[i] + self.offsets
        t = self.lattice.index_of(m)
        v = self.values if self.stationary else self.values[i]
        keep = (t >= 0) & (v != 0)
        return t[keep], v[keep]

    # -- rates -----------------------------------------------------------
    def stored_rate(self):
        """sum over all stored offsets of each row (in and out of the window)."""
        if self.stationary:
            return np.full(len(self), self.values.sum())
        return self.values.sum(axis=1)

    def kept_rate(self):
        if "kept" not in self._cache:
            self._cache["kept"] = self.matvec(np.ones(len(self)))
        return self._cache["kept"]

    def lost_rate(self):
        if "lost" not in self._cache:
            lost = self.stored_rate() - self.kept_rate() + self.far_tail
            self._cache["lost"] = np.where(np.abs(lost) < 1e-13 * max(1.0, np.abs(self.stored_rate()).max(initial=0)), 0.0, lost)
        return self._cache["lost"]

    def total_rate(self):
        return self.kept_rate() + self.lost_rate()

    # -- linear algebra on the window -------------------------------------
    def to_sparse(self):
        """In-window part as a scipy CSR matrix (rows = sources)."""
        if "csr" not in self._cache:
            t = self.targets()
            v = np.broadcast_to(self.full_values(), t.shape)
            keep = (t >= 0) & (v != 0)
            rows = np.broadcast_to(np.arange(len(self))[:, None], t.shape)[keep]
            mat = sparse.csr_matrix((v[keep], (rows, t[keep])), shape=(len(self), len(self)))
            mat.sort_indices()
            self._cache["csr"] = mat
        return self._cache["csr"]

    def _use_fft(self):
        return self.stationary and len(self) * len(self.offsets) > _FFT_THRESHOLD

    def _fft_apply(self, f, transpose):
        lat = self.lattice
        E, d = lat.extent, self.dim
        box = np.zeros((2 * E + 1,) * d)
        box[tuple((lat.indices + E).T)] = f
        R = int(np.abs(self.offsets).max(initial=0))
        st = np.zeros((2 * R + 1,) * d)
        st[tuple((self.offsets + R).T)] = self.values
        if not transpose:
            st = st[(slice(None, None, -1),) * d]
        full = fftconvolve(box, st, mode="full")
        sl = tuple(slice(R, R + 2 * E + 1) for _ in range(d))
        return full[sl][tuple((lat.indices + E).T)]

    def matvec(self, f):
        """(C f)(a) = sum_{b in window} C(a, b) f(b)."""
        f = np.asarray(f, dtype=float)
        if self._use_fft():
            return self._fft_apply(f, transpose=False)
        return self.to_sparse() @ f

    def rmatvec(self, g):
        """(C^T g)(b) = sum_{a in window} C(a, b) g(a)."""
        g = np.asarray(g, dtype=float)
        if self._use_fft():
            return self._fft_apply(g, transpose=True)
        return self.to_sparse().T @ g

    def row_functional(self, w):
        """sum_o w(o/n) C(a, a + o) over all stored offsets, for every row.

        ``w`` maps (K, d) jump vectors to (K,) or (K, ...) values.
        """
        wv = np.asarray(w(self.jumps()), dtype=float)
        if self.stationary:
            out = np.tensordot(self.values, wv, axes=(0, 0))
            return np.broadcast_to(out, (len(self),) + np.shape(out)).copy()
        return np.tensordot(self.values, wv, axes=(1, 0))

    def scaled(self, c):
        return ConductanceMatrix(self.lattice, self.offsets, self.values * c, self.far_tail * c,
                                 self.scheme, self.p, self.reach, self.pruned * c, self.signed,
                                 self.stats, self.paired)

    # -- constructors and I/O --------------------------------------------
    @classmethod
    def from_dense(cls, lattice, dense, lost=None, scheme="custom", p=1.0):
        """Wrap an explicit M x M rate table (diagonal ignored) on ``lattice``."""
        dense = np.array(dense, dtype=float)
        M = len(lattice)
        if dense.shape != (M, M):
            raise LatticeMismatch(f"dense matrix must be {M} x {M}")
        np.fill_diagonal(dense, 0.0)
        if np.any(dense < 0):
            raise ValueError("rates must be nonnegative")
        idx = lattice.indices
        diff = (idx[None, :, :] - idx[:, None, :]).reshape(-1, lattice.dim)
        offs = np.unique(diff[np.any(diff != 0, axis=1)], axis=0)
        mat = cls(lattice, offs, np.zeros((M, len(offs))), 0.0 if lost is None else lost, scheme, p)
        t = mat.targets()
        vals = np.where(t >= 0, dense[np.arange(M)[:, None], np.maximum(t, 0)], 0.0)
        out = cls(lattice, offs, vals, 0.0 if lost is None else lost, scheme, p)
        return out

    def header(self):
        return {"format": "jumpchain-conductance", "version": 1, "n": self.n, "d": self.dim,
                "p": self.p, "scheme": self.scheme, "R_w": self.lattice.window_radius,
                "reach": self.reach, "storage": "stencil" if self.stationary else "rows",
                "signed": bool(self.signed)}

    def save(self, path):
        """Write the matrix as an .npz archive with a JSON header."""
        np.savez_compressed(path, header=np.array(json.dumps(self.header(), sort_keys=True)),
                            offsets=self.offsets, values=self.values, far_tail=self.far_tail,
                            pruned=self.pruned)

    def export_triplets(self, path, max_rows=5_000_000):
        """CSV of in-window entries: a_1..a_d, b_1..b_d, value."""
        from .csvio import write_csv
        d = self.dim
        rows = []
        count = 0
        for i in range(len(self)):
            t, v = self.row(i)
            count += len(t)
            if count > max_rows:
                raise NumericalError("too many entries for a triplet export")
            a = np.repeat(self.lattice.points[i][None, :], len(t), axis=0)
            rows.append(np.column_stack([a, self.lattice.points[t], v]))
        cols = [f"a{i + 1}" for i in range(d)] + [f"b{i + 1}" for i in range(d)] + ["value"]
        data = np.vstack(rows) if rows else np.zeros((0, 2 * d + 1))
        h = self.header()
        meta = {k: h[k] for k in ("n", "d", "p", "scheme", "R_w")}
        return write_csv(path, cols, data, meta)


def load_conductances(path):
    """Inverse of :meth:`ConductanceMatrix.save`."""
    with np.load(path, allow_pickle=False) as z:
        head = json.loads(str(z["header"]))
        if head.get("format") != "jumpchain-conductance":
            raise ConfigError(f"{path} is not a conductance file")
        lat = Lattice(head["n"], head["d"], head["R_w"])
        return ConductanceMatrix(lat, z["offsets"], z["values"], z["far_tail"], head["scheme"],
                                 head["p"], head["reach"], z["pruned"], head.get("signed", False))


def total_rate(C, a):
    """(kept_rate, lost_rate) of state a (index or point)."""
    if np.ndim(a) == 0 and isinstance(a, (int, np.integer)):
        i = int(a)
    else:
        i = int(C.lattice.locate(as_points(a, C.dim))[0])
        if i < 0:
            raise ValueError("state outside the window")
    return float(C.kept_rate()[i]), float(C.lost_rate()[i])


def split_symmetric(C):
    """(C_s, C_a) with C_s(a,b) = (C(a,b) + C(b,a))/2 and C_a = (C(a,b) - C(b,a))/2.

    For per-row matrices the partner rate C(b, a) is known only when b lies in
    the window; such pairs are marked in ``paired`` and unpaired entries are
    set to zero in both parts.
    """
    neg = np.array([C.offset_index(-o) for o in C.offsets])
    if C.stationary:
        partner = np.where(neg >= 0, C.values[np.maximum(neg, 0)], 0.0)
        Cs = (C.values + partner) / 2
        Ca = (C.values - partner) / 2
        paired = None
    else:
        t = C.targets()
        ok = (t >= 0) & (neg[None, :] >= 0)
        partner = np.where(ok, C.values[np.maximum(t, 0), np.maximum(neg, 0)[None, :]], 0.0)
        Cs = np.where(ok, (C.values + partner) / 2, 0.0)
        Ca = np.where(ok, (C.values - partner) / 2, 0.0)
        paired = ok
    # antisymmetry at rounding level (quadrature of a symmetric source) is noise
    Ca = np.where(np.abs(Ca) <= 1e-12 * np.abs(Cs), 0.0, Ca)
    mk = lambda v, signed: ConductanceMatrix(C.lattice, C.offsets, v, 0.0, C.scheme, C.p, C.reach,
                                             None, signed, C.stats, paired)
    return mk(Cs, False), mk(Ca, True)


# ---------------------------------------------------------------------------
# Quadrature of entries.

def _unit_grid(D, m, q):
    x, w = gauss01(q)
    xs = ((np.arange(m)[:, None] + x[None, :]) / m).ravel()
    ws = np.tile(w / m, m)
    g = np.meshgrid(*([xs] * D), indexing="ij")
    gw = np.meshgrid(*([ws] * D), indexing="ij")
    return np.stack([a.ravel() for a in g], 1), np.prod(np.stack([a.ravel() for a in gw], 1), 1)


def _box_integrals(items, lo, hi, integrand, m, q):
    """sum over boxes of int integrand for each item (batched)."""
    D = lo.shape[-1]
    u, wu = _unit_grid(D, m, q)
    P = lo.shape[1]
    per_item = P * len(u)
    batch = max(1, _NODE_BUDGET // per_item)
    out = np.empty(len(items))
    for s in range(0, len(items), batch):
        sl = slice(s, s + batch)
        l, h = lo[sl], hi[sl]
        pts = l[:, :, None, :] + (h - l)[:, :, None, :] * u[None, None, :, :]
        vol = np.prod(h - l, axis=-1)[:, :, None] * wu[None, None, :]
        vals = integrand(items[sl], pts.reshape(len(l), -1, D))
        out[sl] = np.sum(vals * vol.reshape(len(l), -1), axis=1)
    return out


def _adaptive(items, boxes, integrand, m0, spec, stats):
    """Refine panel counts until successive estimates agree to spec.rtol."""
    lo, hi = boxes(items)
    D = lo.shape[-1]
    q = spec.panel_nodes
    prev = _box_integrals(items, lo, hi, integrand, m0, q)
    result = prev.copy()
    pending = np.arange(len(items))
    level = 0
    for level in range(1, spec.max_levels):
        m = m0 * 2**level
        if (m * q) ** D * lo.shape[1] > _MAX_NODES_PER_ITEM or len(pending) == 0:
            break
        sub = items[pending]
        lo, hi = boxes(sub)
        cur = _box_integrals(sub, lo, hi, integrand, m, q)
        scale = max(np.abs(result).max(initial=0.0), 1e-300)
        done = np.abs(cur - prev[pending]) <= spec.rtol * np.abs(cur) + 1e-6 * spec.rtol * scale
        result[pending] = cur
        prev[pending] = cur
        pending = pending[~done]
    stats.nonconverged += len(pending)
    stats.levels = max(stats.levels, level)
    return result


def _split_1d(lo, hi, points):
    """Split intervals [lo, hi] (K,) at the given (K, B) points; returns (K, P, 1)."""
    cuts = np.clip(points, lo[:, None], hi[:, None])
    edges = np.sort(np.concatenate([lo[:, None], cuts, hi[:, None]], axis=1), axis=1)
    return edges[:, :-1, None], edges[:, 1:, None]


def _signed_breaks(breaks):
    b = [float(v) for v in breaks if np.isfinite(v) and v > 0]
    return np.array(b + [-v for v in b] + [0.0])


def _finalize(vals, stats):
    neg = vals < 0
    stats.clamped += int(np.count_nonzero(neg & (vals < -1e-300)))
    return np.where(neg, 0.0, vals)


def _prune(values, stats):
    """Drop entries below 1e-15 x row max; return (values, pruned mass per row)."""
    rowmax = values.max(axis=-1, keepdims=True)
    drop = (values > 0) & (values < 1e-15 * rowmax)
    stats.pruned_entries += int(np.count_nonzero(drop))
    pruned = np.where(drop, values, 0.0).sum(axis=-1)
    return np.where(drop, 0.0, values), pruned


def _reach_default(lattice, cut):
    return max(2 * lattice.window_radius, cut + 2.0 / lattice.n)


def _far_tail(source, lattice, offsets, spec, per_row, scheme):
    """Rate beyond the stored offsets.

    For cell-averaged rates in d = 1 the exact remainder is the mean of the
    tail mass r -> T(r) over one cell width past the largest stored offset;
    for measure rows it is T at the outer cell edge.  The same formulas serve
    as approximations when d > 1.
    """
    n = lattice.n
    rmax = np.sqrt((offsets.astype(float) ** 2).sum(axis=1)).max(initial=0.0) / n
    pts = lattice.points if per_row else lattice.points[:1]
    if scheme == DIRICHLET:
        s, w = gauss01(4)
        vals = sum(wi * np.asarray(source.tail_mass(pts, rmax + si / n, spec), dtype=float)
                   for si, wi in zip(s, w))
    else:
        vals = np.asarray(source.tail_mass(pts, rmax + 0.5 / n, spec), dtype=float)
    return vals if per_row else float(vals[0])


def build_dirichlet_conductances(k, lattice, p, quad=None, reach=None):
    """Cell-averaged conductances n^d int_a int_b k for |a - b| > 2 sqrt(d)/n^p."""
    _check_p(p)
    if k.dim != lattice.dim:
        raise LatticeMismatch("kernel and lattice dimensions differ")
    spec = quad or QuadratureSpec()
    d, n = lattice.dim, lattice.n
    h = 1.0 / n
    cut = cutoff_radius(DIRICHLET, n, p, d)
    reach = _reach_default(lattice, cut) if reach is None else float(reach)
    offs = _offset_set(n, d, cut, reach)
    stats = BuildStats()
    if k.stationary:
        c = offs / n
        if d == 1:
            br = _signed_breaks(k.breaks)

            def boxes(idx):
                cc = c[idx, 0]
                return _split_1d(cc - h, cc + h, np.concatenate([cc[:, None], br[None, :] + 0 * cc[:, None]], 1))
        else:
            signs = np.stack(np.meshgrid(*([[0.0, 1.0]] * d), indexing="ij"), -1).reshape(-1, d)

            def boxes(idx):
                lo = c[idx][:, None, :] - h + signs[None, :, :] * h
                return lo, lo + h

        def integrand(idx, z):
            w = np.prod(np.clip(1 - n * np.abs(z - c[idx][:, None, :]), 0, None), axis=-1)
            zz = z.reshape(-1, d)
            kv = k.density(np.zeros_like(zz), zz).reshape(w.shape)
            return kv * w

        vals = _adaptive(np.arange(len(offs)), boxes, integrand, 1, spec, stats)
        vals, pruned = _prune(_finalize(vals, stats), stats)
        far = _far_tail(k, lattice, offs, spec, False, DIRICHLET)
    else:
        M, K = len(lattice), len(offs)
        a_pts, c = lattice.points, offs / n
        items = np.arange(M * K)

        def boxes(idx):
            a = a_pts[idx // K]
            b = a + c[idx % K]
            lo = np.concatenate([a - h / 2, b - h / 2], axis=1)[:, None, :]
            return lo, lo + h

        def integrand(idx, pts):
            x = pts[..., :d].reshape(-1, d)
            y = pts[..., d:].reshape(-1, d)
            return k.density(x, y).reshape(pts.shape[:2]) * n**d

        vals = _adaptive(items, boxes, integrand, 1, spec, stats).reshape(M, K)
        vals, pruned = _prune(_finalize(vals, stats), stats)
        far = _far_tail(k, lattice, offs, spec, True, DIRICHLET)
    return ConductanceMatrix(lattice, offs, vals, far, DIRICHLET, p, reach, pruned, stats=stats)


def build_measure_conductances(field, lattice, p, quad=None, reach=None):
    """Measure-valued conductances nu(a, cell(b) - a) for |a - b| > sqrt(d)/n^p."""
    _check_p(p)
    if field.dim != lattice.dim:
        raise LatticeMismatch("field and lattice dimensions differ")
    spec = quad or QuadratureSpec()
    d, n = lattice.dim, lattice.n
    h = 1.0 / n
    cut = cutoff_radius(SEMIMARTINGALE, n, p, d)
    reach = _reach_default(lattice, cut) if reach is None else float(reach)
    offs = _offset_set(n, d, cut, reach)
    c = offs / n
    K = len(offs)
    stats = BuildStats()
    br = _signed_breaks(field.breaks)

    def cell_boxes(cc):
        if d == 1:
            return _split_1d(cc[:, 0] - h / 2, cc[:, 0] + h / 2, br[None, :] + 0 * cc)
        lo = cc[:, None, :] - h / 2
        return lo, lo + h

    if field.stationary:
        def integrand(idx, y):
            yy = y.reshape(-1, d)
            return field.density(np.zeros_like(yy), yy).reshape(y.shape[:2])

        vals = _adaptive(np.arange(K), lambda idx: cell_boxes(c[idx]), integrand, 2, spec, stats)
        vals, pruned = _prune(_finalize(vals, stats), stats)
        far = _far_tail(field, lattice, offs, spec, False, SEMIMARTINGALE)
    else:
        M = len(lattice)
        a_pts = lattice.points

        def integrand(idx, y):
            x = np.repeat(a_pts[idx // K], y.shape[1], axis=0)
            return field.density(x, y.reshape(-1, d)).reshape(y.shape[:2])

        vals = _adaptive(np.arange(M * K), lambda idx: cell_boxes(c[idx % K]), integrand, 2,
                         spec, stats).reshape(M, K)
        vals, pruned = _prune(_finalize(vals, stats), stats)
        far = _far_tail(field, lattice, offs, spec, True, SEMIMARTINGALE)
    return ConductanceMatrix(lattice, offs, vals, far, SEMIMARTINGALE, p, reach, pruned, stats=stats)


def default_window_radius(source, n, p, scheme, rel=1e-3, cap=256.0, quad=None):
    """Smallest R (up to ``cap``) with tail mass beyond R/2 below ``rel`` x total rate.

    The total rate is the tail mass outside the cutoff radius at the origin.
    Returns (R, capped).
    """
    d = source.dim
    origin = np.zeros((1, d))
    cut = cutoff_radius(scheme, n, p, d)
    total = float(source.tail_mass(origin, cut, quad)[0])
    if not np.isfinite(total) or total <= 0:
        return float(cap), True
    tail = lambda R: float(source.tail_mass(origin, R / 2, quad)[0])
    lo, hi = max(2 * cut, 1.0 / n), max(2 * cut, 1.0 / n)
    while tail(hi) >= rel * total:
        lo, hi = hi, hi * 2
        if hi > cap:
            return float(cap), True
    for _ in range(50):
        mid = (lo + hi) / 2
        if tail(mid) >= rel * total:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1.0 / n:
            break
    return float(math.ceil(hi * n) / n), False
