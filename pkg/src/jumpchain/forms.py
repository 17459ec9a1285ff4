"""Discrete Dirichlet forms of a conductance matrix.

All double sums run over ordered pairs (a, b) with both states in the
window; rates towards states outside the window enter only through the
killing term of the generator.
"""
from dataclasses import dataclass
import math

import numpy as np

from .discretize import ConductanceMatrix, split_symmetric
from .errors import LatticeMismatch
from .lattice import LatticeFunction
from .quadrature import gauss01


@dataclass(frozen=True)
class FormValue:
    """A bilinear-form value with its symmetric and antisymmetric components."""

    value: float
    symmetric: float
    antisymmetric: float
    n: int
    window: float

    def __float__(self):
        return self.value


def _values(C, f):
    if isinstance(f, LatticeFunction):
        C.lattice.check_same(f.lattice)
        return f.values
    v = np.asarray(f, dtype=float)
    if v.shape != (len(C),):
        raise LatticeMismatch("function does not live on the matrix's window")
    return v


def _pairs(C):
    """(rows, cols, vals) of the in-window entries, or None for FFT-sized stencils."""
    if C._use_fft():
        return None
    A = C.to_sparse().tocoo()
    return A.row, A.col, A.data


def apply_generator(C, f):
    """(A f)(a) = sum_{b in window} (f(b) - f(a)) C(a, b) - lost(a) f(a).

    Jumps leaving the window kill the chain, so constants are harmonic only
    on rows without lost rate; see :func:`generator_leak`.
    """
    v = _values(C, f)
    out = C.matvec(v) - C.total_rate() * v
    return LatticeFunction(C.lattice, out)


def generator_leak(C, f):
    """The killing part -lost(a) f(a) of the generator."""
    v = _values(C, f)
    return LatticeFunction(C.lattice, -C.lost_rate() * v)


def _energy(Cs, f, g):
    pr = _pairs(Cs)
    if pr is not None:
        r, c, w = pr
        return float(np.sum(w * (f[c] - f[r]) * (g[c] - g[r])))
    rs = Cs.matvec(np.ones(len(Cs)))
    cs = Cs.rmatvec(np.ones(len(Cs)))
    return float(np.dot(f * g, rs + cs) - np.dot(f, Cs.matvec(g)) - np.dot(g, Cs.matvec(f)))


def dirichlet_form_E(Cs, f, g=None):
    """E(f, g) = n^{-d} sum_a sum_b (f(b)-f(a)) (g(b)-g(a)) C_s(a, b)."""
    fv = _values(Cs, f)
    gv = fv if g is None else _values(Cs, g)
    val = Cs.lattice.cell_volume * _energy(Cs, fv, gv)
    return FormValue(val, val, 0.0, Cs.n, Cs.lattice.window_radius)


def _antisym(Ca, f, g):
    """sum_a sum_b (f(b) - f(a)) g(b) C_a(a, b)."""
    pr = _pairs(Ca)
    if pr is not None:
        r, c, w = pr
        return float(np.sum(w * (f[c] - f[r]) * g[c]))
    cs = Ca.rmatvec(np.ones(len(Ca)))
    return float(np.dot(f * g, cs) - np.dot(g, Ca.rmatvec(f)))


def form_H(C, f, g=None, parts=None):
    """H(f, g) = E(f, g)/2 - n^{-d} sum sum (f(b)-f(a)) g(b) C_a(a, b)."""
    Cs, Ca = parts if parts is not None else split_symmetric(C)
    fv = _values(C, f)
    gv = fv if g is None else _values(C, g)
    e = 0.5 * Cs.lattice.cell_volume * _energy(Cs, fv, gv)
    a = -Cs.lattice.cell_volume * _antisym(Ca, fv, gv)
    return FormValue(e + a, e, a, C.n, C.lattice.window_radius)


def alpha0_n(C, parts=None):
    """max over rows of sum_{C_s != 0} C_a^2 / C_s over the stored entries."""
    Cs, Ca = parts if parts is not None else split_symmetric(C)
    s, a = Cs.values, Ca.values
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(s > 0, a**2 / s, 0.0)
    per_row = ratio.sum(axis=-1)
    return float(np.max(per_row, initial=0.0))


@dataclass(frozen=True)
class ComparisonReport:
    """The two sandwich chains relating E_1, H_1 and H_{alpha0}."""

    alpha0: float
    E: float
    H: float
    norm2: float
    lower1: float
    upper1: float
    lower2: float
    upper2: float
    H_alpha0: float
    degenerate: bool
    ok1: bool
    ok2: bool

    @property
    def ok(self):
        return self.ok1 and self.ok2

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"ok": self.ok}


def comparison_check(C, f, rtol=1e-12, parts=None, alpha0=None):
    """Evaluate the comparison chains

        (1 ^ a0)/4 E_1 <= H_{a0} <= (2 + sqrt 2)/2 (1 v a0) E_1,
        (1 ^ a0) H_1 <= H_{a0} <= (1 v a0) H_1,

    where E_1 = E + ||f||^2, H_b = H + b ||f||^2 and a0 = alpha0_n(C).  With
    a0 = 0 the report flags the degenerate branch, where H must equal E/2.
    For a0 != 1 the second chain is equivalent to H(f, f) >= 0, which fails
    for some f on chains whose antisymmetric part has nonzero row sums; such
    violations are reported, not hidden.
    """
    parts = parts if parts is not None else split_symmetric(C)
    a0 = alpha0_n(C, parts) if alpha0 is None else float(alpha0)
    fv = _values(C, f)
    E = dirichlet_form_E(parts[0], fv).value
    H = form_H(C, fv, parts=parts).value
    N = C.lattice.cell_volume * float(fv @ fv)
    E1, H1, Ha = E + N, H + N, H + a0 * N
    lo, hi = min(1.0, a0), max(1.0, a0)
    lower1, upper1 = lo / 4 * E1, (2 + math.sqrt(2)) / 2 * hi * E1
    lower2, upper2 = lo * H1, hi * H1
    tol = rtol * max(abs(E1), abs(H1), 1e-300)
    ok1 = lower1 <= Ha + tol and Ha <= upper1 + tol
    ok2 = lower2 <= Ha + tol and Ha <= upper2 + tol
    degenerate = a0 == 0.0
    if degenerate:
        ok1 = ok1 and abs(H - E / 2) <= tol
    return ComparisonReport(a0, E, H, N, lower1, upper1, lower2, upper2, Ha, degenerate, ok1, ok2)


# ---------------------------------------------------------------------------
# Truncated forms on B_m x B_m minus the diagonal band |x - y| <= eps.

def _pair_integral_1d(f, xa, xb, ya, yb, eps, weight, nq, panels_x):
    """sum over pairs of int_{x in [xa,xb]} int_{y in [ya,yb], |y-x|>eps} (f(y)-f(x))^2 w(x,y).

    Arrays xa..yb have shape (P,); ``weight(x, y)`` returns pointwise weights.
    The band |x - y| <= eps is cut out exactly in y for every x node.
    """
    u, wu = gauss01(nq)
    ux = ((np.arange(panels_x)[:, None] + u[None, :]) / panels_x).ravel()
    wx = np.tile(wu / panels_x, panels_x)
    Lx = np.clip(xb - xa, 0, None)
    x = xa[:, None] + Lx[:, None] * ux[None, :]                 # (P, X)
    wxx = Lx[:, None] * wx[None, :]
    fx = f(x.reshape(-1, 1)).reshape(x.shape)
    total = np.zeros(len(xa))
    lower = [(ya[:, None] + 0 * x, np.minimum(yb[:, None], x - eps)),
             (np.maximum(ya[:, None], x + eps), yb[:, None] + 0 * x)]
    for lo, hi in lower:
        L = np.clip(hi - lo, 0, None)
        y = lo[..., None] + L[..., None] * u                      # (P, X, Y)
        fy = f(y.reshape(-1, 1)).reshape(y.shape)
        w = weight(np.broadcast_to(x[..., None], y.shape), y)
        inner = np.sum((fy - fx[..., None]) ** 2 * w * (L[..., None] * wu), axis=-1)
        total += np.sum(inner * wxx, axis=1)
    return total


def _truncated_continuous_1d(k, f, m, eps, cells, nq):
    H = 2 * m / cells
    edges = -m + H * np.arange(cells + 1)
    ia, ib = np.meshgrid(np.arange(cells), np.arange(cells), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    keep = np.abs(edges[ib] - edges[ia]) - H < 2 * m
    ia, ib = ia[keep], ib[keep]

    def weight(x, y):
        xs, ys = x.reshape(-1, 1), y.reshape(-1, 1)
        ks = 0.5 * (k.density(xs, ys) + k.density(ys, xs))
        return ks.reshape(x.shape)

    total = 0.0
    batch = 512
    for s in range(0, len(ia), batch):
        a, b = ia[s:s + batch], ib[s:s + batch]
        total += _pair_integral_1d(f, edges[a], edges[a + 1], edges[b], edges[b + 1], eps,
                                   weight, nq, 1).sum()
    return 0.5 * total


def _truncated_discrete_1d(Cs, f, m, eps, nq, panels_x):
    lat = Cs.lattice
    n, h = lat.n, 1.0 / lat.n
    pts = lat.points[:, 0]
    near = np.nonzero(np.abs(pts) - h / 2 < m)[0]
    total = 0.0
    for i in near:
        t, v = Cs.row(i)
        sel = np.abs(pts[t]) - h / 2 < m
        t, v = t[sel], v[sel]
        if len(t) == 0:
            continue
        a = pts[i]
        xa = np.full(len(t), max(a - h / 2, -m))
        xb = np.full(len(t), min(a + h / 2, m))
        ya = np.maximum(pts[t] - h / 2, -m)
        yb = np.minimum(pts[t] + h / 2, m)
        one = lambda x, y: np.ones_like(y)
        total += float(np.dot(v, _pair_integral_1d(f, xa, xb, ya, yb, eps, one, nq, panels_x)))
    return 0.5 * n * total


def _masked_grid(d, m, res, nq):
    u, wu = gauss01(nq)
    h = 2 * m / res
    axis = (-m + h * (np.arange(res)[:, None] + u[None, :])).ravel()
    wax = np.tile(wu * h, res)
    g = np.stack([a.ravel() for a in np.meshgrid(*([axis] * d), indexing="ij")], 1)
    w = np.prod(np.stack([a.ravel() for a in np.meshgrid(*([wax] * d), indexing="ij")], 1), 1)
    inside = np.linalg.norm(g, axis=1) < m
    return g[inside], w[inside]


def truncated_form_compare(k, Cs, f, m, eps, quad=None, cells=None):
    """(E_{m,eps}(f,f), its lattice analogue) for the symmetric part of k.

    E_{m,eps} = 1/2 int int_{B_m x B_m, |x-y|>eps} (f(y)-f(x))^2 k_s(x,y) dy dx.
    The lattice value replaces k_s on each product of cells a x b by the
    constant n^d C_s(a, b).  ``f`` maps (N, d) arrays to (N,) values.
    """
    d = Cs.dim
    if eps >= 2 * m:
        return 0.0, 0.0
    nq = 8 if quad is None else max(4, quad.panel_nodes)
    if d == 1:
        cells = cells or max(64, int(math.ceil(2 * m / min(eps, 1.0) * 16)))
        E_cont = _truncated_continuous_1d(k, f, m, eps, cells, nq)
        E_disc = _truncated_discrete_1d(Cs, f, m, eps, nq, 2)
        return float(E_cont), float(E_disc)
    # Generic dimension: tensor grids masked to B_m, coarse but honest.
    res = cells or 16
    g, w = _masked_grid(d, m, res, 3)
    fg = f(g)
    E_cont = 0.0
    lat = Cs.lattice
    idx = lat.locate(g)
    A = Cs.to_sparse().tocsr()
    E_disc = 0.0
    for i in range(len(g)):
        dist = np.linalg.norm(g - g[i], axis=1)
        sel = dist > eps
        if not np.any(sel):
            continue
        diff2 = (fg[sel] - fg[i]) ** 2
        xs = np.broadcast_to(g[i], (int(sel.sum()), d))
        ks = 0.5 * (k.density(xs, g[sel]) + k.density(g[sel], xs))
        E_cont += w[i] * float(np.sum(diff2 * ks * w[sel]))
        if idx[i] >= 0:
            row = A.getrow(int(idx[i])).toarray().ravel()
            cv = np.where(idx[sel] >= 0, row[np.maximum(idx[sel], 0)], 0.0) * lat.n**d
            E_disc += w[i] * float(np.sum(diff2 * cv * w[sel]))
    return 0.5 * E_cont, 0.5 * E_disc
