"""Gauss rules, cell averages and radial-shell integration.

Points are always arrays of shape (N, d).  Integrands passed to
:func:`shell_integral` receive displacements ``z`` of shape (N, d) and return
either (N,) or (N, k) arrays.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, QuadratureDivergence


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature settings shared by every integral in the package.

    q is the per-axis Gauss order for cell averages, ``eps_inner`` the inner
    radius of the shell decomposition, ``max_levels`` the refinement budget
    and ``rtol`` the relative tolerance used to declare convergence.
    """

    q: int = 3
    eps_inner: float = 1e-6
    max_levels: int = 8
    rtol: float = 1e-10
    panel_nodes: int = 8
    angular_nodes: int = 32

    def __post_init__(self):
        if int(self.q) < 1:
            raise ConfigError("quadrature.q must be >= 1")
        if not self.eps_inner > 0:
            raise ConfigError("quadrature.eps_inner must be > 0")
        if int(self.max_levels) < 1:
            raise ConfigError("quadrature.max_levels must be >= 1")
        if not self.rtol > 0:
            raise ConfigError("quadrature.rtol must be > 0")
        if int(self.panel_nodes) < 2 or int(self.angular_nodes) < 4:
            raise ConfigError("quadrature.panel_nodes >= 2 and angular_nodes >= 4 required")


@lru_cache(maxsize=None)
def gauss01(q):
    """Gauss-Legendre nodes on [0, 1] with weights summing to 1."""
    x, w = leggauss(int(q))
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def cell_rule(d, q):
    """Tensor Gauss rule on the centred unit cube [-1/2, 1/2]^d."""
    x, w = gauss01(q)
    x = x - 0.5
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def as_points(x, d):
    """Coerce scalars, (d,) vectors or (N, d) arrays into an (N, d) array."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if d == 1 else a.reshape(1, -1)
    if a.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {a.shape}")
    return a


def unit_ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d):
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@lru_cache(maxsize=None)
def sphere_rule(d, m):
    """Directions and weights integrating over the unit sphere S^{d-1}."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(m, 2 * np.pi / m)
    if d == 3:
        ct, wt = leggauss(max(2, m // 2))
        ph = 2 * np.pi * (np.arange(m) + 0.5) / m
        c, p = np.meshgrid(ct, ph, indexing="ij")
        s = np.sqrt(1 - c**2)
        dirs = np.stack([(s * np.cos(p)).ravel(), (s * np.sin(p)).ravel(), c.ravel()], axis=1)
        w = np.repeat(wt, m) * (2 * np.pi / m)
        return dirs, w
    # Crude Monte-Carlo-free fallback for d > 3: Gaussian directions, fixed seed.
    rng = np.random.default_rng(0)
    g = rng.standard_normal((m**2, d))
    dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    return dirs, np.full(len(dirs), sphere_area(d) / len(dirs))


@dataclass(frozen=True)
class ShellResult:
    """Value of a shell integral with its extrapolated pieces."""

    value: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    shells: int


def _edges(lo, hi, breaks):
    edges = [lo]
    r = lo
    while r * 2 < hi:
        r *= 2
        edges.append(r)
    edges.append(hi)
    extra = [b for b in breaks if lo < b < hi]
    return np.unique(np.array(edges + extra, dtype=float))


def _shell_values(func, d, edges, spec):
    xs, ws = gauss01(spec.panel_nodes)
    dirs, dw = sphere_rule(d, spec.angular_nodes)
    lo, hi = edges[:-1], edges[1:]
    r = lo[:, None] + (hi - lo)[:, None] * xs[None, :]            # (S, m)
    wr = (hi - lo)[:, None] * ws[None, :] * r ** (d - 1)
    z = r.reshape(-1, 1, 1) * dirs[None, :, :]                   # (S*m, K, d)
    vals = np.asarray(func(z.reshape(-1, d)), dtype=float)
    vals = vals.reshape(r.size, len(dirs), *vals.shape[1:])
    vals = np.tensordot(dw, np.moveaxis(vals, 1, 0), axes=(0, 0))  # (S*m, ...)
    vals = vals.reshape(r.shape[0], r.shape[1], *vals.shape[1:])
    w = wr.reshape(wr.shape + (1,) * (vals.ndim - 2))
    return np.sum(vals * w, axis=1)                              # (S, ...)


def _geometric_remainder(first, second, rtol, scale, where):
    """Sum of the geometric series continuing ``first`` with ratio first/second."""
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    out = np.zeros_like(first)
    small = np.abs(first) <= rtol * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(second != 0, first / second, 0.0)
    bad = (~small) & ((ratio >= 0.999) | (ratio < 0))
    if np.any(bad & (ratio >= 0.999)):
        raise QuadratureDivergence(f"shell contributions do not decay at the {where} end")
    ok = (~small) & (ratio >= 0) & (ratio < 0.999)
    out[ok] = first[ok] * ratio[ok] / (1 - ratio[ok])
    return out


def shell_integral(func, d, r_in=0.0, r_out=np.inf, spec=None, breaks=(), outer_tail=None,
                   far_factor=2.0**40):
    """Integrate ``func(z)`` over the annulus r_in < |z| < r_out in R^d.

    The radial range is cut into geometric shells (ratio 2) plus the given
    ``breaks``; each shell uses a Gauss rule in r and a spherical rule in
    direction.  When ``r_in`` is 0 the shells stop at ``spec.eps_inner`` and
    the missing core is extrapolated from the two innermost shells; an
    infinite ``r_out`` is handled the same way at the far end unless an
    ``outer_tail(R)`` closure is supplied.  Non-decaying extrapolations raise
    :class:`QuadratureDivergence`.
    """
    spec = spec or QuadratureSpec()
    if r_out <= r_in:
        probe = np.asarray(func(np.zeros((1, d)) + 1.0), dtype=float)
        zero = np.zeros(probe.shape[1:])
        return ShellResult(zero, zero, zero, 0)
    lo = r_in if r_in > 0 else min(spec.eps_inner, r_out / 4)
    hi = r_out
    if not np.isfinite(r_out):
        hi = max(lo, 1.0, *[b for b in breaks if np.isfinite(b)]) * far_factor
    edges = _edges(lo, hi, breaks)
    per_shell = _shell_values(func, d, edges, spec)
    total = per_shell.sum(axis=0)
    scale = np.abs(per_shell).sum(axis=0)
    inner = np.zeros_like(total)
    outer = np.zeros_like(total)
    if r_in <= 0:
        inner = _geometric_remainder(per_shell[0], per_shell[1], spec.rtol, scale, "inner")
    if not np.isfinite(r_out):
        if outer_tail is not None:
            outer = np.asarray(outer_tail(hi), dtype=float) + np.zeros_like(total)
        else:
            outer = _geometric_remainder(per_shell[-1], per_shell[-2], spec.rtol, scale, "outer")
    return ShellResult(total + inner + outer, inner, outer, len(edges) - 1)


def panels(a, b, m, q):
    """Composite Gauss rule with ``m`` equal panels of ``q`` nodes on [a, b]."""
    x, w = gauss01(q)
    h = (b - a) / m
    starts = a + h * np.arange(m)
    nodes = (starts[:, None] + h * x[None, :]).ravel()
    weights = np.tile(w * h, m)
    return nodes, weights
