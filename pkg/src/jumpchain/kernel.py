"""Jump kernels k(x, y), Levy-measure fields nu(x, dy) and truncation functions.

A :class:`JumpKernel` is an evaluable density off the diagonal together with a
little metadata: whether it is symmetric, whether it is stationary (depends
on y - x only), an optional closed form for the tail mass
``x, r -> int_{|y-x|>r} k(x, y) dy``, and radii at which it jumps (used to
place quadrature breakpoints).  All callables take (N, d) arrays.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional
import math

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import ConfigError
from .quadrature import QuadratureSpec, as_points, shell_integral, sphere_area


def _pair(x, y, d):
    x, y = np.broadcast_arrays(as_points(x, d), as_points(y, d))
    return np.ascontiguousarray(x), np.ascontiguousarray(y)


@dataclass(frozen=True)
class JumpKernel:
    dim: int
    density: Callable
    symmetric: bool = False
    stationary: bool = False
    tail: Optional[Callable] = None
    breaks: tuple = ()
    name: str = "kernel"
    params: dict = field(default_factory=dict)

    def __call__(self, x, y):
        x, y = _pair(x, y, self.dim)
        return np.asarray(self.density(x, y), dtype=float)

    def parts(self, x, y):
        """Symmetric and antisymmetric parts at the pairs (x, y)."""
        return k_parts(self, x, y)

    def tail_mass(self, x, r, spec=None):
        """Mass of k(x, .) outside the ball B_r(x), per point x."""
        x = as_points(x, self.dim)
        if self.tail is not None:
            return np.asarray(self.tail(x, r), dtype=float) + np.zeros(len(x))
        out = np.empty(len(x))
        for i, xi in enumerate(x):
            f = lambda z, xi=xi: self.density(np.broadcast_to(xi, z.shape), xi + z)
            out[i] = shell_integral(f, self.dim, r, np.inf, spec, self.breaks).value
        return out

    def swapped(self):
        """The kernel (x, y) -> k(y, x)."""
        dens = self.density
        return JumpKernel(self.dim, lambda x, y: dens(y, x), self.symmetric, self.stationary,
                          self.tail if self.symmetric else None, self.breaks,
                          self.name + "_swapped", dict(self.params))


def k_parts(k, x, y):
    """Return (k_s, k_a) = ((k(x,y) + k(y,x))/2, (k(x,y) - k(y,x))/2)."""
    x, y = _pair(x, y, k.dim)
    if np.any(np.all(x == y, axis=1)):
        raise ValueError("kernel parts are undefined on the diagonal x = y")
    kxy = np.asarray(k.density(x, y), dtype=float)
    kyx = np.asarray(k.density(y, x), dtype=float)
    return (kxy + kyx) / 2, (kxy - kyx) / 2


# ---------------------------------------------------------------------------
# Regions used by the two-regime kernel.

@dataclass(frozen=True)
class HalfSpace:
    """Points z with <normal, z> > offset."""
    normal: tuple
    offset: float = 0.0

    def contains(self, z):
        return z @ np.asarray(self.normal, dtype=float) > self.offset


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def contains(self, z):
        return np.linalg.norm(z - np.asarray(self.center, dtype=float), axis=1) < self.radius


@dataclass(frozen=True)
class Everywhere:
    def contains(self, z):
        return np.ones(len(z), dtype=bool)


@dataclass(frozen=True)
class Nowhere:
    def contains(self, z):
        return np.zeros(len(z), dtype=bool)


def region_from_spec(spec, dim):
    """Build a region from a config mapping such as ``{type: halfspace, normal: [1]}``."""
    kind = spec.get("type")
    if kind == "halfspace":
        normal = tuple(float(v) for v in spec.get("normal", [1.0] + [0.0] * (dim - 1)))
        if len(normal) != dim:
            raise ConfigError("region.normal must have one entry per dimension")
        return HalfSpace(normal, float(spec.get("offset", 0.0)))
    if kind == "ball":
        center = tuple(float(v) for v in spec.get("center", [0.0] * dim))
        return Ball(center, float(spec["radius"]))
    if kind == "everywhere":
        return Everywhere()
    if kind == "nowhere":
        return Nowhere()
    raise ConfigError(f"unknown region type {kind!r}")


# ---------------------------------------------------------------------------
# Kernel families.

def stable_constant(alpha, d):
    """Normalising constant making the symbol of the stable kernel |xi|^alpha."""
    alpha = np.asarray(alpha, dtype=float)
    return alpha * 2.0 ** (alpha - 1) * gamma_fn((alpha + d) / 2) / (
        math.pi ** (d / 2) * gamma_fn(1 - alpha / 2))


def _default_probes(d):
    g = np.linspace(-10, 10, 41 if d == 1 else 9)
    return np.stack([m.ravel() for m in np.meshgrid(*([g] * d), indexing="ij")], axis=1)


def _check_index(values, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values <= 0) or np.any(values >= 2):
        raise ConfigError(f"{what} must lie in (0, 2) at every probe point")


def stable_like_kernel(alpha, dim=1, probe_points=None):
    """k(x, y) = gamma(x) |y - x|^{-alpha(x) - d} with the stable normalisation.

    ``alpha`` is a constant or a callable on (N, d) arrays; a constant gives a
    symmetric, stationary kernel.
    """
    d = int(dim)
    S = sphere_area(d)
    if callable(alpha):
        probes = _default_probes(d) if probe_points is None else as_points(probe_points, d)
        _check_index(alpha(probes), "stability index alpha(x)")

        def density(x, y):
            a = alpha(x)
            r = np.linalg.norm(y - x, axis=1)
            with np.errstate(divide="ignore"):
                return stable_constant(a, d) * r ** (-a - d)

        def tail(x, r):
            a = alpha(x)
            return stable_constant(a, d) * S * r ** (-a) / a

        return JumpKernel(d, density, symmetric=False, stationary=False, tail=tail,
                          name="stable_like", params={"alpha": getattr(alpha, "source", "callable")})
    a = float(alpha)
    _check_index(a, "stability index alpha")
    g = float(stable_constant(a, d))

    def density(x, y):
        r = np.linalg.norm(y - x, axis=1)
        with np.errstate(divide="ignore"):
            return g * r ** (-a - d)

    def tail(x, r):
        return np.full(len(x), g * S * r ** (-a) / a)

    return JumpKernel(d, density, symmetric=True, stationary=True, tail=tail,
                      name="stable", params={"alpha": a})


def cauchy_kernel(dim=1):
    """The stable kernel with index 1 (density 1/(pi |y-x|^2) when d = 1)."""
    return stable_like_kernel(1.0, dim)


def levy_mix_kernel(alpha, beta, region, dim=1, inner_radius=1.0):
    """Two-regime kernel: index alpha for jumps y - x in ``region``, beta otherwise.

    Jumps shorter than ``inner_radius`` carry no mass (set it to 0 for the
    untruncated densities).  The kernel is stationary; it is symmetric when
    the regimes agree or the region is symmetric under z -> -z.
    """
    d = int(dim)
    a, b = float(alpha), float(beta)
    _check_index(a, "alpha")
    _check_index(b, "beta")
    rho = float(inner_radius)
    if rho < 0:
        raise ConfigError("inner_radius must be >= 0")

    def density(x, y):
        z = y - x
        r = np.linalg.norm(z, axis=1)
        inside = region.contains(z)
        with np.errstate(divide="ignore"):
            val = np.where(inside, r ** (-a - d), r ** (-b - d))
        return np.where(r >= rho, val, 0.0)

    S = sphere_area(d)
    sym_region = isinstance(region, (Everywhere, Nowhere)) or (
        isinstance(region, Ball) and not np.any(region.center))
    tail = None
    if isinstance(region, Everywhere):
        tail = lambda x, r: np.full(len(x), S * max(r, rho) ** (-a) / a)
    elif isinstance(region, Nowhere):
        tail = lambda x, r: np.full(len(x), S * max(r, rho) ** (-b) / b)
    elif isinstance(region, HalfSpace) and region.offset == 0:
        tail = lambda x, r: np.full(len(x), S / 2 * (max(r, rho) ** (-a) / a + max(r, rho) ** (-b) / b))
    elif isinstance(region, Ball) and not np.any(region.center):
        rb = region.radius

        def tail(x, r):
            R = max(r, rho)
            inner = S * (R ** (-a) - rb ** (-a)) / a if R < rb else 0.0
            return np.full(len(x), inner + S * max(R, rb) ** (-b) / b)
    breaks = tuple(v for v in (rho, getattr(region, "radius", None)) if v)
    return JumpKernel(d, density, symmetric=(a == b) or sym_region, stationary=True, tail=tail,
                      breaks=breaks, name="levy_mix",
                      params={"alpha": a, "beta": b, "inner_radius": rho, "region": repr(region)})


def constant_kernel(c, dim=1, radius=np.inf):
    """k(x, y) = c for |y - x| < radius: a bounded test density."""
    d = int(dim)
    c = float(c)
    if c < 0:
        raise ConfigError("constant kernel value must be >= 0")
    R = float(radius)
    vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1)

    def density(x, y):
        r = np.linalg.norm(y - x, axis=1)
        return np.where(r < R, c, 0.0)

    def tail(x, r):
        return np.full(len(x), c * vol * max(R**d - r**d, 0.0) if np.isfinite(R) else np.inf)

    return JumpKernel(d, density, symmetric=True, stationary=True, tail=tail,
                      breaks=(R,) if np.isfinite(R) else (), name="constant",
                      params={"c": c, "radius": R})


def expression_kernel(text, dim=1, symmetric=False, stationary=False, breaks=()):
    """Kernel from the expression language of :mod:`jumpchain.expr`."""
    from .expr import pair_expression
    f = pair_expression(text, dim)
    return JumpKernel(int(dim), f, symmetric=bool(symmetric), stationary=bool(stationary),
                      breaks=tuple(breaks), name="expression", params={"density": text})


# ---------------------------------------------------------------------------
# Levy-measure fields.

@dataclass(frozen=True)
class LevyMeasureField:
    """x -> (b(x), nu(x, dy)) with nu given by a density in the jump variable y."""

    dim: int
    density: Callable
    drift: Optional[Callable] = None
    tail: Optional[Callable] = None
    symmetric: bool = False
    stationary: bool = False
    breaks: tuple = ()
    name: str = "field"
    params: dict = field(default_factory=dict)

    def measure_density(self, x, y):
        x, y = _pair(x, y, self.dim)
        return np.asarray(self.density(x, y), dtype=float)

    def drift_at(self, x):
        if self.drift is None:
            raise ConfigError(f"field {self.name!r} has no drift; drift-type checks need one")
        x = as_points(x, self.dim)
        return np.asarray(self.drift(x), dtype=float).reshape(len(x), self.dim)

    def integrate(self, x, g, r_in=0.0, r_out=np.inf, spec=None):
        """int_{r_in<|y|<r_out} g(y) nu(x, dy) for a single point x."""
        x = as_points(x, self.dim)[0]

        def f(z):
            w = self.density(np.broadcast_to(x, z.shape), z)
            gv = np.asarray(g(z), dtype=float)
            return gv * w.reshape(w.shape + (1,) * (gv.ndim - 1))

        return shell_integral(f, self.dim, r_in, r_out, spec, self.breaks).value

    def tail_mass(self, x, r, spec=None):
        """nu(x, B_r(0)^c) per point x."""
        x = as_points(x, self.dim)
        if self.tail is not None:
            return np.asarray(self.tail(x, r), dtype=float) + np.zeros(len(x))
        one = lambda z: np.ones(len(z))
        return np.array([self.integrate(xi, one, r, np.inf, spec) for xi in x])


def _zero_drift(d):
    return lambda x: np.zeros((len(x), d))


def stable_field(alpha, dim=1):
    """Stationary field nu(dy) = gamma |y|^{-alpha-d} dy with zero drift."""
    d = int(dim)
    a = float(alpha)
    _check_index(a, "alpha")
    g = float(stable_constant(a, d))
    S = sphere_area(d)

    def density(x, y):
        r = np.linalg.norm(y, axis=1)
        with np.errstate(divide="ignore"):
            return np.where(r > 0, g * r ** (-a - d), 0.0)

    tail = lambda x, r: np.full(len(x), g * S * r ** (-a) / a)
    return LevyMeasureField(d, density, _zero_drift(d), tail, symmetric=True, stationary=True,
                            name="stable_field", params={"alpha": a})


def cauchy_field(dim=1):
    """Levy measure of the Cauchy process (1/(pi y^2) dy when d = 1)."""
    return stable_field(1.0, dim)


def stable_like_field(alpha, dim=1, normalized=True, probe_points=None):
    """nu(x, dy) = c(x) |y|^{-alpha(x)-d} dy with zero drift."""
    d = int(dim)
    probes = _default_probes(d) if probe_points is None else as_points(probe_points, d)
    _check_index(alpha(probes), "stability index alpha(x)")
    S = sphere_area(d)
    const = (lambda a: stable_constant(a, d)) if normalized else (lambda a: np.ones_like(a))

    def density(x, y):
        a = alpha(x)
        r = np.linalg.norm(y, axis=1)
        with np.errstate(divide="ignore"):
            return np.where(r > 0, const(a) * r ** (-a - d), 0.0)

    def tail(x, r):
        a = alpha(x)
        return const(a) * S * r ** (-a) / a

    return LevyMeasureField(d, density, _zero_drift(d), tail, symmetric=True, stationary=False,
                            name="stable_like_field",
                            params={"alpha": getattr(alpha, "source", "callable")})


def sde_field(phi, base, dim=1, probe_points=None, bounds=(1e-8, 1e8)):
    """Jump field of dX = phi(X-) dL for a symmetric Levy process L.

    ``base`` is a stationary symmetric :class:`LevyMeasureField` (or a plain
    density of y).  The result has density base(y/|phi(x)|) |phi(x)|^{-d}
    and zero drift.
    """
    d = int(dim)
    if not isinstance(base, LevyMeasureField):
        dens = base
        base = LevyMeasureField(d, lambda x, y: dens(y), _zero_drift(d), None,
                                symmetric=True, stationary=True, name="base")
    if not base.stationary:
        raise ConfigError("sde_field needs a stationary base measure")
    if not base.symmetric:
        raise ConfigError("sde_field needs a symmetric base measure")
    probes = _default_probes(d) if probe_points is None else as_points(probe_points, d)
    vals = np.abs(np.asarray(phi(probes), dtype=float))
    lo, hi = bounds
    if not np.all(np.isfinite(vals)) or vals.min() < lo or vals.max() > hi:
        raise ConfigError("phi must satisfy 0 < inf|phi| <= sup|phi| < inf at the probe points")

    def density(x, y):
        s = np.abs(phi(x))[:, None]
        return base.density(x, y / s) * s[:, 0] ** (-d)

    tail = None
    if base.tail is not None:
        def tail(x, r):
            s = np.abs(phi(x))
            return np.array([base.tail(xi[None, :], r / si)[0] for xi, si in zip(x, s)])

    return LevyMeasureField(d, density, _zero_drift(d), tail, symmetric=True, stationary=False,
                            name="sde_field", params={"phi": getattr(phi, "source", "callable"),
                                                      "base": base.name})


def expression_field(text, dim=1, symmetric=False, stationary=False, drift=None):
    """Field whose density is an expression in position ``x`` and jump ``y``."""
    from .expr import pair_expression, point_expression
    f = pair_expression(text, dim)
    drift_fn = None
    if drift is not None:
        comps = [point_expression(str(t), dim) for t in (drift if isinstance(drift, (list, tuple)) else [drift])]
        if len(comps) != dim:
            raise ConfigError("drift needs one expression per dimension")
        drift_fn = lambda x: np.stack([c(x) for c in comps], axis=1)
    return LevyMeasureField(int(dim), f, drift_fn, None, symmetric=bool(symmetric),
                            stationary=bool(stationary), name="expression", params={"density": text})


# ---------------------------------------------------------------------------
# Truncation functions.

@dataclass(frozen=True)
class TruncationFunction:
    func: Callable
    bound: float
    identity_radius: float
    symmetric: bool = True
    name: str = "truncation"

    def __call__(self, z):
        return np.asarray(self.func(np.asarray(z, dtype=float)), dtype=float)


def default_truncation(radius=1.0):
    """h(z) = z on |z| <= radius and radius z/|z| beyond."""
    R = float(radius)

    def h(z):
        r = np.linalg.norm(z, axis=1, keepdims=True)
        return np.where(r <= R, z, R * z / np.where(r > 0, r, 1.0))

    return TruncationFunction(h, R, R, True, "default")


def alpha0_estimate(k, probe_grid, quad=None):
    """sup over probes of int_{k_s != 0} k_a(x,y)^2 / k_s(x,y) dy.

    Raises :class:`~jumpchain.errors.QuadratureDivergence` when the shell
    contributions near the diagonal or at infinity do not decay.
    """
    probes = as_points(probe_grid, k.dim)
    if len(probes) == 0:
        raise ConfigError("probe grid must be nonempty")
    if k.symmetric:
        return 0.0
    if k.stationary:
        probes = probes[:1]
    best = 0.0
    for x in probes:
        def f(z, x=x):
            xs = np.broadcast_to(x, z.shape)
            kxy = k.density(xs, xs + z)
            kyx = k.density(xs + z, xs)
            ks = (kxy + kyx) / 2
            ka = (kxy - kyx) / 2
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(ks > 0, ka**2 / ks, 0.0)
        best = max(best, float(shell_integral(f, k.dim, 0.0, np.inf, quad, k.breaks).value))
    return best
