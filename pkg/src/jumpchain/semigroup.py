"""Chain semigroups by uniformization, and reference semigroups of Levy limits."""
from dataclasses import dataclass
import math

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from .errors import ConfigError, NumericalError
from .lattice import LatticeFunction, restrict, strong_convergence_error


class GeneratorOperator:
    """G = C - diag(kept + lost) on the window; jumps out of the window kill.

    Off-diagonal entries are the in-window rates, so row sums equal minus the
    lost rate.  ``uniformization`` is 1.01 times the largest total rate.
    """

    def __init__(self, C=None, rate_factor=1.01, *, matvec=None, diagonal=None, lattice=None):
        if C is not None:
            self.C = C
            self.lattice = C.lattice
            self._offdiag = C.matvec
            self.diagonal = -C.total_rate()
        else:
            self.C = None
            self.lattice = lattice
            self._offdiag = matvec
            self.diagonal = np.asarray(diagonal, dtype=float)
        self.uniformization = rate_factor * float(np.max(-self.diagonal, initial=0.0))

    @classmethod
    def from_rate_matrix(cls, Q, rate_factor=1.01):
        """Generator from an explicit rate matrix with nonnegative off-diagonal entries."""
        Q = sparse.csr_matrix(Q, dtype=float)
        diag = Q.diagonal()
        off = Q - sparse.diags(diag)
        if off.nnz and off.data.min() < 0:
            raise ConfigError("off-diagonal rates must be nonnegative")
        if np.any(np.asarray(Q.sum(axis=1)).ravel() > 1e-12 * max(1.0, abs(diag).max(initial=0))):
            raise ConfigError("row sums of a rate matrix must be <= 0")
        return cls(matvec=lambda v: off @ v, diagonal=diag, rate_factor=rate_factor)

    def __len__(self):
        return len(self.diagonal)

    def apply(self, v):
        return self._offdiag(v) + self.diagonal * v


def apply_semigroup(G, f, t, tol=1e-12, max_terms=1_000_000):
    """e^{tG} f by uniformization.

    With L = G.uniformization and P = I + G/L, the series
    e^{-Lt} sum_j (Lt)^j / j! P^j f is cut once the Poisson tail times
    ||f||_inf drops below ``tol``.
    """
    if t < 0:
        raise ConfigError("t must be >= 0")
    is_lf = isinstance(f, LatticeFunction)
    v = np.asarray(f.values if is_lf else f, dtype=float).copy()
    wrap = (lambda x: LatticeFunction(f.lattice, x)) if is_lf else (lambda x: x)
    Lam = G.uniformization
    if t == 0 or Lam == 0:
        return wrap(v)
    lam = Lam * t
    fmax = float(np.max(np.abs(v), initial=0.0))
    if fmax == 0:
        return wrap(v)
    J = int(poisson.isf(tol / fmax, lam)) + 1
    while poisson.sf(J, lam) * fmax > tol:
        J += 1
    if J > max_terms:
        raise NumericalError(f"uniformization needs {J} terms (cap {max_terms})")
    weights = poisson.pmf(np.arange(J + 1), lam)
    acc = weights[0] * v
    for j in range(1, J + 1):
        v = v + G.apply(v) / Lam
        acc += weights[j] * v
    return wrap(acc)


# ---------------------------------------------------------------------------
# Reference semigroups.

@dataclass(frozen=True)
class CauchyDensity:
    """Density of the Cauchy law with the given scale and location (d = 1)."""

    scale: float = 1.0
    location: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float).reshape(len(x), -1)[:, 0]
        s = self.scale
        return s / (math.pi * (s**2 + (x - self.location) ** 2))


@dataclass(frozen=True)
class GaussianDensity:
    """Isotropic normal density with standard deviation ``sigma``."""

    sigma: float = 1.0
    dim: int = 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float).reshape(len(x), self.dim)
        s2 = self.sigma**2
        return np.exp(-(x**2).sum(axis=1) / (2 * s2)) / (2 * math.pi * s2) ** (self.dim / 2)


def _cauchy_closure(f, t):
    if isinstance(f, CauchyDensity):
        return CauchyDensity(f.scale + t, f.location)
    return None


class ReferenceSemigroup:
    """Convolution semigroup with Levy symbol psi: (P_t f)^ = e^{-t psi} f^.

    ``closures`` are callables (f, t) -> function or None, tried in order
    before falling back on spectral quadrature.
    """

    def __init__(self, symbol, dim=1, closures=(), name="levy", grid_extent=1000.0,
                 grid_points=1 << 18):
        self.symbol = symbol
        self.dim = int(dim)
        self.closures = tuple(closures)
        self.name = name
        self.grid_extent = float(grid_extent)
        self.grid_points = int(grid_points)
        if abs(float(np.asarray(symbol(np.zeros((1, self.dim))))[0])) > 1e-12:
            raise ConfigError("a Levy symbol must vanish at 0")

    def closure(self, f, t):
        for c in self.closures:
            g = c(f, t)
            if g is not None:
                return g
        return None

    def function(self, f, t):
        """P_t f as a callable on (N, d) arrays (closure or spectral interpolant)."""
        if t == 0:
            return f
        g = self.closure(f, t)
        if g is not None:
            return g
        return self.spectral(f, t)[0]

    def spectral(self, f, t, extent=None, points=None):
        """Spectral evaluation on a periodic grid; returns (callable, error estimate).

        The error estimate is the larger of the changes seen when the grid
        spacing is doubled and when the extent is halved.
        """
        if self.dim != 1:
            raise NumericalError("spectral fallback implemented for d = 1 only")
        L = extent or self.grid_extent
        N = points or self.grid_points

        def run(L, N):
            x = -L + 2 * L * np.arange(N) / N
            fx = np.asarray(f(x[:, None]), dtype=float)
            xi = 2 * np.pi * np.fft.fftfreq(N, d=2 * L / N)
            mult = np.exp(-t * np.asarray(self.symbol(xi[:, None]), dtype=float))
            return x, np.real(np.fft.ifft(np.fft.fft(fx) * mult))

        x, u = run(L, N)
        _, coarse = run(L, N // 2)
        xs, short = run(L / 2, N // 2)
        mid = (x >= -L / 2) & (x < L / 2)
        err = max(float(np.max(np.abs(u[::2] - coarse))), float(np.max(np.abs(u[mid] - short))))

        def g(z):
            z = np.asarray(z, dtype=float).reshape(len(z), -1)[:, 0]
            return np.interp(z, x, u, left=0.0, right=0.0)

        return g, err

    def apply(self, f, t, x_grid):
        x = np.asarray(x_grid, dtype=float).reshape(-1, self.dim)
        if t == 0:
            return np.asarray(f(x), dtype=float)
        return np.asarray(self.function(f, t)(x), dtype=float)


def stable_semigroup(alpha, dim=1):
    """Reference semigroup with symbol |xi|^alpha; Cauchy closure for alpha = 1, d = 1."""
    a = float(alpha)
    closures = (_cauchy_closure,) if (a == 1.0 and dim == 1) else ()
    return ReferenceSemigroup(lambda xi: np.linalg.norm(xi, axis=1) ** a, dim, closures,
                              name=f"stable({a:g})")


def reference_apply(P, f, t, x_grid):
    """Values of P_t f on ``x_grid``."""
    return P.apply(f, t, x_grid)


LEAK_BUDGET = 1e-3


@dataclass(frozen=True)
class SemigroupError:
    n: int
    t: float
    error: float
    inside: float
    leakage: float

    def __float__(self):
        return self.error

    @property
    def leaking(self):
        """True when the part of P_t f outside the window exceeds the leak budget."""
        return self.leakage >= LEAK_BUDGET


def strong_semigroup_error(C, f, t, P_ref, tol=1e-12, q=3):
    """||e_n P^n_t r_n f - P_t f||_{L^2}, with the window leakage split off."""
    G = GeneratorOperator(C)
    fn = restrict(f, C.lattice, q)
    un = apply_semigroup(G, fn, t, tol)
    ref = P_ref.function(f, t)
    e = strong_convergence_error(un, ref)
    return SemigroupError(C.n, float(t), e.error, e.inside, e.leakage)
