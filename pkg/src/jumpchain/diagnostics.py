"""Weak-convergence diagnostics: empirical characteristic functions,
Kolmogorov-Smirnov distances to the Cauchy law and sweeps over n.

Sweeps judge decay against the Monte Carlo noise floor: between successive
n the distance must either drop by more than the floor or already sit
inside it.
"""
from dataclasses import dataclass, field
import math
import time
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .chain import SimulationConfig, simulate_ensemble
from .discretize import (DIRICHLET, build_dirichlet_conductances, build_measure_conductances,
                         default_window_radius)
from .errors import ConfigError, JumpchainError
from .forms import alpha0_n
from .lattice import Lattice

__all__ = [
    "CFReport", "KSResult", "empirical_cf", "cauchy_cf", "ks_against_cauchy", "ks_noise_floor",
    "decays_outside_noise", "PipelineConfig", "SweepTable", "convergence_sweep",
]


@dataclass(frozen=True)
class CFReport:
    xi: np.ndarray
    cf: np.ndarray              # complex
    half_re: np.ndarray         # CI half-widths of real and imaginary parts
    half_im: np.ndarray
    level: float
    n_samples: int
    target: Optional[np.ndarray] = None

    def with_target(self, target):
        return CFReport(self.xi, self.cf, self.half_re, self.half_im, self.level,
                        self.n_samples, np.asarray(target, dtype=complex))

    @property
    def discrepancy(self):
        if self.target is None:
            raise ValueError("no target attached")
        return np.abs(self.cf - self.target)

    @property
    def sup_discrepancy(self):
        return float(np.max(self.discrepancy))

    def within_ci(self):
        """Per xi: both real and imaginary parts of the target inside the CI."""
        d = self.cf - self.target
        return (np.abs(d.real) <= self.half_re) & (np.abs(d.imag) <= self.half_im)


def empirical_cf(sample, xi_grid, level=0.99, target=None):
    """(1/N) sum exp(i <xi, X_j>) with normal-approximation confidence intervals."""
    X = np.asarray(sample, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N = len(X)
    if N == 0:
        raise ValueError("empirical CF of an empty sample")
    xi = np.asarray(xi_grid, dtype=float)
    xi2 = xi.reshape(len(xi), -1) if xi.ndim > 1 or X.shape[1] == 1 else xi[None, :]
    if xi2.shape[1] != X.shape[1]:
        raise ValueError("xi grid dimension differs from the sample's")
    phase = X @ xi2.T                                   # (N, m)
    c, s = np.cos(phase), np.sin(phase)
    cf = c.mean(axis=0) + 1j * s.mean(axis=0)
    z = stats.norm.ppf(0.5 + level / 2)
    half_re = z * c.std(axis=0) / math.sqrt(N)
    half_im = z * s.std(axis=0) / math.sqrt(N)
    rep = CFReport(xi, cf, half_re, half_im, level, N)
    return rep if target is None else rep.with_target(target)


def cauchy_cf(xi, t, location=0.0):
    """exp(i location xi - t |xi|)."""
    xi = np.asarray(xi, dtype=float)
    return np.exp(1j * location * xi - t * np.abs(xi))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    n_samples: int
    noise_floor: float
    threshold: Optional[float]

    @property
    def passed(self):
        if self.threshold is not None:
            return self.statistic < self.threshold
        return self.statistic <= self.noise_floor


def ks_noise_floor(n_samples, level=0.99):
    """Critical value of the one-sample KS statistic at the given level."""
    return float(stats.kstwo.ppf(level, int(n_samples)))


def ks_against_cauchy(sample, t, location=0.0, threshold=None, level=0.99):
    """KS distance of a 1-d sample to the Cauchy law with scale t."""
    x = np.asarray(sample, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("KS test of an empty sample")
    if not t > 0:
        raise ValueError("Cauchy scale t must be positive")
    res = stats.kstest(x, stats.cauchy(loc=location, scale=t).cdf)
    return KSResult(float(res.statistic), float(res.pvalue), x.size,
                    ks_noise_floor(x.size, level), threshold)


def decays_outside_noise(values, floors):
    """Each step either drops by more than the floor or ends inside it."""
    for i in range(len(values) - 1):
        a, b, fb = values[i], values[i + 1], floors[i + 1]
        if not (b <= fb or a - b > max(floors[i], fb)):
            return False
    return True


# ---------------------------------------------------------------------------
# Sweeps.

@dataclass
class PipelineConfig:
    """Everything a sweep needs apart from n.

    ``source`` is a kernel (cell-averaged scheme) or a Levy-measure field
    (measure scheme).  ``reference`` is "cauchy" for an exact Cauchy
    marginal with scale T, or None for self-consistency between successive n.
    """

    source: object
    scheme: str = DIRICHLET
    p: float = 0.5
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    xi: tuple = (0.5, 1.0, 2.0)
    reference: Optional[str] = "cauchy"
    window_radius: Optional[float] = None
    level: float = 0.99
    quad: object = None
    semigroup: Optional[Callable] = None     # C -> SemigroupError
    alpha0: bool = False
    hook: Optional[Callable] = None          # (n, C, ensemble) -> dict of extra columns


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)
    failure: Optional[str] = None
    ensembles: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)   # wall-clock seconds, kept out of the CSV

    def column(self, key):
        return [r.get(key) for r in self.rows]

    def ks_decays(self):
        return decays_outside_noise(self.column("ks"), self.column("ks_floor"))

    def to_csv(self, path):
        from .csvio import write_records
        return write_records(path, self.rows)


def build_matrix(cfg, n):
    """Conductances of ``cfg.source`` at n on the configured or default window."""
    R = cfg.window_radius
    if R is None:
        R, _ = default_window_radius(cfg.source, n, cfg.p, cfg.scheme, quad=cfg.quad)
    lat = Lattice(n, cfg.source.dim, R)
    if cfg.scheme == DIRICHLET:
        return build_dirichlet_conductances(cfg.source, lat, cfg.p, cfg.quad)
    return build_measure_conductances(cfg.source, lat, cfg.p, cfg.quad)


def convergence_sweep(cfg, n_list, keep_ensembles=False):
    """One row per n: window, absorption, CF and KS distances, optional extras.

    A failing stage stops the sweep; the rows computed so far are kept and
    the error is recorded in ``failure``.
    """
    if not n_list:
        raise ConfigError("sweep needs at least one n")
    table = SweepTable()
    prev = None
    sim = cfg.simulation
    t = sim.horizon
    for n in n_list:
        try:
            t0 = time.perf_counter()
            C = build_matrix(cfg, n)
            ens = simulate_ensemble(C, sim)
            X = ens.marginal(-1)
            row = {"n": n, "R_w": C.lattice.window_radius, "states": len(C), "p": cfg.p,
                   "scheme": cfg.scheme, "n_paths": sim.n_paths,
                   "absorbed_fraction": ens.absorbed_fraction,
                   "mean_jumps": float(ens.jump_counts.mean())}
            if len(X) == 0:
                raise JumpchainError("every path was absorbed")
            if cfg.reference == "cauchy":
                if C.dim != 1:
                    raise ConfigError("the Cauchy reference needs d = 1")
                cf = empirical_cf(X, cfg.xi, cfg.level, cauchy_cf(cfg.xi, t))
                ks = ks_against_cauchy(X[:, 0], t, 0.0, level=cfg.level)
                row.update({"ks": ks.statistic, "ks_pvalue": ks.pvalue, "ks_floor": ks.noise_floor,
                            "cf_sup": cf.sup_discrepancy,
                            "cf_in_ci": int(np.all(cf.within_ci()))})
                for x, v, hw in zip(cfg.xi, cf.cf, cf.half_re):
                    row[f"cf_re_{x:g}"] = float(v.real)
                    row[f"cf_half_{x:g}"] = float(hw)
            else:
                cf = empirical_cf(X, cfg.xi, cfg.level)
                for x, v in zip(cfg.xi, cf.cf):
                    row[f"cf_re_{x:g}"] = float(v.real)
                if prev is not None and C.dim == 1:
                    r2 = stats.ks_2samp(prev[:, 0], X[:, 0])
                    row["ks_prev"] = float(r2.statistic)
                    row["ks_prev_pvalue"] = float(r2.pvalue)
                prev = X
            if cfg.alpha0:
                row["alpha0_n"] = alpha0_n(C)
            if cfg.semigroup is not None:
                se = cfg.semigroup(C)
                row.update({"semigroup_error": se.error, "semigroup_leakage": se.leakage})
            if cfg.hook is not None:
                row.update(cfg.hook(n, C, ens))
            table.timings[n] = time.perf_counter() - t0
            table.rows.append(row)
            if keep_ensembles:
                table.ensembles[n] = ens
        except (JumpchainError, ValueError, ArithmeticError) as exc:
            table.failure = f"n={n}: {type(exc).__name__}: {exc}"
            break
    return table
