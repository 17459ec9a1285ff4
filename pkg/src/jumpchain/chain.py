"""Exact (Gillespie) simulation of the jump chain of a conductance matrix,
and pathwise modified characteristics.

A path at state a waits an exponential time with the full rate of the row
(in-window rates plus lost rate), then picks one stored offset, or the
far-tail bucket, with probability proportional to its rate.  Landing outside
the window absorbs the path.  Every path draws from its own counter-based
stream keyed by (seed, path index), so results do not depend on how paths
are split across threads.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, LatticeMismatch
from .lattice import LatticeFunction, round_index

__all__ = [
    "SimulationConfig", "PathSample", "EnsembleResult", "CharacteristicsTrace",
    "path_stream", "simulate_path", "simulate_ensemble", "characteristics_along_path",
]

_BLOCK = 64


@dataclass(frozen=True)
class SimulationConfig:
    """Horizon, ensemble size, seed and initial law of a simulation.

    The initial law is a point mass at the lattice point of ``x0`` unless
    ``initial_density`` (a callable on (N, d) points or a LatticeFunction)
    is given, in which case the start is drawn from its normalized lattice
    restriction.
    """

    horizon: float = 1.0
    n_paths: int = 1000
    seed: int = 0
    x0: tuple = (0.0,)
    initial_density: Optional[object] = None
    times: tuple = ()
    threads: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigError("simulation.T must be a positive finite number")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigError("simulation.n_paths must be an integer >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("simulation.seed must be a nonnegative integer")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ConfigError("threads must be an integer >= 1")
        for t in self.times:
            if not (0 <= t <= self.horizon):
                raise ConfigError(f"marginal time {t} outside [0, T]")

    @property
    def marginal_times(self):
        return tuple(sorted(set(float(t) for t in self.times))) or (float(self.horizon),)


def path_stream(seed, path_index):
    """Independent Philox stream for one path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PathSample:
    """One trajectory on [0, T].

    ``states[j]`` is the state entered at ``times[j]`` and ``offsets[j]`` the
    integer jump taken there.  An absorbing jump is recorded with state -1;
    ``far`` marks one that went beyond the stored reach (offset unknown).
    """

    lattice: object
    horizon: float
    initial: int
    times: np.ndarray
    states: np.ndarray
    offsets: np.ndarray
    absorbed: bool = False
    far: bool = False

    def __post_init__(self):
        t = self.times
        if len(t) and (t[0] <= 0 or np.any(np.diff(t) <= 0) or t[-1] > self.horizon):
            raise ValueError("jump times must be strictly increasing in (0, T]")
        body = self.states[:-1] if self.absorbed else self.states
        if self.initial < 0 or np.any(body < 0) or np.any(body >= len(self.lattice)):
            raise LatticeMismatch("path visits a state outside the window before absorption")

    @property
    def n_jumps(self):
        return len(self.times)

    def segments(self):
        """(start times, end times, states) of the holding segments up to T or absorption."""
        starts = np.concatenate([[0.0], self.times])
        states = np.concatenate([[self.initial], self.states]).astype(np.int64)
        ends = np.concatenate([self.times, [self.horizon]])
        if self.absorbed:
            starts, states, ends = starts[:-1], states[:-1], ends[:-1]
        return starts, ends, states

    def state_at(self, t):
        """State index at time t (-1 once absorbed)."""
        j = int(np.searchsorted(self.times, t, side="right"))
        return self.initial if j == 0 else int(self.states[j - 1])

    def jump_sizes(self):
        """|jump| of every recorded jump; inf for jumps beyond the reach."""
        s = np.linalg.norm(self.offsets, axis=1) / self.lattice.n
        if self.far:
            s[-1] = np.inf
        return s

    def to_csv(self, path):
        """time, x1..xd rows; an absorbing jump is written with NaN coordinates."""
        from .csvio import write_csv
        pts = self.lattice.points
        d = self.lattice.dim
        coords = np.vstack([pts[[self.initial]], np.where(
            (self.states >= 0)[:, None], pts[np.maximum(self.states, 0)], np.nan)])
        data = np.column_stack([np.concatenate([[0.0], self.times]), coords.reshape(-1, d)])
        return write_csv(path, ["time"] + [f"x{i + 1}" for i in range(d)], data)


class _Sampler:
    """Cumulative jump tables shared read-only between paths."""

    def __init__(self, C):
        if C.signed:
            raise ConfigError("cannot simulate a signed matrix")
        self.C = C
        self.lattice = C.lattice
        self.K = len(C.offsets)
        self.far = C.far_tail
        self._lookup = C.lattice._lookup
        self._extent = C.lattice.extent
        if C.stationary:
            self._stencil = np.cumsum(np.maximum(C.values, 0.0))
        self._rows = {}

    def cumulative(self, i):
        if self.C.stationary:
            return self._stencil
        c = self._rows.get(i)
        if c is None:
            c = np.cumsum(np.maximum(self.C.values[i], 0.0))
            self._rows[i] = c
        return c

    def target(self, i, j):
        m = self.lattice.indices[i] + self.C.offsets[j]
        if np.any(np.abs(m) > self._extent):
            return -1
        return int(self._lookup[tuple(m + self._extent)])


def _initial_probs(C, cfg):
    lat = C.lattice
    dens = cfg.initial_density
    if isinstance(dens, LatticeFunction):
        lat.check_same(dens.lattice)
        w = dens.values
    else:
        w = np.asarray(dens(lat.points), dtype=float).reshape(len(lat))
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ConfigError("initial density must be nonnegative with positive mass on the window")
    return np.cumsum(w / w.sum())


def _initial_state(C, cfg, rng, cum=None):
    if cfg.initial_density is None:
        x0 = np.asarray(cfg.x0, dtype=float).reshape(1, -1)
        if x0.shape[1] != C.dim:
            raise ConfigError(f"x0 needs {C.dim} coordinates")
        i = int(C.lattice.index_of(round_index(x0, C.n))[0])
        if i < 0:
            raise ConfigError("x0 lies outside the lattice window")
        return i
    cum = _initial_probs(C, cfg) if cum is None else cum
    return int(min(np.searchsorted(cum, rng.random(), side="right"), len(cum) - 1))


def _run(sampler, total, cfg, path_index, init_cum=None):
    rng = path_stream(cfg.seed, path_index)
    i = i0 = _initial_state(sampler.C, cfg, rng, init_cum)
    T = float(cfg.horizon)
    times, states, offs = [], [], []
    absorbed = far = False
    buf, k = rng.random(_BLOCK), 0
    t = 0.0
    while True:
        rate = total[i]
        if rate <= 0:
            break
        if k + 2 > _BLOCK:
            buf, k = rng.random(_BLOCK), 0
        u1, u2 = buf[k], buf[k + 1]
        k += 2
        t -= np.log1p(-u1) / rate
        if t > T:
            break
        cum = sampler.cumulative(i)
        j = int(np.searchsorted(cum, u2 * rate, side="right"))
        times.append(t)
        if j >= sampler.K:
            states.append(-1)
            offs.append(np.zeros(sampler.C.dim, dtype=np.int64))
            absorbed = far = True
            break
        b = sampler.target(i, j)
        states.append(b)
        offs.append(sampler.C.offsets[j])
        if b < 0:
            absorbed = True
            break
        i = b
    return PathSample(sampler.lattice, T, i0,
                      np.asarray(times, dtype=float), np.asarray(states, dtype=np.int64),
                      np.asarray(offs, dtype=np.int64).reshape(-1, sampler.C.dim), absorbed, far)


def simulate_path(C, cfg, path_index=0):
    """Simulate path ``path_index`` of the ensemble described by ``cfg``."""
    sampler = _Sampler(C)
    return _run(sampler, C.total_rate(), cfg, path_index)


@dataclass
class EnsembleResult:
    """Marginal states at the requested times plus per-path summaries."""

    lattice: object
    config: SimulationConfig
    times: tuple
    states: np.ndarray          # (n_paths, n_times), -1 once absorbed
    jump_counts: np.ndarray     # jumps on [0, T], absorbing jump included
    absorbed: np.ndarray        # bool per path
    initial: np.ndarray
    paths: Optional[list] = None

    @property
    def absorbed_fraction(self):
        return float(np.mean(self.absorbed))

    def marginal(self, k=-1):
        """Points (N_alive, d) of surviving paths at time index k."""
        s = self.states[:, k]
        return self.lattice.points[s[s >= 0]]

    def histogram(self, k=-1):
        """(state indices, counts) at time index k; absorbed paths omitted."""
        s = self.states[:, k]
        return np.unique(s[s >= 0], return_counts=True)

    def to_csv(self, out_dir, stem="ensemble"):
        """Write marginals (one row per path and time), histograms and jump statistics."""
        from pathlib import Path
        from .csvio import write_csv
        out = Path(out_dir)
        d = self.lattice.dim
        pts = self.lattice.points
        written = []
        for k, t in enumerate(self.times):
            s = self.states[:, k]
            coords = np.where((s >= 0)[:, None], pts[np.maximum(s, 0)], np.nan)
            rows = np.column_stack([np.arange(len(s)), np.full(len(s), t), coords, s < 0])
            tag = f"{stem}_t{t:g}"
            written.append(write_csv(out / f"{tag}_marginal.csv",
                                     ["path", "time"] + [f"x{i + 1}" for i in range(d)] + ["absorbed"], rows))
            idx, cnt = self.histogram(k)
            written.append(write_csv(out / f"{tag}_histogram.csv",
                                     [f"x{i + 1}" for i in range(d)] + ["count", "fraction"],
                                     np.column_stack([pts[idx].reshape(-1, d), cnt, cnt / len(s)])))
        jc = self.jump_counts
        written.append(write_csv(out / f"{stem}_summary.csv", ["quantity", "value"], [
            ["n_paths", len(jc)], ["horizon", self.config.horizon],
            ["mean_jumps", float(jc.mean())], ["var_jumps", float(jc.var())],
            ["max_jumps", int(jc.max())], ["absorbed_fraction", self.absorbed_fraction]]))
        return written


def simulate_ensemble(C, cfg, keep_paths=False):
    """Simulate ``cfg.n_paths`` independent paths; threads only change speed."""
    sampler = _Sampler(C)
    total = np.ascontiguousarray(C.total_rate())
    init_cum = _initial_probs(C, cfg) if cfg.initial_density is not None else None
    if not C.stationary:
        # fill row tables eagerly so worker threads only read shared state
        for i in range(len(C)):
            sampler.cumulative(i)
    times = cfg.marginal_times
    N = int(cfg.n_paths)

    def work(idx):
        return [_run(sampler, total, cfg, i, init_cum) for i in idx]

    chunks = np.array_split(np.arange(N), max(1, min(int(cfg.threads) * 4, N)))
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.threads)) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    paths = [p for part in parts for p in part]
    states = np.array([[p.state_at(t) for t in times] for p in paths], dtype=np.int64).reshape(N, len(times))
    return EnsembleResult(
        C.lattice, cfg, times, states,
        np.array([p.n_jumps for p in paths], dtype=np.int64),
        np.array([p.absorbed for p in paths], dtype=bool),
        np.array([p.initial for p in paths], dtype=np.int64),
        paths if keep_paths else None)


@dataclass
class CharacteristicsTrace:
    """B^n(h), A~^n(h), jump counts and compensators sampled on a time grid."""

    times: np.ndarray
    B: np.ndarray               # (T, d)
    A: np.ndarray               # (T, d, d)
    r_grid: np.ndarray
    counts: np.ndarray          # (T, R) jumps with |jump| > r on [0, t]
    compensator: np.ndarray     # (T, R) int_0^t sum_{|b|>r} C(X_s, X_s + b) ds
    meta: dict = field(default_factory=dict)

    def to_csv(self, out_dir, stem="characteristics"):
        from pathlib import Path
        from .csvio import write_csv
        out = Path(out_dir)
        d = self.B.shape[1]
        files = [write_csv(out / f"{stem}_B.csv", ["time"] + [f"B{i + 1}" for i in range(d)],
                           np.column_stack([self.times, self.B]))]
        names = [f"A{i + 1}{k + 1}" for i in range(d) for k in range(d)]
        files.append(write_csv(out / f"{stem}_A.csv", ["time"] + names,
                               np.column_stack([self.times, self.A.reshape(len(self.times), -1)])))
        rn = [f"{r:g}" for r in self.r_grid]
        files.append(write_csv(out / f"{stem}_N.csv", ["time"] + [f"N_gt_{r}" for r in rn],
                               np.column_stack([self.times, self.counts])))
        files.append(write_csv(out / f"{stem}_compensator.csv", ["time"] + [f"nu_gt_{r}" for r in rn],
                               np.column_stack([self.times, self.compensator])))
        return files


def _integrate_segments(starts, ends, rates, grid):
    """int_0^t rates(X_s) ds at each grid time for piecewise-constant rates."""
    lengths = ends - starts
    cum = np.concatenate([np.zeros((1,) + rates.shape[1:]), np.cumsum(lengths[(...,) + (None,) * (rates.ndim - 1)] * rates, axis=0)])
    k = np.searchsorted(starts, grid, side="right") - 1
    k = np.clip(k, 0, len(starts) - 1)
    dt = np.clip(grid - starts[k], 0.0, lengths[k])
    return cum[k] + dt[(...,) + (None,) * (rates.ndim - 1)] * rates[k]


def characteristics_along_path(path, C, h, time_grid=None, r_grid=(0.5, 1.0, 2.0), t_start=0.0):
    """Exact characteristics of one path.

    Between jumps the integrands are row functionals of the current state,
    so each integral is a sum of segment length times row functional.
    ``time_grid`` defaults to 64 uniform points on [0, T] plus the jump times.
    Values are accumulated from ``t_start``.
    """
    C.lattice.check_same(path.lattice)
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid >= C.reach):
        raise ConfigError(f"r grid must stay below the stored reach {C.reach:g}")
    T = path.horizon
    if time_grid is None:
        time_grid = np.union1d(np.linspace(0.0, T, 64), path.times)
    grid = np.asarray(time_grid, dtype=float)
    if np.any(np.diff(grid) < 0) or grid[0] < t_start or grid[-1] > T:
        raise ConfigError("time grid must be sorted within [t_start, T]")
    d = C.dim
    hB = C.row_functional(lambda z: h(z))
    hA = C.row_functional(lambda z: h(z)[:, :, None] * h(z)[:, None, :])
    tails = C.row_functional(lambda z: (np.linalg.norm(z, axis=1)[:, None] > r_grid[None, :]).astype(float))
    tails = tails + C.far_tail[:, None]
    starts, ends, states = path.segments()
    starts = np.maximum(starts, t_start)
    ends = np.maximum(ends, t_start)
    B = _integrate_segments(starts, ends, hB[states].reshape(-1, d), grid)
    A = _integrate_segments(starts, ends, hA[states].reshape(-1, d, d), grid)
    comp = _integrate_segments(starts, ends, tails[states], grid)
    big = path.jump_sizes()[:, None] > r_grid[None, :]
    big &= (path.times > t_start)[:, None]
    cum = np.vstack([np.zeros((1, len(r_grid)), dtype=np.int64), np.cumsum(big, axis=0)])
    counts = cum[np.searchsorted(path.times, grid, side="right")]
    return CharacteristicsTrace(grid, B, A, r_grid, counts, comp,
                                {"n": C.n, "h": getattr(h, "name", "h"), "t_start": t_start})
