"""Matplotlib figures written next to the CSV outputs (Agg backend, PNG)."""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_sweep", "plot_marginal", "plot_characteristics", "plot_semigroup_errors",
           "plot_stencil"]


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_sweep(table, path):
    """Distances against n on log-log axes, with the KS noise floor when present."""
    rows = table.rows
    n = np.array([r["n"] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for key, label in (("ks", "KS distance"), ("cf_sup", "sup |CF - target|"),
                       ("ks_prev", "KS to previous n"), ("semigroup_error", "semigroup L2 error")):
        vals = [r.get(key) for r in rows]
        if any(v is not None for v in vals):
            v = np.array([np.nan if x is None else x for x in vals], dtype=float)
            ax.loglog(n, v, "o-", label=label)
    floor = [r.get("ks_floor") for r in rows]
    if any(f is not None for f in floor):
        ax.loglog(n, np.array(floor, dtype=float), "k--", lw=0.8, label="KS noise floor (99%)")
    ax.set_xlabel("n")
    ax.set_xticks(n, [f"{int(v)}" for v in n])
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_marginal(sample, path, cdf=None, label="reference", clip=10.0):
    """Empirical CDF of a 1-d sample against an optional reference CDF."""
    x = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    fig, ax = plt.subplots(figsize=(5, 3.6))
    F = np.arange(1, len(x) + 1) / len(x)
    ax.step(x, F, where="post", label="empirical")
    if cdf is not None:
        g = np.linspace(-clip, clip, 801)
        ax.plot(g, cdf(g), "k--", lw=1, label=label)
    ax.set_xlim(-clip, clip)
    ax.set_xlabel("x")
    ax.set_ylabel("CDF")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_characteristics(trace, path):
    """B(h), diagonal of A~(h) and jump counts along one path."""
    fig, axes = plt.subplots(3, 1, figsize=(5, 6.5), sharex=True)
    t = trace.times
    axes[0].plot(t, trace.B)
    axes[0].set_ylabel("B(h)")
    axes[1].plot(t, np.diagonal(trace.A, axis1=1, axis2=2))
    axes[1].set_ylabel("diag A(h)")
    for j, r in enumerate(trace.r_grid):
        axes[2].step(t, trace.counts[:, j], where="post", label=f"|jump| > {r:g}")
        axes[2].plot(t, trace.compensator[:, j], ":", color=f"C{j}")
    axes[2].set_ylabel("count / compensator")
    axes[2].set_xlabel("t")
    axes[2].legend(fontsize=7)
    return _save(fig, path)


def plot_semigroup_errors(ns, errors, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(ns, errors, "o-")
    ax.set_xlabel("n")
    ax.set_ylabel("L2 error")
    ax.set_xticks(ns, [f"{int(v)}" for v in ns])
    return _save(fig, path)


def plot_stencil(C, path, row=None):
    """Rates of one row against the jump size (log scale)."""
    if C.dim != 1:
        return None
    v = C.values if C.stationary else C.values[len(C) // 2 if row is None else row]
    z = C.jumps()[:, 0]
    keep = v > 0
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.semilogy(z[keep], v[keep], ".", ms=2)
    ax.set_xlabel("jump b")
    ax.set_ylabel("C(a, a + b)")
    return _save(fig, path)
