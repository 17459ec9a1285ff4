"""Command-line front end.

    jumpchain {discretize,simulate,check,semigroup,sweep} [--config PATH] [--out DIR]
              [--seed N] [--threads N] [--matrix FILE]
    jumpchain --print-defaults

Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 I/O error.
Every run writes ``config.yaml`` (the resolved configuration) and
``manifest.json`` (inputs, outputs, hashes and versions) into the output
directory.
"""
import argparse
from dataclasses import replace
import hashlib
import json
import logging
from pathlib import Path
import platform
import sys

import numpy as np

from . import __version__
from .config import RunConfig, default_yaml, load_config, make_source, resolved_p
from .csvio import write_records
from .discretize import (DIRICHLET, build_dirichlet_conductances, build_measure_conductances,
                         default_window_radius, load_conductances)
from .errors import ConfigError, JumpchainError, LatticeMismatch, NumericalError
from .lattice import Lattice

log = logging.getLogger("jumpchain")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Output directory bookkeeping shared by the commands."""

    def __init__(self, cfg, args):
        self.cfg = cfg
        self.args = args
        self.out = Path(cfg.output.dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.inputs = []

    def path(self, name):
        return self.out / name

    def wrote(self, *paths):
        for p in paths:
            if p is not None:
                self.outputs.append(Path(p))

    def input(self, path):
        self.inputs.append(Path(path))

    def finish(self, command):
        cfg_path = self.path("config.yaml")
        cfg_path.write_text(self.cfg.to_yaml())
        self.wrote(cfg_path)
        import matplotlib
        import scipy
        import yaml
        manifest = {
            "command": command,
            "argv": sys.argv[1:],
            "jumpchain": __version__,
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "matplotlib": matplotlib.__version__,
                         "pyyaml": yaml.__version__},
            "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in self.inputs],
            "outputs": [{"path": str(p.relative_to(self.out)) if p.is_relative_to(self.out) else str(p),
                         "sha256": _sha256(p), "bytes": p.stat().st_size}
                        for p in sorted(set(self.outputs))],
        }
        self.path("manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _suffix(cfg, n):
    return f"_n{n}" if len(cfg.lattice.n_list) > 1 else ""


def build_matrix(cfg, source, n):
    """Conductance matrix of the configured source at lattice parameter n."""
    quad = cfg.quadrature.spec()
    scheme, p = cfg.scheme.name, resolved_p(cfg)
    R = cfg.lattice.window_radius
    capped = False
    if R is None:
        R, capped = default_window_radius(source, n, p, scheme, quad=quad)
    lat = Lattice(n, source.dim, R)
    build = build_dirichlet_conductances if scheme == DIRICHLET else build_measure_conductances
    C = build(source, lat, p, quad, cfg.lattice.reach)
    if capped:
        C.stats.notes.append("window radius hit the cap")
    return C


def _matrices(cfg, args, run):
    """(n, matrix) pairs: the --matrix file, or one build per configured n."""
    if args.matrix:
        run.input(args.matrix)
        C = load_conductances(args.matrix)
        return [(C.n, C)]
    source = make_source(cfg)
    return [(n, build_matrix(cfg, source, n)) for n in cfg.lattice.n_list]


# ---------------------------------------------------------------------------
# Commands.

def cmd_discretize(cfg, args, run):
    from .forms import alpha0_n
    source = make_source(cfg)
    rows = []
    for n in cfg.lattice.n_list:
        C = build_matrix(cfg, source, n)
        sfx = _suffix(cfg, n)
        path = run.path(f"conductance{sfx}.npz")
        C.save(path)
        run.wrote(path)
        if cfg.output.export_triplets:
            run.wrote(C.export_triplets(run.path(f"conductance{sfx}_triplets.csv")))
        total, lost = C.total_rate(), C.lost_rate()
        row = {**C.header(), "states": len(C), "offsets": len(C.offsets),
               "max_rate": float(total.max()), "max_lost": float(lost.max()),
               "mean_lost": float(lost.mean()), "max_far_tail": float(C.far_tail.max()),
               "alpha0_n": alpha0_n(C), "nonconverged": C.stats.nonconverged,
               "clamped": C.stats.clamped, "pruned_entries": C.stats.pruned_entries,
               "notes": "; ".join(C.stats.notes)}
        row.pop("format")
        rows.append(row)
        print(f"n={n}: {len(C)} states, R_w={C.lattice.window_radius:g}, "
              f"max rate {row['max_rate']:.6g}, alpha0_n {row['alpha0_n']:.6g}, "
              f"max lost {row['max_lost']:.3g}")
        if cfg.output.plots:
            from .plotting import plot_stencil
            run.wrote(plot_stencil(C, run.path(f"stencil{sfx}.png")))
    run.wrote(write_records(run.path("discretize_summary.csv"), rows))


def _sim_config(cfg, threads):
    s = cfg.simulation
    from .chain import SimulationConfig
    dens = None
    if s.initial_density:
        from .expr import point_expression
        dens = point_expression(s.initial_density, cfg.kernel.dim)
    return SimulationConfig(s.T, s.n_paths, s.seed, tuple(s.x0), dens, tuple(s.times), threads)


def _cauchy_reference(cfg):
    ref = cfg.diagnostics.reference
    if ref == "auto":
        return cfg.kernel.family == "cauchy" and cfg.kernel.dim == 1
    return ref == "cauchy"


def cmd_simulate(cfg, args, run):
    from .chain import characteristics_along_path, simulate_ensemble, simulate_path
    from .diagnostics import cauchy_cf, empirical_cf, ks_against_cauchy
    from .kernel import default_truncation
    sim = _sim_config(cfg, cfg.threads)
    h = default_truncation(cfg.truncation.radius)
    for n, C in _matrices(cfg, args, run):
        sfx = _suffix(cfg, n) if not args.matrix else ""
        ens = simulate_ensemble(C, sim)
        run.wrote(*ens.to_csv(run.out, f"ensemble{sfx}"))
        rows = []
        for k, t in enumerate(ens.times):
            X = ens.marginal(k)
            row = {"n": n, "time": t, "alive": len(X), "absorbed_fraction":
                   float(np.mean(ens.states[:, k] < 0))}
            if _cauchy_reference(cfg) and len(X) and t > 0:
                cf = empirical_cf(X, cfg.diagnostics.xi, cfg.diagnostics.level,
                                  cauchy_cf(cfg.diagnostics.xi, t))
                ks = ks_against_cauchy(X[:, 0], t, threshold=cfg.diagnostics.ks_threshold,
                                       level=cfg.diagnostics.level)
                row.update({"ks": ks.statistic, "ks_floor": ks.noise_floor, "ks_pass": ks.passed,
                            "cf_sup": cf.sup_discrepancy, "cf_in_ci": bool(np.all(cf.within_ci()))})
            rows.append(row)
        run.wrote(write_records(run.path(f"diagnostics{sfx}.csv"), rows))
        r_grid = [r for r in (0.5, 1.0, 2.0) if r < C.reach]
        for i in range(min(cfg.simulation.trace_paths, cfg.simulation.n_paths)):
            path = simulate_path(C, sim, i)
            run.wrote(path.to_csv(run.path(f"path{sfx}_{i}.csv")))
            tr = characteristics_along_path(path, C, h, r_grid=r_grid)
            run.wrote(*tr.to_csv(run.out, f"characteristics{sfx}_{i}"))
            if cfg.output.plots and i == 0:
                from .plotting import plot_characteristics
                run.wrote(plot_characteristics(tr, run.path(f"characteristics{sfx}_{i}.png")))
        if cfg.output.plots and C.dim == 1:
            from .plotting import plot_marginal
            from scipy import stats
            T = ens.times[-1]
            cdf = stats.cauchy(scale=T).cdf if _cauchy_reference(cfg) else None
            run.wrote(plot_marginal(ens.marginal(-1), run.path(f"marginal{sfx}.png"), cdf,
                                    f"Cauchy(t={T:g})"))
        print(f"n={n}: {sim.n_paths} paths, absorbed fraction {ens.absorbed_fraction:.4g}, "
              f"mean jumps {ens.jump_counts.mean():.4g}")


def cmd_check(cfg, args, run):
    from . import conditions as cond
    from .kernel import default_truncation
    cc = cfg.conditions
    quad = cfg.quadrature.spec()
    source = make_source(cfg)
    d = cfg.kernel.dim
    probes = np.asarray(cc.probes, dtype=float).reshape(-1, d)
    thr = cc.thresholds
    if cc.discrete and not args.matrix:
        raise ConfigError("discrete checks need --matrix (or set conditions.discrete: false)")
    report = cond.ConditionReport()
    if cfg.scheme.name == DIRICHLET:
        report.extend(cond.check_dirichlet_route(source, cc.rho, probes, quad, cc.r_grid,
                                                 cc.eps_grid, thr))
    else:
        for rho in cc.rho:
            report.extend(cond.check_TS_family(source, rho, resolved_p(cfg), probes, quad,
                                               cc.r_grid, thresholds=thr))
    if args.matrix:
        run.input(args.matrix)
        C = load_conductances(args.matrix)
        if C.dim != d:
            raise LatticeMismatch("matrix dimension differs from kernel.dim")
        for rho in cc.rho:
            report.extend(cond.check_T3toT6(C, rho, [r for r in cc.r_grid if r < C.reach], thr))
        if cfg.scheme.name == DIRICHLET:
            report.extend(cond.check_C2_C3_C4(source, C, cc.rho, probes, quad, thr))
        else:
            inside = probes[np.linalg.norm(probes, axis=1) <= cc.probe_radius + 1e-12]
            h = default_truncation(cfg.truncation.radius)
            report.extend(cond.check_semimartingale_route(
                source, C, h, cc.probe_radius, inside, quad, cc.bumps, thr,
                drift=source.drift is not None))
    run.wrote(report.to_csv(run.path("conditions.csv")))
    text = report.summary()
    p = run.path("conditions.txt")
    p.write_text(text + "\n")
    run.wrote(p)
    print(text)


def _initial_function(cfg):
    from .semigroup import CauchyDensity, GaussianDensity
    init = cfg.semigroup.initial
    if init == "cauchy":
        if cfg.kernel.dim != 1:
            raise ConfigError("semigroup.initial 'cauchy' is one-dimensional")
        return CauchyDensity(1.0)
    if init == "gaussian":
        return GaussianDensity(1.0, cfg.kernel.dim)
    from .expr import point_expression
    return point_expression(init, cfg.kernel.dim)


def cmd_semigroup(cfg, args, run):
    from .semigroup import stable_semigroup, strong_semigroup_error
    fam = cfg.kernel.family
    if fam not in ("cauchy", "stable"):
        raise ConfigError("semigroup errors need an exact reference: kernel.family cauchy or stable")
    alpha = 1.0 if fam == "cauchy" else float(cfg.kernel.alpha)
    P = stable_semigroup(alpha, cfg.kernel.dim)
    f = _initial_function(cfg)
    rows = []
    for n, C in _matrices(cfg, args, run):
        e = strong_semigroup_error(C, f, cfg.semigroup.t, P, cfg.semigroup.tol)
        rows.append({"n": n, "t": e.t, "error": e.error, "inside": e.inside,
                     "leakage": e.leakage, "R_w": C.lattice.window_radius, "states": len(C)})
        print(f"n={n}: L2 error {e.error:.6g} (leakage {e.leakage:.3g})")
    run.wrote(write_records(run.path("semigroup.csv"), rows))
    if cfg.output.plots and len(rows) > 1:
        from .plotting import plot_semigroup_errors
        run.wrote(plot_semigroup_errors([r["n"] for r in rows], [r["error"] for r in rows],
                                        run.path("semigroup.png")))


def cmd_sweep(cfg, args, run):
    from .diagnostics import PipelineConfig, convergence_sweep
    source = make_source(cfg)
    pipe = PipelineConfig(source, cfg.scheme.name, resolved_p(cfg), _sim_config(cfg, cfg.threads),
                          tuple(cfg.diagnostics.xi),
                          "cauchy" if _cauchy_reference(cfg) else None,
                          cfg.lattice.window_radius, cfg.diagnostics.level,
                          cfg.quadrature.spec(), alpha0=cfg.scheme.name == DIRICHLET)
    table = convergence_sweep(pipe, cfg.lattice.n_list)
    run.wrote(table.to_csv(run.path("sweep.csv")))
    if cfg.output.plots and table.rows:
        from .plotting import plot_sweep
        run.wrote(plot_sweep(table, run.path("sweep.png")))
    for r in table.rows:
        extra = f", KS {r['ks']:.4g} (floor {r['ks_floor']:.4g})" if "ks" in r else ""
        print(f"n={r['n']}: absorbed {r['absorbed_fraction']:.4g}{extra}")
    if "ks" in (table.rows[0] if table.rows else {}):
        print("KS decays outside the noise floor:", table.ks_decays())
    if table.failure:
        raise NumericalError(f"sweep stopped at {table.failure}")


COMMANDS = {"discretize": cmd_discretize, "simulate": cmd_simulate, "check": cmd_check,
            "semigroup": cmd_semigroup, "sweep": cmd_sweep}


def parser():
    ap = argparse.ArgumentParser(prog="jumpchain", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="YAML run configuration")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, metavar="N", help="override simulation.seed")
    ap.add_argument("--threads", type=int, metavar="N", help="worker threads for simulation")
    ap.add_argument("--matrix", metavar="FILE", help="conductance file from `discretize`")
    ap.add_argument("--print-defaults", action="store_true",
                    help="print the default configuration and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _resolve(args):
    cfg = load_config(args.config) if args.config else RunConfig().validate()
    if args.out:
        cfg = replace(cfg, output=replace(cfg.output, dir=args.out))
    if args.seed is not None:
        cfg = replace(cfg, simulation=replace(cfg.simulation, seed=args.seed))
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg.validate()


def main(argv=None):
    ap = parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.print_defaults:
        sys.stdout.write(default_yaml())
        return EXIT_OK
    if args.command is None:
        ap.print_usage(sys.stderr)
        print("jumpchain: error: a command is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _resolve(args)
        run = Run(cfg, args)
        if args.config:
            run.input(args.config)
        COMMANDS[args.command](cfg, args, run)
        run.finish(args.command)
    except (ConfigError, LatticeMismatch) as exc:
        print(f"jumpchain: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, JumpchainError) as exc:
        print(f"jumpchain: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"jumpchain: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"jumpchain: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
