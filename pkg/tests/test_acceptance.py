"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the verdict lines are
printed even when output capture is on).
"""
import math
import time

import numpy as np
import pytest
import yaml
from numpy.polynomial import polynomial as P
from scipy import stats

from jumpchain import kernel as kern
from jumpchain.chain import SimulationConfig, simulate_ensemble, simulate_path
from jumpchain.cli import main
from jumpchain.conditions import check_semimartingale_route
from jumpchain.csvio import read_csv
from jumpchain.diagnostics import decays_outside_noise
from jumpchain.discretize import (DIRICHLET, SEMIMARTINGALE, ConductanceMatrix,
                                  build_dirichlet_conductances, build_measure_conductances,
                                  default_window_radius, split_symmetric)
from jumpchain.forms import alpha0_n, apply_generator, comparison_check, form_H, truncated_form_compare
from jumpchain.lattice import (Lattice, LatticeFunction, extend, l2n_inner, restrict,
                               strong_convergence_error)
from jumpchain.semigroup import (CauchyDensity, GeneratorOperator, apply_semigroup, stable_semigroup,
                                 strong_semigroup_error)

from conftest import closed_toy, dense_toy

import oracle_values as ov

HALF_LINE = kern.region_from_spec({"type": "halfspace", "normal": [1.0], "offset": 0.0}, 1)


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail, elapsed=None, budget=None):
        in_time = budget is None or elapsed < budget
        ok = bool(ok) and in_time
        t = "" if elapsed is None else f" [{elapsed:.1f} s / {budget:g} s]"
        with capsys.disabled():
            print(f"\nCRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}{t}")
        assert ok, detail
    return report


def test_criterion_01_operator_identities(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = [0.0, 0.0, 0.0]
    for case in range(100):
        n = int(rng.choice([1, 2, 4, 8]))
        d = 1 if case % 2 else 2
        lat = Lattice(n, d, 1.5)
        fn = LatticeFunction(lat, rng.normal(size=len(lat)))
        # r_n e_n f_n = f_n
        back = restrict(extend(fn), lat).values
        worst[0] = max(worst[0], np.max(np.abs(back - fn.values)) / np.max(np.abs(fn.values)))
        # ||e_n f_n||_{L^2} = ||f_n||_{L^2_n}
        e = strong_convergence_error(LatticeFunction(lat, np.zeros(len(lat))), extend(fn), q=2,
                                     subdivisions=1)
        worst[1] = max(worst[1], abs(e.inside - fn.norm()) / fn.norm())
        # <r_n f, f_n> = <f, e_n f_n> for a cubic f supported on the window cells (d = 1)
        lat1 = Lattice(n, 1, 1.5)
        g = LatticeFunction(lat1, rng.normal(size=len(lat1)))
        coef = rng.normal(size=4)
        h = 0.5 / n
        lo, hi = lat1.points[:, 0] - h, lat1.points[:, 0] + h
        f = lambda x: np.where((x[:, 0] >= lo[0]) & (x[:, 0] < hi[-1]), P.polyval(x[:, 0], coef), 0.0)
        lhs = l2n_inner(restrict(f, lat1), g)
        anti = P.polyint(coef)
        rhs = float(np.sum(g.values * (P.polyval(hi, anti) - P.polyval(lo, anti))))
        worst[2] = max(worst[2], abs(lhs - rhs) / max(abs(rhs), 1e-300))
    dt = time.perf_counter() - t0
    verdict(1, max(worst) < 1e-10,
            "max rel errors r e = id {:.1e}, isometry {:.1e}, adjoint {:.1e} (tol 1e-10)".format(*worst),
            dt, 5)


def test_criterion_02_duality(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for case in range(100):
        C, _ = closed_toy(int(rng.integers(1, 100)), rng)       # at most 199 states
        f, g = rng.normal(size=(2, len(C)))
        lhs = form_H(C, f, g).value
        rhs = -C.lattice.cell_volume * float(apply_generator(C, f).values @ g)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    dt = time.perf_counter() - t0
    verdict(2, worst < 1e-10, f"max rel error H(f,g) vs <-A f, g> = {worst:.2e} (tol 1e-10)", dt, 5)


def test_criterion_03_comparison_sandwiches(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12345)
    C, _ = closed_toy(5, rng)
    parts = split_symmetric(C)
    a0 = alpha0_n(C, parts)
    reps = [comparison_check(C, rng.normal(size=len(C)), parts=parts, alpha0=a0) for _ in range(100)]
    v1 = sum(not r.ok1 for r in reps)
    v2 = sum(not r.ok2 for r in reps)
    dt = time.perf_counter() - t0
    verdict(3, v1 == 0 and v2 == 0 and a0 > 0,
            f"{len(C)}-state toy, alpha0_n = {a0:.4f}: {v1} + {v2} violations in 100 random f", dt, 5)


def test_criterion_04_alpha0_monotonicity(verdict):
    t0 = time.perf_counter()
    k = kern.levy_mix_kernel(0.5, 1.5, HALF_LINE, inner_radius=1.0)
    a0 = kern.alpha0_estimate(k, [[0.0]])
    assert a0 == pytest.approx(ov.LEVY_MIX_ALPHA0, rel=1e-6)
    vals = [alpha0_n(build_dirichlet_conductances(k, Lattice(n, 1, 8.0), 0.5, reach=256.0))
            for n in (2, 4, 8, 16)]
    dt = time.perf_counter() - t0
    ratio = max(vals) / a0
    verdict(4, ratio <= 1.05,
            f"alpha0 = {a0:.5f}; alpha0_n / alpha0 = " + ", ".join(f"{v / a0:.4f}" for v in vals)
            + " (limit 1.05)", dt, 120)


def test_criterion_05_simulation_exactness(verdict):
    t0 = time.perf_counter()
    lam, N, T = 2.0, 10_000, 3.0
    A = np.zeros((3, 3))
    A[1, 2] = A[2, 1] = lam
    C = ConductanceMatrix.from_dense(Lattice(1, 1, 1.0), A)
    cfg = SimulationConfig(horizon=T, n_paths=N, seed=0)
    # holding time in a frozen start state: the only exit leads to a state without clocks
    B = np.zeros((3, 3))
    B[1, 2] = lam
    frozen = ConductanceMatrix.from_dense(Lattice(1, 1, 1.0), B)
    long_cfg = SimulationConfig(horizon=100.0, n_paths=N, seed=0)
    hold = np.array([simulate_path(frozen, long_cfg, i).times[0] for i in range(N)])
    p_hold = stats.kstest(hold, "expon", args=(0, 1 / lam)).pvalue
    jc = simulate_ensemble(C, cfg).jump_counts
    mu = lam * T
    top = int(stats.poisson.ppf(0.999, mu))
    obs = np.array([np.sum(jc == k) for k in range(top)] + [np.sum(jc >= top)])
    exp = np.append(stats.poisson.pmf(np.arange(top), mu), stats.poisson.sf(top - 1, mu)) * N
    p_count = stats.chisquare(obs, exp).pvalue
    dt = time.perf_counter() - t0
    verdict(5, p_hold > 0.01 and p_count > 0.01,
            f"holding-time KS p = {p_hold:.3f}, Poisson chi-square p = {p_count:.3f} (need > 0.01)",
            dt, 30)


def cauchy_sweep_config(out):
    return {"schema_version": 1,
            "kernel": {"family": "cauchy", "dim": 1},
            "scheme": {"name": DIRICHLET, "p": 0.99},
            "lattice": {"n": [8, 16, 32]},
            "simulation": {"T": 1.0, "n_paths": 10_000, "seed": 0, "x0": [0.0]},
            "diagnostics": {"xi": [0.5, 1.0, 2.0], "level": 0.99},
            "output": {"dir": str(out), "plots": False}}


@pytest.fixture(scope="module")
def cauchy_sweeps(tmp_path_factory):
    runs = []
    for name in ("first", "second"):
        base = tmp_path_factory.mktemp(name)
        cfg = base / "cfg.yaml"
        cfg.write_text(yaml.safe_dump(cauchy_sweep_config(base / "out")))
        t0 = time.perf_counter()
        code = main(["sweep", "--config", str(cfg)])
        runs.append((code, base / "out" / "sweep.csv", time.perf_counter() - t0))
    return runs


def test_criterion_06_cauchy_end_to_end(verdict, cauchy_sweeps):
    code, path, dt = cauchy_sweeps[0]
    assert code == 0
    cols, rows = read_csv(path)
    col = lambda k: [float(r[cols.index(k)]) for r in rows]
    ks, floor, in_ci = col("ks"), col("ks_floor"), col("cf_in_ci")
    absorbed = col("absorbed_fraction")
    ok = in_ci[-1] == 1 and ks[-1] < 0.05 and decays_outside_noise(ks, floor)
    verdict(6, ok,
            "KS at n=8,16,32: " + ", ".join(f"{v:.4f}" for v in ks)
            + f" (floor {floor[-1]:.4f}); CF in 99% CI at n=32: {bool(in_ci[-1])}; "
            + f"absorbed {max(absorbed):.2%}", dt, 300)


def test_criterion_07_strong_semigroup_convergence(verdict):
    t0 = time.perf_counter()
    k = kern.cauchy_kernel()
    P_ref = stable_semigroup(1.0)
    f = CauchyDensity(1.0)
    errs = []
    for n in (4, 8, 16, 32):
        R, _ = default_window_radius(k, n, 0.99, DIRICHLET)
        C = build_dirichlet_conductances(k, Lattice(n, 1, R), 0.99)
        errs.append(strong_semigroup_error(C, f, 0.5, P_ref))
    dt = time.perf_counter() - t0
    e = [x.error for x in errs]
    ok = all(b < a for a, b in zip(e, e[1:])) and e[-1] < 0.02 and errs[-1].leakage < 1e-3
    verdict(7, ok, "L2 errors at n=4..32: " + ", ".join(f"{v:.4f}" for v in e)
            + f"; leakage at n=32 {errs[-1].leakage:.2e}", dt, 180)


def test_criterion_08_characteristics_convergence(verdict):
    t0 = time.perf_counter()
    field = kern.cauchy_field()
    h = kern.default_truncation(1.0)
    probes = np.linspace(-1.0, 1.0, 25)[:, None]
    rel = []
    for n in (4, 8, 16, 32):
        R, _ = default_window_radius(field, n, 0.99, SEMIMARTINGALE)
        C = build_measure_conductances(field, Lattice(n, 1, R), 0.99)
        rep = check_semimartingale_route(field, C, h, 1.0, probes, bumps=(), drift=False,
                                         second_moment=False)
        row = rep.select("C5.S")[0]
        rel.append(row.value / row.param("target"))
    dt = time.perf_counter() - t0
    ok = all(b < a for a, b in zip(rel, rel[1:])) and rel[-1] < 0.05
    verdict(8, ok, "C5.S discrepancy / target at n=4..32: " + ", ".join(f"{v:.4f}" for v in rel),
            dt, 180)


def test_criterion_09_truncated_form(verdict):
    t0 = time.perf_counter()
    k = kern.cauchy_kernel()
    C = build_dirichlet_conductances(k, Lattice(16, 1, 3.0), 1.0)
    Cs, _ = split_symmetric(C)
    tent = lambda x: np.maximum(0.0, 1 - np.abs(x[:, 0]))
    E, E_n = truncated_form_compare(k, Cs, tent, 2.0, 0.5)
    rel = abs(E_n - ov.TENT_TRUNCATED_ENERGY) / ov.TENT_TRUNCATED_ENERGY
    dt = time.perf_counter() - t0
    verdict(9, rel < 0.05 and abs(E - ov.TENT_TRUNCATED_ENERGY) < 1e-6 * ov.TENT_TRUNCATED_ENERGY,
            f"E_m,eps = {ov.TENT_TRUNCATED_ENERGY:.6f}, lattice {E_n:.6f}, rel diff {rel:.2%}", dt, 120)


def test_criterion_10_uniformization(verdict):
    t0 = time.perf_counter()
    lam, mu = 1.7, 0.4
    G2 = GeneratorOperator.from_rate_matrix([[-lam, lam], [mu, -mu]])
    err2 = 0.0
    for t in (0.1, 1.0, 5.0):
        s = lam + mu
        e = math.exp(-s * t)
        exact = np.array([[mu / s + lam / s * e, lam / s * (1 - e)], [mu / s * (1 - e), lam / s + mu / s * e]])
        got = np.column_stack([apply_semigroup(G2, v, t) for v in np.eye(2)])
        err2 = max(err2, np.max(np.abs(got - exact)))
    rng = np.random.default_rng(1010)
    tol = 1e-12
    worst_sg, worst_contr = 0.0, 0.0
    for _ in range(20):
        M = 100
        A = dense_toy(M, rng, density=0.05, scale=2.0)
        Q = A.copy()
        np.fill_diagonal(Q, 0.0)
        Q -= np.diag(Q.sum(axis=1) + rng.uniform(0, 0.2, M))
        G = GeneratorOperator.from_rate_matrix(Q)
        f = rng.normal(size=M)
        s, t = rng.uniform(0.05, 2.0, 2)
        both = apply_semigroup(G, f, s + t, tol)
        chained = apply_semigroup(G, apply_semigroup(G, f, s, tol), t, tol)
        worst_sg = max(worst_sg, np.max(np.abs(both - chained)))
        worst_contr = max(worst_contr, np.max(np.abs(both)) - np.max(np.abs(f)))
    dt = time.perf_counter() - t0
    ok = err2 < 1e-8 and worst_sg <= 3 * tol + 1e-13 and worst_contr <= tol
    verdict(10, ok, f"2x2 error {err2:.1e}; semigroup defect {worst_sg:.1e}; "
            f"sup-norm growth {worst_contr:.1e}", dt, 10)


def test_criterion_11_determinism(verdict, cauchy_sweeps):
    (c1, p1, _), (c2, p2, _) = cauchy_sweeps
    same = c1 == c2 == 0 and p1.read_bytes() == p2.read_bytes()
    verdict(11, same, f"sweep CSVs of two seeded runs byte-identical: {same}")
