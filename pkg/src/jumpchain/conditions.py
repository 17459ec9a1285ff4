"""Fixed-n evaluation of the tightness and convergence conditions.

Every check returns a :class:`ConditionReport`: a flat list of rows
(condition, quantity, parameters, value, threshold, verdict).  Conditions
that are limits in n are judged on sweeps over n = 2^i by trend rules:

* bounded: every value is at most max(first value, cap);
* vanishing: strictly decreasing with ratio <= 0.9 between successive
  entries (zeros stay zero).

Verdicts on trends say "trend-ok" or "trend-fail"; nothing is proved.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.interpolate import BSpline

from .discretize import split_symmetric
from .errors import ConfigError, QuadratureDivergence
from .forms import alpha0_n
from .quadrature import QuadratureSpec, as_points, shell_integral

__all__ = [
    "ConditionRow", "ConditionReport", "bounded_trend", "vanishing_trend", "radial_bump",
    "check_T3toT6", "sweep_T3toT6", "check_dirichlet_route", "check_C2_C3_C4",
    "sweep_alpha0", "check_semimartingale_route", "sweep_semimartingale_route",
    "check_TS_family",
]

VANISH_RATIO = 0.9
_ABS_TOL = 1e-9


@dataclass(frozen=True)
class ConditionRow:
    condition: str
    quantity: str
    params: tuple
    value: float
    threshold: float = math.nan
    verdict: str = "info"

    def param(self, key, default=None):
        return dict(self.params).get(key, default)


def _params(**kw):
    return tuple(sorted((k, v) for k, v in kw.items() if v is not None))


@dataclass
class ConditionReport:
    rows: list = field(default_factory=list)

    def add(self, condition, quantity, value, threshold=None, verdict=None, **params):
        value = float(value)
        thr = math.nan if threshold is None else float(threshold)
        if verdict is None:
            verdict = "info" if threshold is None else ("pass" if value <= thr else "fail")
        self.rows.append(ConditionRow(condition, quantity, _params(**params), value, thr, verdict))
        return self.rows[-1]

    def extend(self, other):
        self.rows.extend(other.rows)
        return self

    def select(self, condition, quantity=None):
        return [r for r in self.rows if r.condition == condition
                and (quantity is None or r.quantity == quantity)]

    def values(self, condition, quantity=None):
        return [r.value for r in self.select(condition, quantity)]

    @property
    def failures(self):
        return [r for r in self.rows if r.verdict in ("fail", "trend-fail")]

    @property
    def ok(self):
        return not self.failures

    def to_csv(self, path):
        from .csvio import write_csv
        keys = sorted({k for r in self.rows for k, _ in r.params})
        cols = ["condition", "quantity"] + keys + ["value", "threshold", "verdict"]
        data = [[r.condition, r.quantity] + [r.param(k, "") for k in keys]
                + [r.value, r.threshold, r.verdict] for r in self.rows]
        return write_csv(path, cols, data)

    def summary(self):
        lines = []
        for r in self.rows:
            ps = ", ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.params)
            thr = "" if math.isnan(r.threshold) else f" (threshold {r.threshold:.6g})"
            lines.append(f"{r.condition:8s} {r.quantity:28s} {r.value: .6e}{thr}  [{r.verdict}]  {ps}")
        n_fail = len(self.failures)
        lines.append(f"{len(self.rows)} rows, {n_fail} failing")
        return "\n".join(lines)


def bounded_trend(values, cap=0.0):
    values = [float(v) for v in values]
    if not values:
        return True
    lim = max(values[0], cap) + _ABS_TOL
    return all(v <= lim for v in values)


def vanishing_trend(values, ratio=VANISH_RATIO):
    values = [float(v) for v in values]
    for a, b in zip(values, values[1:]):
        if abs(a) <= _ABS_TOL and abs(b) <= _ABS_TOL:
            continue
        if not b <= ratio * a:
            return False
    return True


def _trend(flag):
    return "trend-ok" if flag else "trend-fail"


# ---------------------------------------------------------------------------
# Row-sum functionals of a conductance matrix.

def _norm(z):
    return np.linalg.norm(z, axis=1)


def _sup_abs(a):
    return np.max(np.abs(a), axis=0)


def check_T3toT6(C, rho, r_grid=(), thresholds=None):
    """Suprema over window rows of the tail and truncated-moment row sums."""
    if not rho > 0:
        raise ConfigError("rho must be positive")
    r_grid = [float(r) for r in r_grid]
    if max([rho] + r_grid) >= C.reach:
        raise ConfigError(f"radius {max([rho] + r_grid):g} exceeds the stored reach {C.reach:g}")
    thr = thresholds or {}
    rep = ConditionReport()
    d = C.dim
    far = C.far_tail
    tail = C.row_functional(lambda z: (_norm(z) > rho).astype(float)) + far
    rep.add("T3", "sup tail rate", tail.max(initial=0.0), thr.get("T3"), n=C.n, p=C.p, rho=rho)
    for r in r_grid:
        t = C.row_functional(lambda z, r=r: (_norm(z) > r).astype(float)) + far
        rep.add("T4", "sup tail rate", t.max(initial=0.0), thr.get("T4"), n=C.n, p=C.p, r=r)
    inner = lambda z: (_norm(z) < rho).astype(float)
    m1 = C.row_functional(lambda z: z * inner(z)[:, None])
    s1 = _sup_abs(m1)
    for i in range(d):
        rep.add("T5", f"sup |first moment| {i + 1}", s1[i], thr.get("T5"), n=C.n, p=C.p, rho=rho)
    m2 = C.row_functional(lambda z: z[:, :, None] * z[:, None, :] * inner(z)[:, None, None])
    s2 = _sup_abs(m2.reshape(len(C), -1)).reshape(d, d)
    for i in range(d):
        for k in range(i, d):
            rep.add("T6", f"sup |second moment| {i + 1}{k + 1}", s2[i, k], thr.get("T6"),
                    n=C.n, p=C.p, rho=rho)
    return rep


def sweep_T3toT6(builder, n_list, rho, r_grid, cap=0.0):
    """Run :func:`check_T3toT6` for every n and append trend rows."""
    rep = ConditionReport()
    per_n = []
    for n in n_list:
        r = check_T3toT6(builder(n), rho, r_grid)
        per_n.append(r)
        rep.extend(r)
    for cond in ("T3", "T5", "T6"):
        quantities = sorted({row.quantity for row in per_n[0].select(cond)})
        for q in quantities:
            vals = [r.values(cond, q) for r in per_n]
            ok = all(bounded_trend(col, cap) for col in zip(*vals))
            rep.add(cond, q + " over n", max(max(v) for v in vals), verdict=_trend(ok), rho=rho)
    ok = all(vanishing_trend(r.values("T4")) for r in per_n)
    rep.add("T4", "tail vanishes in r", max(r.values("T4")[-1] for r in per_n) if r_grid else 0.0,
            verdict=_trend(ok))
    return rep


# ---------------------------------------------------------------------------
# Kernel-level integrals.

def _kernel_integral(k, x, g, r_in, r_out, quad, part=None):
    """int_{r_in<|z|<r_out} g(z) k(x, x + z) dz, optionally of k_s or k_a."""
    x = np.asarray(x, dtype=float)

    def f(z):
        xs = np.broadcast_to(x, z.shape)
        kxy = k.density(xs, xs + z)
        if part is not None:
            kyx = k.density(xs + z, xs)
            kxy = (kxy + kyx) / 2 if part == "s" else (kxy - kyx) / 2
        gv = np.asarray(g(z), dtype=float)
        return gv * kxy.reshape(kxy.shape + (1,) * (gv.ndim - 1))

    brk = tuple(b for b in (*k.breaks, r_in, r_out, 1.0) if np.isfinite(b) and b > 0)
    return shell_integral(f, k.dim, r_in, r_out, quad, brk).value


def _probes(probe_grid, d):
    p = as_points(probe_grid, d)
    if len(p) == 0:
        raise ConfigError("probe grid must be nonempty")
    return p


def _eps_trend(rep, cond, quantity, vals, budget, **params):
    # vals ordered by decreasing eps; growth beyond budget x first value is divergence
    v0 = abs(vals[0])
    ok = all(abs(v) <= budget * max(v0, _ABS_TOL) for v in vals)
    rep.add(cond, quantity + " eps-trend", max(abs(v) for v in vals), verdict=_trend(ok), **params)
    return ok


def check_dirichlet_route(k, rho_grid, probe_grid, quad=None, r_grid=(1, 2, 4, 8, 16),
                          eps_grid=(0.5, 0.25, 0.125, 0.0625), thresholds=None, eps_budget=10.0):
    """Quadrature estimates of the kernel-level tail and truncated-moment integrals."""
    probes = _probes(probe_grid, k.dim)
    if k.stationary:
        probes = probes[:1]
    d = k.dim
    thr = thresholds or {}
    quad = quad or QuadratureSpec()
    rep = ConditionReport()
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    for rho in rho_grid:
        v = k.tail_mass(probes, rho, quad).max()
        rep.add("T1.D", "sup tail integral", v, thr.get("T1.D"), rho=float(rho))
    tails = [float(k.tail_mass(probes, r, quad).max()) for r in r_grid]
    for r, v in zip(r_grid, tails):
        rep.add("T3.D", "sup tail integral", v, thr.get("T3.D"), r=float(r))
    rep.add("T3.D", "tail vanishes in r", tails[-1] if tails else 0.0,
            verdict=_trend(vanishing_trend(tails)))
    outer = lambda z: z[:, :, None] * z[:, None, :]
    for rho in rho_grid:
        first, second = [], []
        for eps in eps_grid:
            if eps >= rho:
                continue
            m1 = np.array([_kernel_integral(k, x, lambda z: z, eps, rho, quad) for x in probes])
            m2 = np.array([_kernel_integral(k, x, outer, eps, rho, quad) for x in probes])
            s1 = _sup_abs(m1)
            s2 = _sup_abs(m2.reshape(len(probes), -1)).reshape(d, d)
            first.append(s1.max())
            second.append(s2.max())
            for i in range(d):
                rep.add("T4.D.1", f"sup |first moment| {i + 1}", s1[i], thr.get("T4.D.1"),
                        rho=float(rho), eps=eps)
            for i in range(d):
                for j in range(i, d):
                    rep.add("T5.D.1", f"sup |second moment| {i + 1}{j + 1}", s2[i, j],
                            thr.get("T5.D.1"), rho=float(rho), eps=eps)
        if first:
            _eps_trend(rep, "T4.D.1", "sup |first moment|", first, eps_budget, rho=float(rho))
            _eps_trend(rep, "T5.D.1", "sup |second moment|", second, eps_budget, rho=float(rho))
    return rep


def _c3_integrand(z):
    return np.minimum(1.0, np.sum(z * z, axis=1))


def _c3(k, x, quad):
    return float(_kernel_integral(k, x, _c3_integrand, 0.0, np.inf, quad, part="s"))


def check_C2_C3_C4(k, C, rho_grid, probe_grid, quad=None, thresholds=None, parts=None):
    """alpha0^n of the matrix, C3 integrals of the kernel, discrete C4 sums and
    the cross-check of C4 against the bound assembled from kernel integrals."""
    quad = quad or QuadratureSpec()
    thr = thresholds or {}
    d, n = C.dim, C.n
    probes = _probes(probe_grid, d)
    parts = parts if parts is not None else split_symmetric(C)
    Cs = parts[0]
    rep = ConditionReport()
    a0 = alpha0_n(C, parts)
    if a0 == 0.0:
        rep.add("C2", "alpha0_n", 0.0, verdict="fail", n=n, p=C.p, note="zero (symmetric)")
    else:
        cap = thr.get("C2")
        ok = np.isfinite(a0) and (cap is None or a0 <= cap)
        rep.add("C2", "alpha0_n", a0, cap, verdict="pass" if ok else "fail", n=n, p=C.p)
    c4_all = Cs.row_functional(_c3_integrand)
    pts = C.lattice.points
    shift = math.sqrt(d) / (2 * n)
    for rho in rho_grid:
        rho = float(rho)
        inside = probes[np.linalg.norm(probes, axis=1) <= rho]
        if k.stationary:
            inside = probes[:1] if len(inside) == 0 else inside[:1]
        if len(inside) == 0:
            raise ConfigError(f"no probe point inside B_rho for rho = {rho:g}")
        c3 = max(_c3(k, x, quad) for x in inside)
        rep.add("C3", "sup int (1^|y|^2) k_s", c3, thr.get("C3"), rho=rho)
        rows = np.linalg.norm(pts, axis=1) <= rho + 1e-12
        c4 = float(c4_all[rows].max(initial=0.0))
        rep.add("C4", "sup sum (1^|b|^2) C_s", c4, thr.get("C4"), n=n, p=C.p, rho=rho)
        r_lo, r_hi = 1 - math.sqrt(d) / n, 1 + math.sqrt(d) / n
        if r_lo <= 0:
            rep.add("C4", "bound check skipped", math.nan, verdict="info", n=n, rho=rho,
                    note="n <= sqrt(d)")
            continue
        wide = probes[np.linalg.norm(probes, axis=1) <= rho + shift]
        if k.stationary or len(wide) == 0:
            wide = np.zeros((1, d)) if len(wide) == 0 else wide[:1]
        tail = max(float(_kernel_integral(k, x, lambda z: np.ones(len(z)), r_lo, np.inf, quad, "s"))
                   for x in wide)
        mom = max(float(_kernel_integral(k, x, lambda z: np.sum(z * z, axis=1), 0.0, r_hi, quad, "s"))
                  for x in wide)
        bound = tail + 4 * mom
        ok = c4 <= bound * (1 + 1e-6) + _ABS_TOL
        rep.add("C4", "C4 within kernel bound", c4, bound, verdict="pass" if ok else "fail",
                n=n, p=C.p, rho=rho)
    return rep


def sweep_alpha0(builder, n_list, cap=None):
    """alpha0^n over an n-sweep with the C2 trend verdict (positive and bounded)."""
    rep = ConditionReport()
    vals = []
    for n in n_list:
        a = alpha0_n(builder(n))
        vals.append(a)
        rep.add("alpha0_n", "alpha0_n", a, n=n)
    ok = min(vals) > 0 and bounded_trend(vals, cap or 0.0)
    rep.add("C2", "alpha0_n over n", min(vals), verdict=_trend(ok))
    return rep


# ---------------------------------------------------------------------------
# Semimartingale route.

def radial_bump(ell, dim=1):
    """Cubic B-spline in |y| supported on [ell, 2 ell], scaled to peak 1."""
    ell = float(ell)
    knots = np.linspace(ell, 2 * ell, 5)
    b = BSpline.basis_element(knots, extrapolate=False)
    peak = float(b(1.5 * ell))

    def g(z):
        r = np.linalg.norm(np.asarray(z, dtype=float).reshape(-1, dim), axis=1)
        v = b(r)
        return np.where(np.isnan(v), 0.0, v) / peak

    g.knots = tuple(knots)
    return g


def _lattice_rows(C, probes, margin):
    idx = C.lattice.locate(probes)
    if np.any(idx < 0):
        raise ConfigError("probe points must lie in the lattice window")
    lim = C.lattice.window_radius - margin
    if np.any(np.linalg.norm(C.lattice.points[idx], axis=1) > max(lim, 0.0) + 1e-12):
        raise ConfigError("the window must cover the probe ball with margin")
    return idx


def check_semimartingale_route(field, C, h, R, probe_grid, quad=None, bumps=(0.5, 1.0, 2.0),
                               thresholds=None, drift=True, second_moment=True):
    """Discrepancies between row functionals of C and the field's characteristics."""
    quad = quad or QuadratureSpec()
    thr = thresholds or {}
    d, n = C.dim, C.n
    probes = _probes(probe_grid, d)
    if np.any(np.linalg.norm(probes, axis=1) > R + 1e-12):
        raise ConfigError("probe grid must lie in B_R(0)")
    rows = _lattice_rows(C, probes, 0.0)
    rep = ConditionReport()
    uniq = probes[:1] if field.stationary else probes
    hB = C.row_functional(h)[rows]
    hA = C.row_functional(lambda z: h(z)[:, :, None] * h(z)[:, None, :])[rows]
    far_bound = float(h.bound * C.far_tail[rows].max(initial=0.0))
    brk = tuple(b for b in (h.identity_radius, h.bound) if np.isfinite(b))

    def integrate(x, g, r_in=0.0, r_out=np.inf, extra=()):
        f = lambda z: np.asarray(g(z), dtype=float) * _reshape(field.density(
            np.broadcast_to(x, z.shape), z), g, z)
        return shell_integral(f, d, r_in, r_out, quad, tuple(field.breaks) + brk + tuple(extra)).value

    def targets(fn):
        vals = [fn(x) for x in uniq]
        return np.array([vals[0]] * len(probes)) if field.stationary else np.array(vals)

    if drift:
        b = field.drift_at(probes)
        disc = _sup_abs(hB - b)
        for i in range(d):
            rep.add("C4.S", f"sup |drift discrepancy| {i + 1}", disc[i], thr.get("C4.S"),
                    n=n, p=C.p, R=R)
        rep.add("C4.S", "far-tail allowance", far_bound, n=n, p=C.p, R=R)
    tA = targets(lambda x: integrate(x, lambda z: h(z)[:, :, None] * h(z)[:, None, :]))
    discA = _sup_abs((hA - tA).reshape(len(probes), -1)).reshape(d, d)
    scale = float(np.abs(tA).max(initial=0.0))
    for i in range(d):
        for k in range(i, d):
            rep.add("C5.S", f"sup |truncated 2nd moment discrepancy| {i + 1}{k + 1}", discA[i, k],
                    thr.get("C5.S"), n=n, p=C.p, R=R, target=scale)
    if second_moment:
        try:
            tM = targets(lambda x: integrate(x, lambda z: z[:, :, None] * z[:, None, :]))
            full = C.row_functional(lambda z: z[:, :, None] * z[:, None, :])[rows]
            disc = _sup_abs((full - tM).reshape(len(probes), -1)).reshape(d, d)
            for i in range(d):
                for k in range(i, d):
                    rep.add("C5.S2", f"sup |2nd moment discrepancy| {i + 1}{k + 1}", disc[i, k],
                            thr.get("C5.S2"), n=n, p=C.p, R=R)
        except QuadratureDivergence:
            rep.add("C5.S2", "second moment infinite", math.inf, verdict="info", n=n, R=R)
    for ell in bumps:
        g = radial_bump(ell, d)
        if 2 * ell >= C.reach:
            raise ConfigError(f"bump support [{ell:g}, {2 * ell:g}] exceeds the stored reach")
        disc_vals = C.row_functional(g)[rows]
        tg = targets(lambda x: integrate(x, g, ell, 2 * ell, g.knots))
        rep.add("C6.S", "sup |bump discrepancy|", float(np.max(np.abs(disc_vals - tg))),
                thr.get("C6.S"), n=n, p=C.p, R=R, ell=float(ell), target=float(np.max(tg)))
    return rep


def _reshape(w, g, z):
    gv = np.asarray(g(z[:1]))
    return w.reshape(w.shape + (1,) * (gv.ndim - 1))


def sweep_semimartingale_route(field, builder, n_list, h, R, probe_grid, quad=None, **kw):
    """Per-n reports plus vanishing-trend rows for each discrepancy quantity."""
    rep = ConditionReport()
    per_n = [check_semimartingale_route(field, builder(n), h, R, probe_grid, quad, **kw)
             for n in n_list]
    for r in per_n:
        rep.extend(r)
    keys = list(dict.fromkeys((row.condition, row.quantity, row.param("ell"))
                              for row in per_n[0].rows if row.quantity.startswith("sup")))
    for cond, q, ell in keys:
        vals = [next(x.value for x in r.select(cond, q) if x.param("ell") == ell) for r in per_n]
        rep.add(cond, q + " over n", vals[-1], verdict=_trend(vanishing_trend(vals)), ell=ell)
    return rep


def check_TS_family(field, rho, p, probe_grid, quad=None, r_grid=(1, 2, 4, 8, 16),
                    eps_grid=None, n_list=(2, 4, 8, 16, 32), thresholds=None, eps_budget=10.0):
    """Tail and truncated-moment integrals of a Levy-measure field.

    The default eps grid is the discretization cutoff sqrt(d)/n^p over ``n_list``.
    """
    quad = quad or QuadratureSpec()
    thr = thresholds or {}
    d = field.dim
    probes = _probes(probe_grid, d)
    if field.stationary:
        probes = probes[:1]
    if eps_grid is None:
        eps_grid = [math.sqrt(d) / n**p for n in n_list]
    eps_grid = sorted((float(e) for e in eps_grid if e < rho), reverse=True)
    rep = ConditionReport()
    rep.add("T1.S", "sup nu(B_rho^c)", field.tail_mass(probes, rho, quad).max(), thr.get("T1.S"),
            rho=float(rho))
    tails = [float(field.tail_mass(probes, r, quad).max()) for r in r_grid]
    for r, v in zip(r_grid, tails):
        rep.add("T2.S", "sup nu(B_r^c)", v, thr.get("T2.S"), r=float(r))
    rep.add("T2.S", "tail vanishes in r", tails[-1] if tails else 0.0,
            verdict=_trend(vanishing_trend(tails)))
    first, second = [], []
    for eps in eps_grid:
        m1 = np.array([field.integrate(x, lambda z: z, eps, rho, quad) for x in probes])
        m2 = np.array([field.integrate(x, lambda z: np.sum(z * z, axis=1), eps, rho, quad)
                       for x in probes])
        first.append(float(np.max(np.abs(m1))))
        second.append(float(np.max(m2)))
        rep.add("T3.S", "sup |truncated first moment|", first[-1], thr.get("T3.S"),
                rho=float(rho), eps=eps, p=p)
        rep.add("T4.S", "sup truncated second moment", second[-1], thr.get("T4.S"),
                rho=float(rho), eps=eps, p=p)
    if eps_grid:
        _eps_trend(rep, "T3.S", "sup |truncated first moment|", first, eps_budget, rho=float(rho))
        _eps_trend(rep, "T4.S", "sup truncated second moment", second, eps_budget, rho=float(rho))
    return rep
