import numpy as np
import pytest
from scipy import stats

from jumpchain import kernel as kern
from jumpchain.chain import SimulationConfig
from jumpchain.csvio import read_csv
from jumpchain.diagnostics import (PipelineConfig, cauchy_cf, convergence_sweep, decays_outside_noise,
                                   empirical_cf, ks_against_cauchy, ks_noise_floor)


def test_cf_of_point_mass_at_zero_is_one():
    rep = empirical_cf(np.zeros(10), [0.5, 1.0, 3.0])
    np.testing.assert_array_equal(rep.cf, 1.0)
    np.testing.assert_array_equal(rep.half_re, 0.0)


def test_cf_of_symmetric_two_point_sample_is_cosine():
    xi = np.array([0.3, 1.0, 2.0])
    rep = empirical_cf(np.array([-1.0, 1.0] * 50), xi)
    np.testing.assert_allclose(rep.cf.real, np.cos(xi), rtol=1e-14)
    np.testing.assert_allclose(rep.cf.imag, 0.0, atol=1e-15)


def test_cf_in_two_dimensions_and_errors():
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    rep = empirical_cf(X, [[1.0, 1.0]])
    assert rep.cf[0] == pytest.approx((np.exp(1j) + np.exp(2j)) / 2)
    with pytest.raises(ValueError):
        empirical_cf(np.zeros((0, 1)), [1.0])
    with pytest.raises(ValueError):
        rep.discrepancy


def test_cf_of_cauchy_draws_within_ci():
    rng = np.random.default_rng(4)
    xi = [0.5, 1.0, 2.0]
    rep = empirical_cf(stats.cauchy.rvs(scale=0.5, size=20000, random_state=rng), xi, 0.999,
                       cauchy_cf(xi, 0.5))
    assert np.all(rep.within_ci())
    assert rep.sup_discrepancy < 0.02


def test_ks_of_degenerate_sample_is_one_half():
    res = ks_against_cauchy(np.zeros(50), 1.0)
    assert res.statistic == pytest.approx(0.5)
    assert not res.passed
    with pytest.raises(ValueError):
        ks_against_cauchy(np.zeros(3), 0.0)


def test_ks_of_exact_draws_is_inside_noise_floor():
    rng = np.random.default_rng(0)
    res = ks_against_cauchy(stats.cauchy.rvs(scale=2.0, size=4000, random_state=rng), 2.0)
    assert res.passed
    assert res.noise_floor == pytest.approx(ks_noise_floor(4000))
    assert ks_against_cauchy(np.zeros(3), 1.0, threshold=0.6).passed


def test_ks_pvalues_are_uniform_under_the_null():
    rng = np.random.default_rng(1)
    p = [ks_against_cauchy(stats.cauchy.rvs(size=200, random_state=rng), 1.0).pvalue for _ in range(300)]
    assert stats.kstest(p, "uniform").pvalue > 1e-3


def test_noise_floor_shrinks_like_inverse_root():
    a, b = ks_noise_floor(1000), ks_noise_floor(4000)
    assert a / b == pytest.approx(2.0, rel=0.05)


def test_decays_outside_noise_examples():
    floors = [0.01, 0.01, 0.01]
    assert decays_outside_noise([0.2, 0.1, 0.05], floors)
    assert decays_outside_noise([0.2, 0.008, 0.009], floors)
    assert not decays_outside_noise([0.2, 0.195, 0.1], floors)
    assert not decays_outside_noise([0.2, 0.1, 0.2], floors)


def sweep_config(**kw):
    base = dict(source=kern.cauchy_kernel(), p=1.0, window_radius=8.0,
                simulation=SimulationConfig(horizon=0.5, n_paths=300, seed=3))
    base.update(kw)
    return PipelineConfig(**base)


def test_convergence_sweep_rows_and_csv(tmp_path):
    table = convergence_sweep(sweep_config(alpha0=True), [2, 4])
    assert table.failure is None
    assert table.column("n") == [2, 4]
    assert all(0 <= v <= 1 for v in table.column("ks"))
    assert table.column("alpha0_n") == [0.0, 0.0]
    cols, rows = read_csv(table.to_csv(tmp_path / "sweep.csv"))
    assert "ks_floor" in cols and len(rows) == 2


def test_convergence_sweep_keeps_partial_table_on_failure():
    def hook(n, C, ens):
        if n == 4:
            raise ValueError("boom")
        return {"extra": 1.0}

    table = convergence_sweep(sweep_config(hook=hook), [2, 4, 8])
    assert table.column("n") == [2]
    assert table.failure.startswith("n=4: ValueError")


def test_self_consistency_sweep_compares_successive_n():
    table = convergence_sweep(sweep_config(reference=None), [2, 4])
    assert "ks_prev" not in table.rows[0] and 0 <= table.rows[1]["ks_prev"] <= 1
