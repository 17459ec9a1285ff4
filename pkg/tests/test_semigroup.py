import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.special import voigt_profile

from jumpchain import kernel as kern
from jumpchain.discretize import ConductanceMatrix, build_dirichlet_conductances
from jumpchain.errors import ConfigError
from jumpchain.forms import apply_generator, form_H
from jumpchain.lattice import Lattice, LatticeFunction, restrict, strong_convergence_error
from jumpchain.semigroup import (CauchyDensity, GaussianDensity, GeneratorOperator, apply_semigroup,
                                 reference_apply, stable_semigroup, strong_semigroup_error)

from conftest import closed_toy, dense_toy

import oracle_values as ov


def rate_matrix(A, lost=None):
    Q = np.array(A, dtype=float)
    np.fill_diagonal(Q, 0.0)
    out = Q.sum(axis=1) + (0 if lost is None else lost)
    return Q - np.diag(out)


def test_zero_time_is_identity(rng):
    C, _ = closed_toy(3, rng)
    f = rng.normal(size=len(C))
    out = apply_semigroup(GeneratorOperator(C), f, 0.0)
    np.testing.assert_array_equal(out, f)
    with pytest.raises(ConfigError):
        apply_semigroup(GeneratorOperator(C), f, -1.0)


def test_two_state_closed_form():
    lam, mu = 1.7, 0.4
    G = GeneratorOperator.from_rate_matrix([[-lam, lam], [mu, -mu]])
    f = np.array([1.0, 0.0])
    for t in (0.05, 0.5, 3.0):
        out = apply_semigroup(G, f, t, tol=1e-13)
        s = lam + mu
        e = math.exp(-s * t)
        exact = np.array([mu / s + lam / s * e, mu / s - mu / s * e])
        np.testing.assert_allclose(out, exact, atol=1e-8)


def test_matches_dense_matrix_exponential(rng):
    A = dense_toy(20, rng, scale=3.0)
    lost = rng.uniform(0, 0.5, 20)
    Q = rate_matrix(A, lost)
    G = GeneratorOperator.from_rate_matrix(Q)
    f = rng.normal(size=20)
    np.testing.assert_allclose(apply_semigroup(G, f, 0.7, tol=1e-13), expm(0.7 * Q) @ f, atol=1e-10)


def test_generator_operator_from_conductances(rng):
    C, A = closed_toy(3, rng)
    G = GeneratorOperator(C)
    f = rng.normal(size=len(C))
    np.testing.assert_allclose(G.apply(f), rate_matrix(A) @ f, atol=1e-13)
    assert G.uniformization == pytest.approx(1.01 * C.total_rate().max())


def test_from_rate_matrix_validation():
    with pytest.raises(ConfigError):
        GeneratorOperator.from_rate_matrix([[-1.0, -1.0], [0.0, 0.0]])
    with pytest.raises(ConfigError):
        GeneratorOperator.from_rate_matrix([[-1.0, 2.0], [0.0, 0.0]])


def test_conservative_on_closed_window(rng):
    C, _ = closed_toy(4, rng)
    out = apply_semigroup(GeneratorOperator(C), np.ones(len(C)), 2.0)
    np.testing.assert_allclose(out, 1.0, atol=1e-11)


def test_reference_identity_at_zero_and_cauchy_closure():
    P = stable_semigroup(1.0)
    f = CauchyDensity(1.0)
    x = np.linspace(-5, 5, 11)[:, None]
    np.testing.assert_array_equal(reference_apply(P, f, 0.0, x), f(x))
    got = reference_apply(P, f, 0.5, x)
    exact = 1.5 / (math.pi * (1.5**2 + x[:, 0] ** 2))
    np.testing.assert_allclose(got, exact, rtol=1e-15)


def test_reference_gaussian_by_spectral_quadrature():
    P = stable_semigroup(1.0)
    g, err = P.spectral(GaussianDensity(1.0), 0.5)
    x = np.array([[0.0], [1.0], [2.5]])
    frozen = [ov.VOIGT_S1_T05_X0, ov.VOIGT_S1_T05_X1, ov.VOIGT_S1_T05_X2_5]
    np.testing.assert_allclose(g(x), frozen, atol=max(err, 1e-9) * 3)
    # an independent library route agrees with the frozen values
    np.testing.assert_allclose(voigt_profile(x[:, 0], 1.0, 0.5), frozen, rtol=1e-12)
    assert err < 1e-5


def test_reference_rejects_symbol_not_vanishing_at_zero():
    from jumpchain.semigroup import ReferenceSemigroup
    with pytest.raises(ConfigError):
        ReferenceSemigroup(lambda xi: 1 + np.abs(xi[:, 0]))


def test_strong_error_at_time_zero_is_restriction_error():
    C = build_dirichlet_conductances(kern.cauchy_kernel(), Lattice(4, 1, 8.0), 1.0)
    f = CauchyDensity(1.0)
    e = strong_semigroup_error(C, f, 0.0, stable_semigroup(1.0))
    ref = strong_convergence_error(restrict(f, C.lattice), f)
    assert e.error == pytest.approx(ref.error, rel=1e-12)


def test_strong_error_flags_mass_outside_window():
    C = build_dirichlet_conductances(kern.cauchy_kernel(), Lattice(2, 1, 2.0), 1.0)
    f = CauchyDensity(0.05, location=40.0)
    P = stable_semigroup(1.0)
    e = strong_semigroup_error(C, f, 0.5, P)
    norm = math.sqrt(1 / (2 * math.pi * 0.55))  # ||Cauchy(s)||_2^2 = 1/(2 pi s)
    assert e.error == pytest.approx(norm, rel=1e-3)
    assert e.leaking
    assert e.inside < 1e-2 * e.error


def test_generator_consistency_first_order(rng):
    C, _ = closed_toy(6, rng)
    G = GeneratorOperator(C)
    f = rng.normal(size=len(C))
    Af = apply_generator(C, f).values
    errs = []
    for t in (1e-2, 5e-3, 2.5e-3):
        Pt = apply_semigroup(G, f, t, tol=1e-15)
        errs.append(np.max(np.abs((Pt - f) / t - Af)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 0.9


def test_duality_bridge_derivative_at_zero(rng):
    C, _ = closed_toy(5, rng)
    G = GeneratorOperator(C)
    vol = C.lattice.cell_volume
    f, g = rng.normal(size=(2, len(C)))
    t = 1e-5
    lhs = vol * (apply_semigroup(G, f, t, tol=1e-15) @ g - f @ g) / t
    assert lhs == pytest.approx(-form_H(C, f, g).value, rel=1e-4, abs=1e-4)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), t=st.floats(0.01, 2.0), s=st.floats(0.01, 2.0))
def test_semigroup_property_contraction_positivity(seed, t, s):
    rng = np.random.default_rng(seed)
    M = 100
    Q = rate_matrix(dense_toy(M, rng, density=0.05, scale=2.0), rng.uniform(0, 0.2, M))
    G = GeneratorOperator.from_rate_matrix(Q)
    tol = 1e-12
    f = rng.uniform(0, 1, M)
    both = apply_semigroup(G, f, t + s, tol)
    chained = apply_semigroup(G, apply_semigroup(G, f, s, tol), t, tol)
    assert np.max(np.abs(both - chained)) <= 3 * tol + 1e-13
    assert np.max(np.abs(both)) <= np.max(np.abs(f)) + tol
    assert both.min() >= -tol
    g = rng.normal(size=M)
    assert np.max(np.abs(apply_semigroup(G, g, t, tol))) <= np.max(np.abs(g)) + tol


def test_lattice_function_in_lattice_function_out(rng):
    C, _ = closed_toy(2, rng)
    fn = LatticeFunction(C.lattice, rng.normal(size=len(C)))
    out = apply_semigroup(GeneratorOperator(C), fn, 0.3)
    assert isinstance(out, LatticeFunction) and out.lattice == C.lattice
