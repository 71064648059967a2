import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jostkit.errors import SpecError
from jostkit.kernel import build_kernel
from jostkit.norms import (
    _KernelOperator, _matrix_norm, check_rescaling_invariance, derivative_weight, envelope_weight,
    estimate_norm, exterior_weight, fd_hamiltonian, make_grid, norm_via_kernel, norm_via_matrix,
    power_iteration, window_weight, zero_weight,
)
from jostkit.potentials import abs_envelope, catalog_get
from jostkit.weights import build_thm1_weight, build_thm2_weight


def test_power_iteration_matches_svd():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((120, 120)) + 1j * rng.standard_normal((120, 120))
    s, _, ok = power_iteration(lambda f: A @ f, lambda f: A.conj().T @ f, 120, seed=1, tol=1e-12)
    assert ok
    assert s == pytest.approx(np.linalg.svd(A, compute_uv=False)[0], rel=1e-9)


def test_power_iteration_clustered():
    # two nearly equal top singular values: the estimate must land inside the cluster
    d = np.concatenate([[1.0, 1.0 - 1e-7], np.linspace(0.5, 0.1, 998)])
    s, _, ok = power_iteration(lambda f: d * f, lambda f: d * f, d.size, seed=0, tol=1e-12)
    assert ok and 1.0 - 1e-7 <= s <= 1.0 + 1e-12


def test_power_iteration_lanczos_switch():
    d = np.concatenate([[1.0, 0.999], np.linspace(0.5, 0.1, 998)])
    s, it, ok = power_iteration(lambda f: d * f, lambda f: d * f, d.size, seed=0, tol=1e-13, lanczos_after=5)
    assert ok and s == pytest.approx(1.0, rel=1e-10)


def test_make_grid_anchors_and_singular():
    g = make_grid(-2.0, 2.0, 0.3, anchors=[-1.0, 0.5], singular=[0.0])
    e = g.edges
    for p in (-2.0, -1.0, 0.0, 0.5, 2.0):
        assert np.min(np.abs(e - p)) == 0.0
    assert np.max(np.diff(e)) <= 0.3 + 1e-15
    assert np.min(np.diff(e)[np.abs(e[:-1]) < 0.3]) < 0.01


def test_kernel_operator_matches_dense():
    V = catalog_get("square_barrier")
    K = build_kernel(V, 0.5, 2.0, 0.3)
    x = np.sort(np.random.default_rng(0).uniform(-6, 6, 300))
    q = np.full(x.size, 12.0 / x.size)
    op = _KernelOperator(K, x, q)
    D = op.dense()
    f = np.random.default_rng(1).standard_normal(x.size) + 0j
    np.testing.assert_allclose(op(f), D @ f, rtol=1e-10, atol=1e-12 * np.max(np.abs(D @ f)))
    np.testing.assert_allclose(op.adjoint(f), D.conj().T @ f, rtol=1e-10, atol=1e-12 * np.max(np.abs(D @ f)))


def test_fd_dense_oracle():
    # a = 1 on the whole box: the norm is 1/dist(z, spectrum of the discrete operator)
    V = catalog_get("square_barrier")
    grid = make_grid(-8.0, 8.0, 0.05, anchors=[-1.0, 1.0])
    h, z = 0.7, complex(1.0, 0.05)
    H = fd_hamiltonian(V, h, grid).toarray()
    assert np.allclose(H, H.T)
    ev = np.linalg.eigvalsh(H)
    oracle = 1.0 / np.min(np.abs(ev - z))
    got, _, ok = _matrix_norm(V, h, z, grid, window_weight(8.0), 7, 1e-12)
    assert ok and got == pytest.approx(oracle, rel=1e-8)


def test_free_resolvent_one_over_eps():
    e = norm_via_matrix(catalog_get("free"), 1.0, 1.0, 0.25, window_weight(200.0))
    assert e.value * 0.25 == pytest.approx(1.0, rel=1e-2)


@pytest.mark.parametrize("backend", ["kernel", "matrix"])
def test_zero_weight(backend):
    e = estimate_norm(backend, catalog_get("free"), 1.0, 1.0, 0.1, zero_weight())
    assert e.value == 0.0 and e.convergence_flag
    e = estimate_norm(backend, catalog_get("free"), 1.0, 1.0, 0.1, envelope_weight(abs_envelope(catalog_get("free"))))
    assert e.value == 0.0


def test_free_thm2_derivative_weight_below_eight():
    a = derivative_weight(build_thm2_weight(1.0, 1.0, 1.0))
    e = norm_via_kernel(catalog_get("free"), 1.0, 1.0, 0.0, a, tail_rtol=1e-2)
    assert 0 < e.value <= 8.0
    assert e.upper_value <= 8.0


def test_square_barrier_exterior_example():
    e = norm_via_kernel(catalog_get("square_barrier"), 0.5, 2.0, 0.0, exterior_weight(1.0, 1.0),
                        tail_rtol=1e-2)
    bound = 8.0 / (2 * 1 * math.sqrt(2) * 0.5)
    assert bound == pytest.approx(5.657, abs=1e-3)
    assert e.value <= bound and e.upper_value <= bound


def test_cross_backend_example():
    V = catalog_get("square_barrier")
    a = envelope_weight(abs_envelope(V))
    k = norm_via_kernel(V, 0.5, 2.0, 0.01, a)
    m = norm_via_matrix(V, 0.5, 2.0, 0.01, a)
    assert k.convergence_flag and m.convergence_flag
    assert abs(k.value - m.value) <= 0.02 * k.value


def test_matrix_refuses_eps_zero_and_kernel_noncompact():
    V = catalog_get("square_barrier")
    a = envelope_weight(abs_envelope(V))
    with pytest.raises(SpecError):
        norm_via_matrix(V, 1.0, 1.0, 0.0, a)
    with pytest.raises(SpecError):
        norm_via_kernel(catalog_get("wvn_like"), 1.0, 1.0, 0.1, a)
    with pytest.raises(SpecError):
        estimate_norm("lanczos", V, 1.0, 1.0, 0.1, a)


def test_noncompact_matrix_backend_runs():
    V = catalog_get("wvn_like", [1.0, 2.0])
    m = abs_envelope(V)
    e = norm_via_matrix(V, 1.0, 1.0, 0.5, envelope_weight(m), tail_rtol=1e-2)
    assert e.value > 0 and np.isfinite(e.upper_value)


def test_rescaling_free_trivial():
    V = catalog_get("free")
    rep = check_rescaling_invariance(V, 0.5, 2.0, 0.1, window_weight(3.0), backend="matrix")
    assert rep.passed


def test_rescaling_square_barrier_dilation():
    V = catalog_get("square_barrier")
    rep = check_rescaling_invariance(V, 0.5, 2.0, 0.1, abs_envelope(V))
    assert rep.dilation_rel_diff <= 1e-4 and rep.energy_rel_diff <= 1e-4


def test_rescaling_regime_error():
    V = catalog_get("square_barrier")
    with pytest.raises(SpecError):
        check_rescaling_invariance(V, 0.5, 1.0, 0.6, abs_envelope(V))


@given(st.sampled_from(["square_barrier", "gaussian_truncated", "sinh_test"]),
       st.floats(0.3, 1.0), st.floats(0.5, 3.0))
def test_eps_monotone(name, h, E):
    V = catalog_get(name)
    a = envelope_weight(abs_envelope(V))
    vals = [norm_via_kernel(V, h, E, r * E, a).value for r in (0.5, 0.1, 0.01, 0.0)]
    # decreasing eps: values may not decrease by more than the 5% slack
    for big, small in zip(vals, vals[1:]):
        assert big <= 1.05 * small


@given(st.sampled_from(["square_barrier", "gaussian_truncated"]), st.floats(0.3, 1.0), st.floats(0.5, 4.0),
       st.sampled_from([0.01, 0.1, 0.5]))
def test_backends_agree_property(name, h, E, r):
    V = catalog_get(name)
    a = derivative_weight(build_thm1_weight(abs_envelope(V), h, E))
    k = norm_via_kernel(V, h, E, r * E, a).value
    m = norm_via_matrix(V, h, E, r * E, a).value
    assert abs(k - m) <= 0.02 * k


@given(st.floats(0.2, 1.0), st.floats(0.5, 4.0), st.floats(0.0, 0.5))
def test_thm1_weight_below_bound(h, E, r):
    V = catalog_get("sinh_test")
    m = abs_envelope(V)
    a = envelope_weight(m)
    e = norm_via_kernel(V, h, E, r * E, a)
    assert e.value <= math.exp(2 * m.l1_norm / (math.sqrt(E) * h))
