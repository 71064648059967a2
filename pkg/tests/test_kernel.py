import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jostkit.errors import SpecError
from jostkit.jost import wavenumber
from jostkit.kernel import (
    build_kernel, dump_kernel_csv, exterior_grid, exterior_kernel_bound_check, free_kernel, kernel_value,
    resolvent_defect,
)
from jostkit.potentials import catalog_get

COMPACT = ["square_barrier", "gaussian_truncated", "inverse_sqrt_singular", "sinh_test"]


def closed_form(h, lam, x, y):
    # written out independently of free_kernel
    return 1j * np.exp(1j * lam * abs(x - y)) / (2 * h * h * lam)


def test_free_kernel_points():
    K = build_kernel(catalog_get("free"), 1.0, 1.0, 0.0)
    assert kernel_value(K, 0.0, 0.0) == pytest.approx(0.5j, rel=1e-14)
    assert kernel_value(K, 0.0, math.pi) == pytest.approx(-0.5j, rel=1e-14)


@pytest.mark.parametrize("h, E, eps", [(1.0, 1.0, 0.0), (0.5, 2.0, 0.0), (0.7, 1.0, 0.3)])
def test_free_kernel_grid(h, E, eps):
    K = build_kernel(catalog_get("free"), h, E, eps)
    lam = wavenumber(h, E, eps)
    x = np.linspace(-4, 4, 50)
    ref = np.array([[closed_form(h, lam, a, b) for b in x] for a in x])
    got = K.matrix(x)
    assert np.max(np.abs(got - ref) / np.abs(ref)) <= 1e-10
    np.testing.assert_allclose(free_kernel(h, lam, x[:, None], x[None, :]), ref, rtol=1e-14)


@pytest.mark.parametrize("name", COMPACT)
def test_symmetry(name):
    V = catalog_get(name)
    K = build_kernel(V, 0.5, 2.0, 0.1)
    R = V.support_radius
    x = np.linspace(-2 * R, 2 * R, 23)
    M = K.matrix(x)
    assert np.max(np.abs(M - M.T)) <= 1e-10 * np.max(np.abs(M))
    assert kernel_value(K, 2 * R, 3 * R) == pytest.approx(kernel_value(K, 3 * R, 2 * R), rel=1e-12)


def test_formula_for_x_below_y():
    V = catalog_get("square_barrier")
    K = build_kernel(V, 1.0, 2.0, 0.0)
    sd = K.scattering
    x, y = -0.4, 0.8
    ref = -K.u_minus(x)[0] * K.u_plus(y)[0] / (sd.h**2 * sd.W)
    assert kernel_value(K, x, y) == pytest.approx(ref, rel=1e-10)


def test_exterior_bound_free_equality():
    K = build_kernel(catalog_get("free"), 1.0, 1.0, 0.0)
    rep = exterior_kernel_bound_check(K)
    assert rep.max_abs_K == pytest.approx(0.5, rel=1e-14)
    assert rep.bound_crude == 1.0
    assert rep.passed


def test_exterior_bound_square_barrier():
    K = build_kernel(catalog_get("square_barrier", [1, 1]), 0.5, 2.0, 0.0)
    rep = exterior_kernel_bound_check(K)
    assert rep.bound_crude == pytest.approx(1 / (0.5 * math.sqrt(2)))
    assert rep.max_abs_K <= rep.bound_AB <= rep.bound_crude
    assert rep.passed


def test_exterior_bound_errors():
    K = build_kernel(catalog_get("square_barrier"), 1.0, 2.0, 0.1)
    with pytest.raises(SpecError):
        exterior_kernel_bound_check(K)
    K0 = build_kernel(catalog_get("square_barrier"), 1.0, 2.0, 0.0)
    with pytest.raises(SpecError):
        exterior_kernel_bound_check(K0, np.array([[0.5, 3.0]]))


def test_exterior_grid_outside_support():
    g = exterior_grid(1.5)
    assert np.all(np.abs(g) > 1.5)


@pytest.mark.parametrize("name", COMPACT)
@pytest.mark.parametrize("eps", [0.0, 0.2])
def test_resolvent_defect(name, eps):
    V = catalog_get(name)
    K = build_kernel(V, 0.5, 1.0, eps)
    f = lambda x: np.exp(-4 * (x - 0.3) ** 2) * (np.abs(x - 0.3) < 3)
    assert resolvent_defect(K, f, -4.0, 4.0) <= 1e-6


def test_kernel_csv(tmp_path):
    K = build_kernel(catalog_get("square_barrier"), 1.0, 2.0, 0.0)
    xs = np.linspace(-2, 2, 5)
    p = dump_kernel_csv(K, xs, xs, tmp_path / "k.csv")
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["x", "y", "ReK", "ImK"]
    assert len(rows) == 26
    assert complex(float(rows[7][2]), float(rows[7][3])) == pytest.approx(kernel_value(K, xs[1], xs[1]), rel=1e-11)


@given(st.sampled_from(COMPACT), st.floats(0.1, 1.0), st.floats(0.5, 4.0))
def test_exterior_bound_property(name, h, E):
    rep = exterior_kernel_bound_check(build_kernel(catalog_get(name), h, E, 0.0))
    assert rep.passed_crude and rep.passed_AB and rep.chain_ok
