import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sint

from jostkit.errors import SpecError
from jostkit.potentials import abs_envelope, catalog_get, indicator_envelope
from jostkit.weights import (
    build_thm1_weight, build_thm2_weight, check_grid, dump_weight_csv, k_constant, validate_weight,
    verify_w2_condition, weight_from_config,
)

COMPACT = ["square_barrier", "gaussian_truncated", "inverse_sqrt_singular", "sinh_test"]


def test_k_constant():
    assert k_constant(4.0) == 2.0


def test_thm1_indicator_example():
    m = indicator_envelope(1.0)
    w = build_thm1_weight(m, 1.0, 4.0)
    assert w.metadata["a"] == pytest.approx(0.0, abs=1e-12)
    assert w(np.array([1.0]))[0] == pytest.approx(1 - math.exp(-4), rel=1e-14)
    assert w(np.array([1.0]))[0] == pytest.approx(2 * math.exp(-2) * math.sinh(2), rel=1e-14)


def test_thm1_direct_sinh_formula():
    # the sinh form evaluated directly against the stored weight, with a quad oracle for int_a^x m
    V = catalog_get("sinh_test")
    m = abs_envelope(V)
    h, E = 0.7, 2.0
    w = build_thm1_weight(m, h, E)
    k, M, a = k_constant(E), m.l1_norm, w.metadata["a"]
    assert a == pytest.approx(1.0 / 3.0, abs=1e-11)
    for x in [-0.8, -0.1, 0.2, 0.9, 2.0]:
        I, _ = sint.quad(lambda t: abs(V(np.array([t]))[0]), a, x, points=[0.0] if a > 0 > x or x > 0 > a else None)
        ref = 2 * math.exp(-k * M / (2 * h)) * math.sinh(k / h * I)
        assert w(np.array([x]))[0] == pytest.approx(ref, rel=1e-10, abs=1e-14)
        refp = 2 * k / h * math.exp(-k * M / (2 * h)) * math.cosh(k / h * I) * abs(V(np.array([x]))[0])
        assert w.w_prime(np.array([x]))[0] == pytest.approx(refp, rel=1e-10, abs=1e-14)


def test_thm1_degenerate():
    w = build_thm1_weight(abs_envelope(catalog_get("free")), 1.0, 1.0)
    x = np.linspace(-3, 3, 7)
    assert np.all(w(x) == 0) and np.all(w.w_prime(x) == 0)
    assert w.metadata["degenerate"]


@pytest.mark.parametrize("name", COMPACT)
def test_thm1_sup_limit(name):
    V = catalog_get(name)
    m = abs_envelope(V)
    h, E = 0.5, 1.0
    w = build_thm1_weight(m, h, E)
    lim = 1 - math.exp(-k_constant(E) / h * m.l1_norm)
    far = np.array([V.support_radius + 5.0])
    assert w(far)[0] == pytest.approx(lim, rel=1e-13)
    assert w(-far)[0] == pytest.approx(-lim, rel=1e-13)
    assert w(np.array([w.metadata["a"]]))[0] == pytest.approx(0.0, abs=1e-11)


def test_thm2_examples():
    w = build_thm2_weight(1.0, 1.0)
    assert w(np.array([3.0]))[0] == 0.5
    assert w.w_prime(np.array([3.0]))[0] == 0.125
    x = np.linspace(-1, 1, 21)
    assert np.all(w(x) == 0) and np.all(w.w_prime(x) == 0)
    assert w(np.array([1e12]))[0] == pytest.approx(1.0)
    assert w(np.array([-3.0]))[0] == -0.5


def test_thm2_errors():
    with pytest.raises(SpecError):
        build_thm2_weight(1.0, 0.0)
    with pytest.raises(SpecError):
        weight_from_config({"kind": "spline"}, catalog_get("free"), abs_envelope(catalog_get("free")), 1, 1)


@pytest.mark.parametrize("name", COMPACT)
def test_w2_thm1_passes(name):
    V = catalog_get(name)
    w = build_thm1_weight(abs_envelope(V), 0.3, 2.0)
    assert verify_w2_condition(w, V, 0.3, 2.0).passed
    assert validate_weight(w, V).passed


def test_w2_thm2_passes_with_zero_margin():
    V = catalog_get("square_barrier")
    w = build_thm2_weight(1.0, 1.0, 1.0)
    rep = verify_w2_condition(w, V, 1.0, 1.0)
    assert rep.passed
    assert rep.min_margin >= 0.0
    assert validate_weight(w, V).passed


def test_w2_constant_fails():
    V = catalog_get("square_barrier")
    m = abs_envelope(V)
    w = weight_from_config({"kind": "constant", "value": 1.0}, V, m, 1.0, 1.0)
    rep = verify_w2_condition(w, V, 1.0, 1.0)
    assert not rep.passed
    assert abs(rep.worst_x) <= 1.0


def test_lower_bound_chain():
    V = catalog_get("gaussian_truncated")
    m = abs_envelope(V)
    h, E = 0.4, 1.0
    w = build_thm1_weight(m, h, E)
    k = k_constant(E)
    x = check_grid(V, w, 5000)
    lb = 2 * k / h * math.exp(-k * m.l1_norm / (2 * h)) * np.abs(m(x))
    assert np.all(w.w_prime(x) >= lb * (1 - 1e-14))


def test_weight_csv(tmp_path):
    w = build_thm2_weight(1.0, 2.0, 1.0)
    p = dump_weight_csv(w, np.linspace(-3, 3, 7), tmp_path / "w.csv")
    rows = list(csv.reader(p.open()))
    assert rows[0][:3] == ["x", "w", "w_prime"]
    assert len(rows) == 8


@given(st.floats(0.05, 2.0), st.floats(0.25, 8.0), st.sampled_from(COMPACT))
def test_thm1_bounded_and_increasing(h, E, name):
    V = catalog_get(name)
    w = build_thm1_weight(abs_envelope(V), h, E)
    x = np.linspace(-V.support_radius - 1, V.support_radius + 1, 801)
    vals = w(x)
    assert np.all(np.abs(vals) <= 1.0)
    assert np.all(np.diff(vals) >= -1e-15)
    assert w.total_variation <= 2.0


@given(st.floats(0.1, 5.0), st.floats(0.1, 3.0), st.floats(-50, 50))
def test_thm2_integral_of_derivative(R, delta, x):
    w = build_thm2_weight(R, delta)
    q, _ = sint.quad(lambda t: w.w_prime(np.array([t]))[0], -R - 1e-300, x,
                     points=[-R, R] if -R < x else None, limit=200)
    assert w(np.array([x]))[0] - w(np.array([-R]))[0] == pytest.approx(q, abs=1e-9)
    assert abs(w(np.array([x]))[0]) <= 1.0
