import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sint

from jostkit.errors import CatalogError
from jostkit.potentials import (
    CATALOG_NAMES, abs_envelope, catalog_get, cumulative_abs, domination_margin, indicator_envelope,
    potential_from_config, power_envelope,
)


def test_free_is_zero():
    V = catalog_get("free", [])
    assert V.l1_norm == 0.0
    assert V.support_radius == 0.0
    assert np.all(V(np.linspace(-5, 5, 11)) == 0.0)


def test_square_barrier_l1():
    V = catalog_get("square_barrier", [1, 1])
    assert V.l1_norm == 2.0
    assert V(np.array([0.0]))[0] == 1.0


def test_inverse_sqrt_l1_against_quad():
    V = catalog_get("inverse_sqrt_singular", [1, 1])
    assert V.l1_norm == pytest.approx(4.0, rel=1e-14)
    # independent oracle: scipy's algebraic-weight quadrature
    q, _ = sint.quad(lambda x: 1.0, 0.0, 1.0, weight="alg", wvar=(-0.5, 0.0))
    assert 2 * q == pytest.approx(V.l1_norm, rel=1e-12)
    assert [(s.position, s.exponent) for s in V.singular_points] == [(0.0, 0.5)]


@pytest.mark.parametrize("V, x, expected", [
    (catalog_get("square_barrier", [1, 1]), 0.0, 1.0),
    (catalog_get("free", []), 5.0, 0.0),
    (catalog_get("inverse_sqrt_singular", [1, 1]), 0.0, 2.0),
])
def test_cumulative_examples(V, x, expected):
    assert cumulative_abs(V, x) == pytest.approx(expected, abs=1e-8)


def test_cumulative_inverse_sqrt_closed_form():
    V = catalog_get("inverse_sqrt_singular", [1, 1])
    for x in [-0.9, -0.25, -1e-6, 1e-6, 0.3, 0.99]:
        exact = 2.0 - 2.0 * math.sqrt(-x) if x < 0 else 2.0 + 2.0 * math.sqrt(x)
        assert cumulative_abs(V, x) == pytest.approx(exact, abs=1e-8)


def test_gaussian_cumulative_against_quad():
    V = catalog_get("gaussian_truncated", [1, 0.5, 3])
    q, _ = sint.quad(lambda t: math.exp(-2 * t * t), -3, 0.7, epsabs=1e-14, epsrel=1e-13)
    assert cumulative_abs(V, 0.7) == pytest.approx(q, rel=1e-10)


def test_unknown_and_bad_params():
    with pytest.raises(CatalogError):
        catalog_get("nope")
    with pytest.raises(CatalogError):
        catalog_get("wvn_like", [1.0, 0.0])
    with pytest.raises(CatalogError):
        catalog_get("square_barrier", [1.0])


@pytest.mark.parametrize("name", [n for n in CATALOG_NAMES if n != "wvn_like"])
def test_compact_support_exact_zero(name):
    V = catalog_get(name)
    R = V.support_radius
    x = np.concatenate([R + np.geomspace(1e-12, 50, 200), -R - np.geomspace(1e-12, 50, 200)])
    assert np.all(np.asarray(V(x)) == 0.0)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_cumulative_limit_is_l1(name):
    V = catalog_get(name)
    far = V.extent + 1.0 if V.is_compact else 5000.0
    tail = 0.0 if V.is_compact else 2 * V.tail_abs(far)
    assert cumulative_abs(V, far) + tail / 2 == pytest.approx(V.l1_norm, abs=1e-8)
    assert cumulative_abs(V, math.inf) == V.l1_norm


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_envelope_dominates(name):
    V = catalog_get(name)
    assert domination_margin(abs_envelope(V), V) >= 0.0


def test_power_envelope_dominates_wvn():
    V = catalog_get("wvn_like", [1.0, 0.5])
    assert domination_margin(power_envelope(1.0, 0.5, V), V) >= 0.0
    assert domination_margin(indicator_envelope(0.5, 0.5, V), V) < 0.0


def test_config_roundtrip():
    V, m = potential_from_config({"name": "square_barrier", "params": [2, 0.5]})
    assert V.l1_norm == 2.0 and m.l1_norm == 2.0
    _, m2 = potential_from_config({"name": "free", "envelope": {"kind": "indicator", "params": [1.0]}})
    assert m2.l1_norm == pytest.approx(2.0)


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_cumulative_monotone(x, y):
    V = catalog_get("sinh_test")
    lo, hi = sorted((x, y))
    assert cumulative_abs(V, lo) <= cumulative_abs(V, hi) + 1e-14


@given(st.floats(0.1, 3.0), st.floats(0.1, 2.0))
def test_square_barrier_l1_property(V0, R):
    V = catalog_get("square_barrier", [V0, R])
    assert cumulative_abs(V, R + 1) == pytest.approx(2 * V0 * R, rel=1e-12)
