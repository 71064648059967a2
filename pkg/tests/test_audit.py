import csv
import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, strategies as st

from jostkit.audit import (
    audit_apriori_bound, audit_energy, dump_trace_csv, gaussian_bump, oscillatory_packet, smoothed_plateau,
    test_function_from_config as tf_from_config, zero_function,
)
from jostkit.errors import SpecError
from jostkit.kernel import apply_grid, build_kernel, panel_derivative
from jostkit.norms import fd_hamiltonian, make_grid
from jostkit.potentials import abs_envelope, catalog_get
from jostkit.weights import build_thm1_weight, build_thm2_weight


def thm1(V, h, E):
    return build_thm1_weight(abs_envelope(V), h, E)


def test_zero_data():
    V = catalog_get("square_barrier")
    tr = audit_energy(V, thm1(V, 1.0, 1.0), zero_function(), 1.0, 1.0, 0.1)
    assert np.all(tr.u == 0) and np.all(tr.F == 0)
    assert tr.flux_integral == 0.0
    ap = audit_apriori_bound(tr)
    assert ap.lhs == 0.0 and ap.rhs == 0.0 and ap.passed


def test_free_thm2_flux_identity():
    V = catalog_get("free")
    tr = audit_energy(V, build_thm2_weight(1.0, 1.0, 1.0), gaussian_bump(center=2.5), 1.0, 1.0, 0.1)
    assert np.all(tr.F >= 0)
    assert abs(tr.flux_integral) <= 1e-6 * tr.int_wpF
    assert tr.eps_identity_rel <= 1e-6


def test_square_barrier_margin():
    V = catalog_get("square_barrier", [1, 1])
    tr = audit_energy(V, thm1(V, 0.5, 2.0), gaussian_bump(), 0.5, 2.0, 0.05)
    assert tr.min_relative_margin >= -1e-8
    assert tr.flux_relative <= 1e-6


def test_apriori_free_thm2():
    V = catalog_get("free")
    tr = audit_energy(V, build_thm2_weight(1.0, 1.0, 1.0), gaussian_bump(center=2.5), 1.0, 1.0, 0.25)
    ap = audit_apriori_bound(tr)
    assert 0 < ap.ratio <= 1
    assert ap.lhs == pytest.approx(ap.potential_term + ap.kinetic_term)


def test_expansion_matches_numerical_derivative():
    # dual route: the analytic (wF)' against spectral differentiation of wF on each panel
    V = catalog_get("gaussian_truncated")
    h, E, eps = 0.5, 1.0, 0.2
    K = build_kernel(V, h, E, eps)
    w = thm1(V, h, E)
    v = oscillatory_packet()
    tr = audit_energy(V, w, v, h, E, eps, window=(-6.0, 6.0), K=K)
    grid = apply_grid(K, -6.0, 6.0, breakpoints=[b for b in (*v.breakpoints, *w.breakpoints) if -6 < b < 6])
    assert np.allclose(grid.nodes, tr.x)
    num = panel_derivative(grid, tr.wF)
    assert np.max(np.abs(num - tr.dwF)) <= 1e-7 * np.max(np.abs(tr.dwF))


def test_solution_against_finite_differences():
    V = catalog_get("square_barrier")
    h, E, eps = 0.7, 1.0, 0.3
    w = thm1(V, h, E)
    v = gaussian_bump(center=0.2)
    tr = audit_energy(V, w, v, h, E, eps)
    grid = make_grid(-30.0, 30.0, 0.004, anchors=[-1.0, 1.0])
    xc = grid.centers
    H = fd_hamiltonian(V, h, grid)
    g = np.sqrt(w.w_prime(xc)) * v(xc)
    u_fd = spla.spsolve((H - complex(E, eps) * sp.identity(grid.n, format="csc")).tocsc(), g)
    pick = np.abs(tr.x) < 2.5
    ref = np.interp(tr.x[pick], xc, u_fd.real) + 1j * np.interp(tr.x[pick], xc, u_fd.imag)
    assert np.max(np.abs(ref - tr.u[pick])) <= 1e-3 * np.max(np.abs(tr.u))


def test_eps_zero_uses_boundary_balance():
    V = catalog_get("square_barrier")
    tr = audit_energy(V, thm1(V, 1.0, 1.0), gaussian_bump(), 1.0, 1.0, 0.0)
    assert tr.flux_balance <= 1e-8
    assert tr.boundary_term > 0
    with pytest.raises(SpecError):
        audit_energy(catalog_get("wvn_like"), thm1(V, 1.0, 1.0), gaussian_bump(), 1.0, 1.0, 0.0)


def test_test_function_library():
    p = smoothed_plateau(1.0, 0.5)
    assert p(np.array([0.0]))[0] == 1.0
    assert p(np.array([1.6]))[0] == 0.0
    assert tf_from_config("gaussian").name.startswith("gaussian")
    assert tf_from_config({"kind": "packet", "xi": 2.0}).norm_sq > 0
    with pytest.raises(SpecError):
        tf_from_config({"kind": "wavelet"})
    with pytest.raises(SpecError):
        tf_from_config({"kind": "gaussian", "sigma": 1.0})


def test_trace_csv(tmp_path):
    V = catalog_get("square_barrier")
    tr = audit_energy(V, thm1(V, 1.0, 1.0), gaussian_bump(), 1.0, 1.0, 0.1)
    rows = list(csv.reader(dump_trace_csv(tr, tmp_path / "t.csv").open()))
    assert rows[0] == ["x", "F", "wF", "dwF", "margin"]
    assert len(rows) == tr.x.size + 1


@given(st.sampled_from(["free", "square_barrier", "sinh_test"]), st.floats(0.3, 1.0), st.floats(0.5, 4.0),
       st.floats(0.02, 0.5), st.floats(-1.5, 1.5), st.floats(0.2, 1.0), st.sampled_from(["thm1", "thm2"]))
def test_audit_identities_property(name, h, E, r, center, width, kind):
    V = catalog_get(name)
    if kind == "thm1":
        m = abs_envelope(V) if name != "free" else abs_envelope(catalog_get("square_barrier"))
        w = build_thm1_weight(m, h, E)
    else:
        w = build_thm2_weight(1.0, 1.0, E)
        center = center + math.copysign(2.5, center)
    tr = audit_energy(V, w, gaussian_bump(center=center, width=width), h, E, r * E)
    assert tr.flux_relative <= 1e-6
    assert tr.eps_identity_rel <= 1e-6
    assert tr.min_relative_margin >= -1e-8
    assert audit_apriori_bound(tr).ratio <= 1.0
