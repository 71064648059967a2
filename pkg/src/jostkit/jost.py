"""Jost solutions and scattering coefficients for compactly supported potentials.

The outgoing solution ``u_+`` of ``-h^2 u'' + V u = (E + i eps) u`` is the
solution of the Volterra equation

    u_+(x) = exp(i lam x) + (h^2 lam)^{-1} int_x^R sin(lam (t - x)) V(t) u_+(t) dt,

with ``lam = sqrt(E + i eps) / h``, ``Im lam >= 0``; ``u_-`` solves the mirror
equation from ``-R``.  The support ``[-R, R]`` is cut into panels at the
breakpoints and singular points of ``V``.  On each panel the local Volterra
equation (initial data at the right end) is collocated at Gauss nodes, with
an algebraic substitution on panels that touch a singularity, giving the
2x2 panel transfer map.

Panel maps are normalised to unit determinant and multiplied in 50-digit
arithmetic.  In the tunnelling regime ``|A|`` reaches 1e10 and beyond, and the
scattering identities (``|A|^2 - |B|^2 = 1`` etc.) cannot be represented in
double precision.  The raw determinant defect of the panel maps is kept as
the honest accuracy diagnostic of the collocation.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .errors import ConvergenceError, SolverError, SpecError
from .potentials import Potential
from .quadrature import (
    closed_gauss_nodes,
    gauss_unit,
    integrate_intervals,
    integration_matrix,
    lagrange_matrix,
)

MP = mpmath.MPContext()
MP.dps = 50

DEFAULT_ORDER = 20
# panel acceptance: |lam| * width and width * int|V| / h^2
_PHASE_MAX = 1.5
_POTENTIAL_MAX = 2.25
_COEFF_TOL = 1e-14
_MAX_PANELS = 20_000


def wavenumber(h: float, E: float, eps: float) -> complex | float:
    """``sqrt(E + i eps) / h`` on the branch ``Im >= 0``; real when ``eps == 0``."""
    if eps == 0.0:
        return math.sqrt(E) / h
    lam = cmath.sqrt(complex(E, eps)) / h
    return lam if lam.imag >= 0 else -lam


def check_regime(h: float, E: float, eps: float) -> None:
    if h <= 0:
        raise SpecError("h must be positive")
    if E <= 0:
        raise SpecError("E must be positive")
    if eps < 0:
        raise SpecError("eps must be nonnegative")
    if E < 2.0 * eps:
        raise SpecError(f"outside the regime E >= 2 eps (E={E}, eps={eps})")


# ---------------------------------------------------------------------------
# panel mesh


@dataclass(frozen=True)
class PanelMesh:
    """Panels over ``[-R, R]``; ``grade`` 1/2 marks a singular left/right end."""

    edges: np.ndarray
    grade: np.ndarray
    beta: np.ndarray
    order: int

    @property
    def n_panels(self) -> int:
        return self.grade.size

    def map(self, tau: np.ndarray, panels: np.ndarray | None = None):
        """Physical points and Jacobians for unit parameters ``tau`` on each panel."""
        idx = np.arange(self.n_panels) if panels is None else panels
        a = self.edges[idx][:, None]
        b = self.edges[idx + 1][:, None]
        g = self.grade[idx][:, None]
        bt = self.beta[idx][:, None]
        tau = np.asarray(tau, dtype=float)
        tau = tau[None, :] if tau.ndim == 1 else tau
        w = b - a
        x = a + w * tau
        jac = np.broadcast_to(w, x.shape).copy()
        left = (g == 1)[:, 0]
        right = (g == 2)[:, 0]
        if np.any(left):
            tl = np.broadcast_to(tau, x.shape)[left]
            x[left] = a[left] + w[left] * tl ** bt[left]
            jac[left] = w[left] * bt[left] * tl ** (bt[left] - 1.0)
        if np.any(right):
            tr = 1.0 - np.broadcast_to(tau, x.shape)[right]
            x[right] = b[right] - w[right] * tr ** bt[right]
            jac[right] = w[right] * bt[right] * tr ** (bt[right] - 1.0)
        return x, jac

    def locate(self, x: np.ndarray):
        """Panel index and unit parameter of points inside ``[edges[0], edges[-1]]``."""
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.n_panels - 1)
        a, b = self.edges[idx], self.edges[idx + 1]
        r = np.clip((x - a) / (b - a), 0.0, 1.0)
        tau = r.copy()
        g, bt = self.grade[idx], self.beta[idx]
        left, right = g == 1, g == 2
        tau[left] = r[left] ** (1.0 / bt[left])
        tau[right] = 1.0 - (1.0 - r[right]) ** (1.0 / bt[right])
        return idx, tau


def _coefficient_tail(vals: np.ndarray) -> np.ndarray:
    """Relative size of the two highest Legendre coefficients of panel samples."""
    n = vals.shape[1]
    t, _ = gauss_unit(n)
    vinv = _legendre_inverse(n)
    c = vals @ vinv.T
    scale = np.max(np.abs(c), axis=1)
    tail = np.abs(c[:, -1]) + np.abs(c[:, -2])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(scale > 0, tail / scale, 0.0)
    return r


@lru_cache(maxsize=None)
def _legendre_inverse(n: int) -> np.ndarray:
    from numpy.polynomial import legendre as L

    t, _ = gauss_unit(n)
    return np.linalg.inv(L.legvander(2.0 * t - 1.0, n - 1))


def build_mesh(V: Potential, h: float, lam: complex | float, order: int = DEFAULT_ORDER) -> PanelMesh:
    """Adaptive panel mesh over the support of ``V`` (bisection until resolved)."""
    if V.support_radius is None:
        raise SpecError("Jost solutions need a compactly supported potential (support_radius unset)")
    R = V.support_radius
    if R == 0.0:
        return PanelMesh(np.array([0.0]), np.zeros(0, int), np.zeros(0), order)
    sing = {s.position: s.exponent for s in V.singular_points if -R <= s.position <= R}
    marks = sorted({-R, R} | {b for b in V.breakpoints if -R < b < R} | set(sing))
    # work list of (a, b, grade, beta)
    work = []
    for a, b in zip(marks[:-1], marks[1:]):
        sa, sb = a in sing, b in sing
        if sa and sb:
            m = 0.5 * (a + b)
            work += [(a, m, 1, 1.0 / (1.0 - sing[a])), (m, b, 2, 1.0 / (1.0 - sing[b]))]
        elif sa:
            work.append((a, b, 1, 1.0 / (1.0 - sing[a])))
        elif sb:
            work.append((a, b, 2, 1.0 / (1.0 - sing[b])))
        else:
            work.append((a, b, 0, 1.0))
    tau, w = gauss_unit(order)
    lam_abs = abs(lam)
    done = []
    while work:
        if len(work) + len(done) > _MAX_PANELS:
            raise ConvergenceError("panel mesh refinement exceeded the panel budget")
        arr = np.array(work, dtype=float)
        mesh = PanelMesh(np.concatenate([arr[:, 0], arr[-1:, 1]]), arr[:, 2].astype(int), arr[:, 3], order)
        # edges array above is only valid for contiguous work items; map per item instead
        a, b = arr[:, 0][:, None], arr[:, 1][:, None]
        x, jac = _map_items(arr, tau)
        gv = np.asarray(V(x), dtype=float) * jac
        width = (b - a)[:, 0]
        mass = np.abs(gv) @ w
        ok = (lam_abs * width <= _PHASE_MAX) & (width * mass / h**2 <= _POTENTIAL_MAX)
        ok &= _coefficient_tail(gv) <= _COEFF_TOL
        ok |= width <= 1e-9 * max(R, 1.0)
        nxt = []
        for item, good in zip(work, ok):
            if good:
                done.append(item)
                continue
            a_, b_, g_, bt_ = item
            m = 0.5 * (a_ + b_)
            nxt += [(a_, m, g_ if g_ == 1 else 0, bt_ if g_ == 1 else 1.0),
                    (m, b_, g_ if g_ == 2 else 0, bt_ if g_ == 2 else 1.0)]
        work = nxt
        del mesh
    done.sort(key=lambda it: it[0])
    arr = np.array(done, dtype=float)
    edges = np.concatenate([arr[:, 0], arr[-1:, 1]])
    return PanelMesh(edges, arr[:, 2].astype(int), arr[:, 3], order)


def _map_items(arr: np.ndarray, tau: np.ndarray):
    edges = None  # items may be non-contiguous; map each independently
    a, b = arr[:, 0][:, None], arr[:, 1][:, None]
    g, bt = arr[:, 2][:, None], arr[:, 3][:, None]
    w = b - a
    x = a + w * tau[None, :]
    jac = np.broadcast_to(w, x.shape).copy()
    left, right = (g == 1)[:, 0], (g == 2)[:, 0]
    if np.any(left):
        x[left] = a[left] + w[left] * tau[None, :] ** bt[left]
        jac[left] = w[left] * bt[left] * tau[None, :] ** (bt[left] - 1.0)
    if np.any(right):
        tr = 1.0 - tau[None, :]
        x[right] = b[right] - w[right] * tr ** bt[right]
        jac[right] = w[right] * bt[right] * tr ** (bt[right] - 1.0)
    return x, jac


# ---------------------------------------------------------------------------
# panel solves


@dataclass(frozen=True)
class PanelSolve:
    """Local fundamental solutions on every panel, started at the right panel end.

    ``U[j, k, c]`` / ``dU[j, k, c]`` are u and u' at node k of panel j for the
    initial data ``(u, u')(b_j) = e_c``; ``maps[j]`` sends the state at ``b_j``
    to the state at ``a_j``.
    """

    mesh: PanelMesh
    lam: complex | float
    x: np.ndarray
    jac: np.ndarray
    g: np.ndarray
    U: np.ndarray
    dU: np.ndarray
    maps: np.ndarray
    det_defect: np.ndarray


def solve_panels(V: Potential, h: float, lam, mesh: PanelMesh) -> PanelSolve:
    p = mesh.order
    tau, w = gauss_unit(p)
    S = integration_matrix(p)
    x, jac = mesh.map(tau)
    g = np.asarray(V(x), dtype=float) * jac / h**2
    a = mesh.edges[:-1][:, None]
    b = mesh.edges[1:][:, None]
    dtype = complex if isinstance(lam, complex) else float
    d = x[:, None, :] - x[:, :, None]  # d[j, i, k] = x_k - x_i
    K = S[None] * (np.sin(lam * d) / lam) * g[:, None, :]
    n = mesh.n_panels
    A = np.eye(p, dtype=dtype)[None] - K
    rhs = np.empty((n, p, 2), dtype=dtype)
    rhs[..., 0] = np.cos(lam * (x - b))
    rhs[..., 1] = np.sin(lam * (x - b)) / lam
    U = np.linalg.solve(A, rhs)
    gU = g[..., None] * U
    dU = np.empty_like(U)
    dU[..., 0] = -lam * np.sin(lam * (x - b))
    dU[..., 1] = np.cos(lam * (x - b))
    dU -= np.einsum("jik,jkc->jic", S[None] * np.cos(lam * d), gU)
    # endpoint a
    da = x - a
    ca, sa = np.cos(lam * (a - b))[:, 0], np.sin(lam * (a - b))[:, 0]
    ua = np.stack([ca, sa / lam], axis=-1) + np.einsum("jk,jkc->jc", w[None] * np.sin(lam * da) / lam, gU)
    dua = np.stack([-lam * sa, ca], axis=-1) - np.einsum("jk,jkc->jc", w[None] * np.cos(lam * da), gU)
    maps = np.stack([ua, dua], axis=1)  # maps[j] = [[u1, u2], [u1', u2']]
    det = maps[:, 0, 0] * maps[:, 1, 1] - maps[:, 0, 1] * maps[:, 1, 0]
    return PanelSolve(mesh, lam, x, jac, g, U, dU, maps, np.abs(det - 1.0))


def _mp_maps(ps: PanelSolve):
    """Panel maps in extended precision, normalised to determinant one."""
    out = []
    for m in ps.maps:
        a, b, c, d = (MP.mpc(complex(v)) for v in (m[0, 0], m[0, 1], m[1, 0], m[1, 1]))
        det = a * d - b * c
        s = MP.sqrt(det)
        out.append((a / s, b / s, c / s, d / s))
    return out


# ---------------------------------------------------------------------------
# Jost solutions


@dataclass(frozen=True)
class JostSolution:
    """A Jost solution on ``[-R - pad, R + pad]`` (and beyond, via exact plane waves).

    ``side`` is ``"plus"`` (``u = exp(i lam x)`` for ``x > R``) or ``"minus"``
    (``u = exp(-i lam x)`` for ``x < -R``).  ``far`` holds the plane-wave
    amplitudes on the opposite side: ``(A, B)`` with
    ``u_+ = A e^{i lam x} + B e^{-i lam x}`` for ``x < -R``, or ``(C, D)`` with
    ``u_- = C e^{i lam x} + D e^{-i lam x}`` for ``x > R``.
    """

    side: str
    lam: complex | float
    h: float
    E: float
    eps: float
    R: float
    pad: float
    panels: PanelSolve | None = field(repr=False)
    node_u: np.ndarray = field(repr=False)
    node_du: np.ndarray = field(repr=False)
    edge_states: tuple = field(repr=False)
    far: tuple[complex, complex] = (1.0, 0.0)
    far_mp: tuple = field(default=(), repr=False)

    @property
    def window(self) -> tuple[float, float]:
        return (-self.R - self.pad, self.R + self.pad)

    @property
    def nodes(self) -> np.ndarray:
        return np.zeros(0) if self.panels is None else self.panels.x.ravel()

    def __call__(self, x):
        """Values ``(u(x), u'(x))`` for scalar or array ``x``."""
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.empty(x.shape, dtype=complex)
        du = np.empty(x.shape, dtype=complex)
        lam, R = self.lam, self.R
        right, left = x > R, x < -R
        inside = ~(right | left)
        if self.side == "plus":
            e = np.exp(1j * lam * x[right])
            u[right], du[right] = e, 1j * lam * e
            u[left], du[left] = self._two_waves(x[left])
        else:
            e = np.exp(-1j * lam * x[left])
            u[left], du[left] = e, -1j * lam * e
            u[right], du[right] = self._two_waves(x[right])
        if np.any(inside):
            if self.panels is None:
                xi = x[inside]
                s = 1.0 if self.side == "plus" else -1.0
                e = np.exp(s * 1j * lam * xi)
                u[inside], du[inside] = e, s * 1j * lam * e
            else:
                u[inside], du[inside] = self._interpolate(x[inside])
        if scalar:
            return complex(u[0]), complex(du[0])
        return u, du

    def scaled(self, x):
        """``(u, u')`` times ``exp(Im(lam) x)`` (plus) or ``exp(-Im(lam) x)`` (minus).

        The factor removes the exponential growth of the Jost solution away
        from its own side, so products ``u_-(x) u_+(y)`` can be assembled on
        long windows without overflow.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lam, R = self.lam, self.R
        kap = lam.imag if isinstance(lam, complex) else 0.0
        sgn = 1.0 if self.side == "plus" else -1.0
        if kap == 0.0:
            return self(x)
        kr = lam.real
        u = np.empty(x.shape, dtype=complex)
        du = np.empty(x.shape, dtype=complex)
        own = x > R if self.side == "plus" else x < -R
        far = x < -R if self.side == "plus" else x > R
        mid = ~(own | far)
        e = np.exp(sgn * 1j * kr * x[own])
        u[own], du[own] = e, sgn * 1j * lam * e
        c1, c2 = self.far
        xf = x[far]
        if self.side == "plus":
            p, q = c1 * np.exp(1j * kr * xf), c2 * np.exp(-1j * kr * xf + 2.0 * kap * xf)
        else:
            p, q = c1 * np.exp(1j * kr * xf - 2.0 * kap * xf), c2 * np.exp(-1j * kr * xf)
        u[far], du[far] = p + q, 1j * lam * (p - q)
        if np.any(mid):
            um, dum = self(x[mid])
            f = np.exp(sgn * kap * x[mid])
            u[mid], du[mid] = um * f, dum * f
        return u, du

    def _two_waves(self, x):
        c1, c2 = self.far
        ep, em = np.exp(1j * self.lam * x), np.exp(-1j * self.lam * x)
        return c1 * ep + c2 * em, 1j * self.lam * (c1 * ep - c2 * em)

    def _interpolate(self, x):
        ps = self.panels
        idx, tau = ps.mesh.locate(x)
        nodes, bw = closed_gauss_nodes(ps.mesh.order)
        P = lagrange_matrix(nodes, tau, bw)
        return (np.sum(P * self.node_u[idx], axis=1), np.sum(P * self.node_du[idx], axis=1))


@dataclass(frozen=True)
class HighPrecision:
    """Scattering coefficients in 50-digit arithmetic (mpmath)."""

    lam: object
    A: object
    B: object
    C: object
    D: object
    W: object


@dataclass(frozen=True)
class ScatteringData:
    lam: complex | float
    A: complex
    B: complex
    C: complex
    D: complex
    W: complex
    h: float
    E: float
    eps: float
    W_spread: float = 0.0
    panel_wronskian_defect: float = 0.0
    hp: HighPrecision | None = field(default=None, repr=False)

    def unitarity_defects(self) -> dict[str, float]:
        """Defects of the Wronskian and unitarity identities, evaluated in extended precision."""
        hp = self.hp
        lam = hp.lam
        out = {
            "A_minus_D_rel": float(abs(hp.A - hp.D) / abs(hp.A)),
            "W_vs_2iLamA_rel": float(abs(hp.W - 2j * lam * hp.A) / abs(hp.W)),
            "W_vs_2iLamD_rel": float(abs(hp.W - 2j * lam * hp.D) / abs(hp.W)),
        }
        if self.eps == 0.0:
            out["AB_identity"] = float(abs(abs(hp.A) ** 2 - abs(hp.B) ** 2 - 1))
            out["CD_identity"] = float(abs(abs(hp.C) ** 2 - abs(hp.D) ** 2 + 1))
            out["B_plus_conjC"] = float(abs(hp.B + MP.conj(hp.C)))
        return out


def _state_list_plus(ps: PanelSolve, mp_maps, lam_mp, R):
    """States of u_+ at every panel edge (ordered left to right), in mp."""
    e = MP.exp(1j * lam_mp * R)
    state = (e, 1j * lam_mp * e)
    states = [None] * (ps.mesh.n_panels + 1)
    states[-1] = state
    for j in range(ps.mesh.n_panels - 1, -1, -1):
        a, b, c, d = mp_maps[j]
        u, du = states[j + 1]
        states[j] = (a * u + b * du, c * u + d * du)
    return states


def _state_list_minus(ps: PanelSolve, mp_maps, lam_mp, R):
    e = MP.exp(1j * lam_mp * R)
    states = [None] * (ps.mesh.n_panels + 1)
    states[0] = (e, -1j * lam_mp * e)
    for j in range(ps.mesh.n_panels):
        a, b, c, d = mp_maps[j]
        u, du = states[j]
        # inverse of a unit-determinant map is its adjugate
        states[j + 1] = (d * u - b * du, -c * u + a * du)
    return states


def _node_values(ps: PanelSolve, states):
    """u, u' at closed panel nodes (left end, Gauss nodes, right end)."""
    n, p = ps.mesh.n_panels, ps.mesh.order
    right = np.array([[complex(s[0]), complex(s[1])] for s in states[1:]])
    left = np.array([[complex(s[0]), complex(s[1])] for s in states[:-1]])
    u_in = np.einsum("jkc,jc->jk", ps.U, right)
    du_in = np.einsum("jkc,jc->jk", ps.dU, right)
    u = np.concatenate([left[:, :1], u_in, right[:, :1]], axis=1)
    du = np.concatenate([left[:, 1:], du_in, right[:, 1:]], axis=1)
    return u, du


@lru_cache(maxsize=64)
def _solve_system(V: Potential, funckey: int, h: float, E: float, eps: float, order: int, pad: float):
    check_regime(h, E, eps)
    lam = wavenumber(h, E, eps)
    mesh = build_mesh(V, h, lam, order)
    R = V.support_radius
    lam_mp = MP.mpc(complex(lam)) if isinstance(lam, complex) else MP.mpf(lam)
    if mesh.n_panels == 0:
        one, zero = MP.mpf(1), MP.mpf(0)
        plus = JostSolution("plus", lam, h, E, eps, R, pad, None, np.zeros((0, 0)), np.zeros((0, 0)), (),
                            (1.0, 0.0), (one, zero))
        minus = JostSolution("minus", lam, h, E, eps, R, pad, None, np.zeros((0, 0)), np.zeros((0, 0)), (),
                             (0.0, 1.0), (zero, one))
        return plus, minus, 0.0
    ps = solve_panels(V, h, lam, mesh)
    mp_maps = _mp_maps(ps)
    sp = _state_list_plus(ps, mp_maps, lam_mp, R)
    sm = _state_list_minus(ps, mp_maps, lam_mp, R)
    eR = MP.exp(1j * lam_mp * R)
    u, du = sp[0]
    A = eR * (u + du / (1j * lam_mp)) / 2
    B = (u - du / (1j * lam_mp)) / (2 * eR)
    u, du = sm[-1]
    C = (u + du / (1j * lam_mp)) / (2 * eR)
    D = eR * (u - du / (1j * lam_mp)) / 2
    pu, pdu = _node_values(ps, sp)
    mu, mdu = _node_values(ps, sm)
    plus = JostSolution("plus", lam, h, E, eps, R, pad, ps, pu, pdu, tuple(sp), (complex(A), complex(B)), (A, B))
    minus = JostSolution("minus", lam, h, E, eps, R, pad, ps, mu, mdu, tuple(sm), (complex(C), complex(D)), (C, D))
    return plus, minus, float(np.max(ps.det_defect))


def solve_jost(V: Potential, h: float, E: float, eps: float, side: str,
               order: int = DEFAULT_ORDER, pad: float = 1.0) -> JostSolution:
    """Jost solution ``u_+`` (``side="plus"``) or ``u_-`` (``side="minus"``)."""
    if side not in ("plus", "minus"):
        raise SpecError("side must be 'plus' or 'minus'")
    plus, minus, _ = _solve_system(V, id(V.func), float(h), float(E), float(eps), order, float(pad))
    return plus if side == "plus" else minus


def panel_wronskian_defect(V: Potential, h: float, E: float, eps: float, order: int = DEFAULT_ORDER) -> float:
    """Largest ``|det(panel map) - 1|`` before normalisation (collocation accuracy)."""
    return _solve_system(V, id(V.func), float(h), float(E), float(eps), order, 1.0)[2]


def _wronskian(u1, du1, u2, du2):
    return u1 * du2 - du1 * u2


def extract_scattering(u_plus: JostSolution, u_minus: JostSolution, n_samples: int = 7) -> ScatteringData:
    """Read off A, B, C, D and the Wronskian ``W(u_-, u_+)`` from a pair of Jost solutions."""
    key = (u_plus.lam, u_plus.h, u_plus.E, u_plus.eps, u_plus.R)
    if u_plus.side != "plus" or u_minus.side != "minus" or key != (
            u_minus.lam, u_minus.h, u_minus.E, u_minus.eps, u_minus.R):
        raise SpecError("extract_scattering needs u_plus and u_minus from the same (V, h, E, eps)")
    lam = u_plus.lam
    (A_mp, B_mp), (C_mp, D_mp) = u_plus.far_mp, u_minus.far_mp
    lam_mp = MP.mpc(complex(lam)) if isinstance(lam, complex) else MP.mpf(lam)
    if u_plus.panels is None:
        W_mp = 2j * lam_mp
        W_edges = [W_mp]
    else:
        W_edges = [_wronskian(m[0], m[1], p[0], p[1]) for p, m in zip(u_plus.edge_states, u_minus.edge_states)]
        W_mp = MP.fsum(W_edges) / len(W_edges)
    W = complex(W_mp)
    if abs(W) < 1e-12:
        raise SolverError(f"vanishing Wronskian |W| = {abs(W):.3e}; E + i eps is at or near an eigenvalue")
    # double-precision samples: exterior points and interior nodes
    R, pad = u_plus.R, u_plus.pad
    xs = [-R - pad, -R - 0.5 * pad, R + 0.5 * pad, R + pad]
    if u_plus.panels is not None:
        nodes = u_plus.nodes
        pick = np.linspace(0, nodes.size - 1, max(n_samples - len(xs), 1)).astype(int)
        xs += list(nodes[pick])
    xs = np.array(xs)
    up, dup = u_plus(xs)
    um, dum = u_minus(xs)
    samples = np.concatenate([_wronskian(um, dum, up, dup), [complex(w) for w in W_edges]])
    spread = float(np.max(np.abs(samples - W)) / abs(W))
    defect = 0.0
    if u_plus.panels is not None:
        defect = float(np.max(u_plus.panels.det_defect))
    hp = HighPrecision(lam_mp, A_mp, B_mp, C_mp, D_mp, W_mp)
    return ScatteringData(lam, complex(A_mp), complex(B_mp), complex(C_mp), complex(D_mp), W,
                          u_plus.h, u_plus.E, u_plus.eps, spread, defect, hp)


def scattering_data(V: Potential, h: float, E: float, eps: float = 0.0,
                    order: int = DEFAULT_ORDER) -> ScatteringData:
    """Convenience wrapper: solve both Jost solutions and extract the coefficients."""
    return extract_scattering(solve_jost(V, h, E, eps, "plus", order), solve_jost(V, h, E, eps, "minus", order))


# ---------------------------------------------------------------------------
# diagnostics: global collocation matrix, Picard iteration, residual oracle


def volterra_system(V: Potential, h: float, E: float, eps: float, side: str = "plus",
                    order: int = DEFAULT_ORDER):
    """Global collocation of the Volterra equation: nodes ``x``, free term ``f``, kernel ``K``.

    The discrete equation is ``u = f + K u`` on all panel nodes.
    """
    check_regime(h, E, eps)
    lam = wavenumber(h, E, eps)
    mesh = build_mesh(V, h, lam, order)
    p = order
    tau, w = gauss_unit(p)
    S = integration_matrix(p)
    x, jac = mesh.map(tau)
    g = (np.asarray(V(x), dtype=float) * jac / h**2).ravel()
    xf = x.ravel()
    n = mesh.n_panels
    pan = np.repeat(np.arange(n), p)
    loc = np.tile(np.arange(p), n)
    W = np.zeros((n * p, n * p))
    same = pan[:, None] == pan[None, :]
    if side == "plus":
        W[pan[:, None] < pan[None, :]] = np.broadcast_to(w[loc][None, :], W.shape)[pan[:, None] < pan[None, :]]
        Sl = S[loc[:, None], loc[None, :]]
        W[same] = Sl[same]
        d = xf[None, :] - xf[:, None]
        f = np.exp(1j * lam * xf)
    else:
        W[pan[:, None] > pan[None, :]] = np.broadcast_to(w[loc][None, :], W.shape)[pan[:, None] > pan[None, :]]
        Sl = w[loc][None, :] - S[loc[:, None], loc[None, :]]
        W[same] = Sl[same]
        d = xf[:, None] - xf[None, :]
        f = np.exp(-1j * lam * xf)
    K = W * np.sin(lam * d) / lam * g[None, :]
    return xf, f, K


def picard_iterates(V: Potential, h: float, E: float, eps: float, side: str = "plus",
                    n_iter: int = 30, order: int = DEFAULT_ORDER) -> tuple[np.ndarray, float]:
    """Sup-norm differences of successive Picard iterates and the contraction diagnostic.

    The diagnostic ``l1_norm / (h^2 |lam|)`` controls the factorial decay
    ``diagnostic**n / n!`` of the differences.
    """
    x, f, K = volterra_system(V, h, E, eps, side, order)
    u = f.copy()
    diffs = []
    for _ in range(n_iter):
        nxt = f + K @ u
        diffs.append(float(np.max(np.abs(nxt - u))))
        u = nxt
    lam = wavenumber(h, E, eps)
    return np.array(diffs), V.l1_norm / (h**2 * abs(lam))


def volterra_residual(V: Potential, sol: JostSolution, x: np.ndarray | None = None) -> float:
    """Relative residual of the global Volterra equation, re-evaluated by adaptive quadrature.

    The integrals ``int sin(lam t) V u`` and ``int cos(lam t) V u`` are
    computed between consecutive evaluation points with singularity-aware
    adaptive quadrature on the interpolated solution; independent of the
    collocation rule used to produce ``sol``.
    """
    R = sol.R
    if x is None:
        x = sol.nodes
    x = np.sort(np.asarray(x, dtype=float))
    if x.size == 0:
        return 0.0
    lam = sol.lam
    sing = {s.position: s.exponent for s in V.singular_points}
    marks = sorted({-R, R} | {b for b in V.breakpoints if -R < b < R} | set(sing))

    def fs(t):
        return np.sin(lam * t) * V(t) * sol(t)[0]

    def fc(t):
        return np.cos(lam * t) * V(t) * sol(t)[0]

    pts = np.unique(np.concatenate([x, [-R, R], marks]))
    pts = pts[(pts >= -R) & (pts <= R)]
    lo, hi = pts[:-1], pts[1:]
    al = np.array([sing.get(p, 0.0) for p in lo])
    ah = np.array([sing.get(p, 0.0) for p in hi])

    def cplx_integrals(fun):
        re = integrate_intervals(lambda t: np.real(fun(t)), lo, hi, al, ah, rtol=1e-13)
        im = integrate_intervals(lambda t: np.imag(fun(t)), lo, hi, al, ah, rtol=1e-13)
        return re + 1j * im

    Is, Ic = cplx_integrals(fs), cplx_integrals(fc)
    # integral from pts[i] to R
    tail_s = np.concatenate([np.cumsum(Is[::-1])[::-1], [0.0]])
    tail_c = np.concatenate([np.cumsum(Ic[::-1])[::-1], [0.0]])
    head_s = np.concatenate([[0.0], np.cumsum(Is)])
    head_c = np.concatenate([[0.0], np.cumsum(Ic)])
    pos = np.searchsorted(pts, x)
    u = sol(x)[0]
    c, s = np.cos(lam * x), np.sin(lam * x)
    if sol.side == "plus":
        integral = c * tail_s[pos] - s * tail_c[pos]  # int_x^R sin(lam (t - x)) V u
        rhs = np.exp(1j * lam * x) + integral / (sol.h**2 * lam)
    else:
        integral = s * head_c[pos] - c * head_s[pos]  # int_{-R}^x sin(lam (x - t)) V u
        rhs = np.exp(-1j * lam * x) + integral / (sol.h**2 * lam)
    return float(np.max(np.abs(u - rhs)) / np.max(np.abs(u)))
