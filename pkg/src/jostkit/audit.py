"""Energy audit of the weighted resolvent estimate.

For ``u = (P - E - i eps)^{-1} (w')^{1/2} v`` and the pointwise energy
``F = |h u'|^2 + E |u|^2`` the equation gives

    (wF)' = -2 w (w')^{1/2} Re v conj(u') + 2 w V Re u conj(u')
            - 2 w Re(i eps u conj(u')) + w' |h u'|^2 + E w' |u|^2,

which is assembled pointwise from ``u, u'`` (no numerical differentiation).
``u`` and ``u'`` come from the Green's function factorisation on panels that
follow the Jost mesh, so singular potentials are resolved.  The window is
extended past the supports of ``v``, ``V`` and the weight breakpoints until
``exp(-2 Im(lam) L)`` drops below ``boundary_rtol``; then ``wF`` is negligible at
the window ends and ``int (wF)'`` must vanish.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import SpecError
from .jost import check_regime, wavenumber
from .kernel import ApplyGrid, KernelEval, apply_grid, build_kernel, green_apply
from .potentials import Potential
from .quadrature import integrate
from .weights import WeightFunction


@dataclass(frozen=True)
class TestFunction:
    """A bounded source ``v`` with support ``[lo, hi]`` and its non-smooth points."""

    __test__ = False  # keep pytest from collecting the class

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lo: float
    hi: float
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, self.func(x), 0.0).astype(complex)

    @property
    def norm_sq(self) -> float:
        f = lambda x: np.abs(self(x)) ** 2
        return integrate(f, self.lo, self.hi, breakpoints=self.breakpoints)


def gaussian_bump(center: float = 0.0, width: float = 0.5, cutoff: float = 8.0) -> TestFunction:
    """``exp(-(x-c)^2 / 2s^2)`` cut off at ``cutoff`` standard deviations."""
    lo, hi = center - cutoff * width, center + cutoff * width
    return TestFunction(f"gaussian({center:g},{width:g})",
                        lambda x: np.exp(-0.5 * ((x - center) / width) ** 2), lo, hi, (lo, hi))


def smoothed_plateau(half_width: float = 1.0, taper: float = 0.5, center: float = 0.0) -> TestFunction:
    """1 on ``[c-a, c+a]`` with cosine-squared ramps of length ``taper``; C^1 and compact."""
    a, s, c = half_width, taper, center

    def f(x):
        d = np.clip((np.abs(x - c) - a) / s, 0.0, 1.0)
        return np.cos(0.5 * np.pi * d) ** 2

    return TestFunction(f"plateau({a:g},{s:g},{c:g})", f, c - a - s, c + a + s,
                        (c - a - s, c - a, c + a, c + a + s))


def oscillatory_packet(xi: float = 3.0, center: float = 0.0, width: float = 0.5,
                       cutoff: float = 8.0) -> TestFunction:
    """``exp(i xi x)`` times a Gaussian bump."""
    lo, hi = center - cutoff * width, center + cutoff * width
    return TestFunction(f"packet({xi:g},{center:g},{width:g})",
                        lambda x: np.exp(1j * xi * x - 0.5 * ((x - center) / width) ** 2), lo, hi, (lo, hi))


def zero_function() -> TestFunction:
    return TestFunction("zero", lambda x: np.zeros_like(x), 0.0, 0.0)


TEST_FUNCTIONS = {
    "gaussian": gaussian_bump,
    "plateau": smoothed_plateau,
    "packet": oscillatory_packet,
    "zero": zero_function,
}


def test_function_from_config(cfg) -> TestFunction:
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    kind = cfg.get("kind", "gaussian")
    if kind not in TEST_FUNCTIONS:
        raise SpecError(f"unknown test function {kind!r}; choose from {', '.join(TEST_FUNCTIONS)}")
    args = {k: float(v) for k, v in cfg.items() if k != "kind"}
    try:
        return TEST_FUNCTIONS[kind](**args)
    except TypeError as exc:
        raise SpecError(f"bad parameters for test function {kind!r}: {exc}") from None


@dataclass(frozen=True)
class EnergyTrace:
    x: np.ndarray
    weights: np.ndarray = field(repr=False)  # quadrature weights at x
    u: np.ndarray = field(repr=False)
    du: np.ndarray = field(repr=False)
    F: np.ndarray = field(repr=False)
    wF: np.ndarray = field(repr=False)
    dwF: np.ndarray = field(repr=False)
    flux_integral: float
    rhs_margin: np.ndarray = field(repr=False)
    margin_scale: np.ndarray = field(repr=False)
    w_vals: np.ndarray = field(repr=False)
    wp_vals: np.ndarray = field(repr=False)
    v_vals: np.ndarray = field(repr=False)
    int_wpF: float
    eps_lhs: float  # eps int |u|^2
    eps_rhs: float  # -Im int (w')^{1/2} v conj(u)
    boundary_term: float  # wF(hi) - wF(lo)
    v_norm_sq: float
    h: float
    E: float
    eps: float
    k: float
    window: tuple[float, float]

    @property
    def flux_relative(self) -> float:
        return abs(self.flux_integral) / self.int_wpF if self.int_wpF > 0 else abs(self.flux_integral)

    @property
    def flux_balance(self) -> float:
        """``|int (wF)' - [wF]|`` relative to ``int w'F``; meaningful for every ``eps``."""
        d = abs(self.flux_integral - self.boundary_term)
        return d / self.int_wpF if self.int_wpF > 0 else d

    @property
    def eps_identity_rel(self) -> float:
        den = max(abs(self.eps_lhs), abs(self.eps_rhs))
        return abs(self.eps_lhs - self.eps_rhs) / den if den > 0 else 0.0

    @property
    def min_relative_margin(self) -> float:
        if self.rhs_margin.size == 0:
            return 0.0
        scale = np.where(self.margin_scale > 0, self.margin_scale, 1.0)
        return float(np.min(self.rhs_margin / scale))

    def integral(self, vals) -> float:
        return float(np.sum(self.weights * vals))


def _audit_window(V: Potential, w: WeightFunction, v: TestFunction, K: KernelEval,
                  lam: complex, boundary_rtol: float, window: tuple[float, float] | None,
                  max_margin: float):
    if window is not None:
        return float(window[0]), float(window[1])
    marks = [v.lo, v.hi, -K.R, K.R]
    marks += [b for b in w.breakpoints if np.isfinite(b)]
    if w.support is not None:
        marks += [-w.support, w.support]
    lo, hi = min(marks), max(marks)
    kappa = float(np.imag(lam))
    if kappa > 0:
        margin = math.log(1.0 / boundary_rtol) / (2.0 * kappa)
    else:
        margin = 20.0 * max(1.0, hi - lo)
    margin = min(margin, max_margin)
    return lo - margin, hi + margin


def audit_energy(V: Potential, w: WeightFunction, v: TestFunction, h: float, E: float, eps: float,
                 window: tuple[float, float] | None = None, boundary_rtol: float = 1e-12,
                 max_margin: float = 5000.0, order: int = 20, K: KernelEval | None = None) -> EnergyTrace:
    """Solve ``(P - E - i eps) u = (w')^{1/2} v`` and assemble the energy trace.

    With ``eps = 0`` the solution is the outgoing one; it does not decay and
    the flux integral then equals the (nonzero) boundary term at the window ends.
    """
    check_regime(h, E, eps)
    if eps == 0.0 and not V.is_compact:
        raise SpecError("the eps = 0 audit needs a compactly supported potential")
    if K is None:
        K = build_kernel(V, h, E, eps)
    lam = wavenumber(h, E, eps)
    lo, hi = _audit_window(V, w, v, K, lam, boundary_rtol, window, max_margin)
    if not (lo <= v.lo and v.hi <= hi):
        raise SpecError("the support of v must lie inside the audit window")
    bps = [b for b in (*v.breakpoints, *w.breakpoints) if lo < b < hi]
    grid: ApplyGrid = apply_grid(K, lo, hi, breakpoints=bps, order=order)
    x = grid.nodes
    wq = grid.weights.ravel()

    wv = np.asarray(w.w(x), dtype=float)
    wp = np.asarray(w.w_prime(x), dtype=float)
    vv = v(x)
    Vx = np.asarray(V(x), dtype=float)
    g = np.sqrt(np.maximum(wp, 0.0)) * vv
    u, du = green_apply(K, g, grid)

    F = np.abs(h * du) ** 2 + E * np.abs(u) ** 2
    wF = wv * F
    r_vdu = np.real(vv * np.conj(du))
    r_udu = np.real(u * np.conj(du))
    r_ieps = np.real(1j * eps * u * np.conj(du))
    sq = np.sqrt(np.maximum(wp, 0.0))
    t_v = -2.0 * wv * sq * r_vdu
    t_V = 2.0 * wv * Vx * r_udu
    t_e = -2.0 * wv * r_ieps
    t_k = wp * np.abs(h * du) ** 2
    t_p = E * wp * np.abs(u) ** 2
    dwF = t_v + t_V + t_e + t_k + t_p

    k = w.k
    b_v = 2.0 * sq * np.abs(vv * du)
    b_V = (2.0 * h / k) * wp * np.abs(u * du)
    b_e = 2.0 * eps * np.abs(wv * u * du)
    margin = dwF + b_v + b_V + b_e - t_k - t_p
    scale = np.abs(t_v) + np.abs(t_V) + np.abs(t_e) + t_k + t_p + b_v + b_V + b_e

    # wF at the window ends from the outermost panels' edge values
    ends = np.array([lo, hi])
    ue = _edge_values(K, grid, g, ends)
    Fe = np.abs(h * ue[1]) ** 2 + E * np.abs(ue[0]) ** 2
    we = np.asarray(w.w(ends), dtype=float)
    boundary = float(we[1] * Fe[1] - we[0] * Fe[0])

    return EnergyTrace(
        x=x, weights=wq, u=u, du=du, F=F, wF=wF, dwF=dwF,
        flux_integral=float(np.sum(wq * dwF)), rhs_margin=margin, margin_scale=scale,
        w_vals=wv, wp_vals=wp, v_vals=vv,
        int_wpF=float(np.sum(wq * wp * F)),
        eps_lhs=float(eps * np.sum(wq * np.abs(u) ** 2)),
        eps_rhs=float(-np.imag(np.sum(wq * g * np.conj(u)))),
        boundary_term=boundary, v_norm_sq=float(np.sum(wq * np.abs(vv) ** 2)),
        h=h, E=E, eps=eps, k=k, window=(lo, hi),
    )


def _edge_values(K: KernelEval, grid: ApplyGrid, g: np.ndarray, pts: np.ndarray):
    """``u, u'`` at points outside the support of ``g`` (here the window ends)."""
    xs = grid.nodes
    wq = grid.weights.ravel()
    um = K.u_minus(xs)[0]
    up = K.u_plus(xs)[0]
    Im = np.sum(wq * um * g)
    Ip = np.sum(wq * up * g)
    u_lo, du_lo = K.u_minus(pts[:1])
    u_hi, du_hi = K.u_plus(pts[1:])
    c = K.scale
    u = np.array([c * u_lo[0] * Ip, c * u_hi[0] * Im])
    du = np.array([c * du_lo[0] * Ip, c * du_hi[0] * Im])
    return u, du


@dataclass(frozen=True)
class AprioriReport:
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    potential_term: float  # (E/7) int w'|u|^2
    kinetic_term: float  # (1/6) int w'|hu'|^2


def audit_apriori_bound(trace: EnergyTrace, v_norm_sq: float | None = None) -> AprioriReport:
    """Both sides of ``(E/7) int w'|u|^2 + (1/6) int w'|hu'|^2 <= (15/(2h^2)) int |v|^2``."""
    vn = trace.v_norm_sq if v_norm_sq is None else float(v_norm_sq)
    pot = trace.E / 7.0 * trace.integral(trace.wp_vals * np.abs(trace.u) ** 2)
    kin = trace.integral(trace.wp_vals * np.abs(trace.h * trace.du) ** 2) / 6.0
    lhs = pot + kin
    rhs = 15.0 / (2.0 * trace.h**2) * vn
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return AprioriReport(lhs, rhs, ratio, bool(lhs <= rhs), pot, kin)


def dump_trace_csv(trace: EnergyTrace, path: str | Path) -> Path:
    """Write ``x, F, wF, dwF, margin``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "F", "wF", "dwF", "margin"])
        for row in zip(trace.x, trace.F, trace.wF, trace.dwF, trace.rhs_margin):
            wr.writerow([f"{v:.12e}" for v in row])
    return path
