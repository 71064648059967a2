"""Weighted resolvent norms ``||a (P - E - i eps)^{-1} a||`` on L^2.

Two independent backends share a cell grid (uniform between anchor points,
geometrically refined towards singularities):

* ``norm_via_kernel``: Nystrom discretisation of the Jost-solution kernel,
  ``M_ij = sqrt(Q_i) K(x_i, x_j) sqrt(Q_j)`` with ``Q_i = int_cell a^2`` and
  ``x_i`` the cell centres.  Small problems use a dense SVD; large ones use
  the rank-one structure of the kernel on either side of the diagonal (an
  O(N) matrix-vector product) inside power iteration.
* ``norm_via_matrix``: cell-centred second-order differences for
  ``-h^2 d^2/dx^2`` with cell-averaged ``V`` and Dirichlet walls, a sparse LU
  factorisation and power iteration on the Gram operator.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, SpecError
from .jost import check_regime, wavenumber
from .kernel import KernelEval, build_kernel
from .potentials import Envelope, Potential
from .weights import WeightFunction

DEFAULT_PPW = 20
N_DENSE = 2000
_GEOM_LEVELS = 6
_BLOCK_DECAY = 30.0


# ---------------------------------------------------------------------------
# weight maps


@dataclass(frozen=True)
class WeightMap:
    """A multiplication weight ``a``, described through its square.

    ``mass(edges)`` returns ``int a^2`` over consecutive cells, ``support`` is
    the radius outside which ``a`` vanishes (None when it does not),
    ``tail(L)`` returns ``int_{|x| > L} a^2`` and ``density`` evaluates
    ``a^2`` pointwise.
    """

    name: str
    mass: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    support: float | None
    density: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    tail: Callable[[float], float] = field(repr=False)
    breakpoints: tuple[float, ...] = ()
    singular: tuple[float, ...] = ()
    zero: bool = False
    total: float = float("nan")

    def dilated(self, h: float) -> "WeightMap":
        """The weight ``y -> a(h y)``."""
        mass, dens, tail = self.mass, self.density, self.tail
        return WeightMap(
            f"{self.name}(x*{h:g})",
            lambda e: mass(h * np.asarray(e, dtype=float)) / h,
            None if self.support is None else self.support / h,
            lambda y: dens(h * np.asarray(y, dtype=float)),
            lambda L: tail(h * L) / h,
            tuple(b / h for b in self.breakpoints),
            tuple(s / h for s in self.singular),
            self.zero,
            self.total / h,
        )

    def __call__(self, x):
        return np.sqrt(np.asarray(self.density(x), dtype=float))


def envelope_weight(m: Potential) -> WeightMap:
    """``a = m^{1/2}``."""
    def tail(L):
        if m.is_compact:
            return 0.0 if L >= m.support_radius else m.l1_norm - m.integral(-L, L, absolute=True)
        if L >= m.extent:
            return 2.0 * m.tail_abs(L)
        return m.l1_norm - m.integral(-L, L, absolute=True)

    return WeightMap(
        f"sqrt({m.name})",
        lambda e: m.cell_integrals(e, absolute=True),
        m.support_radius if m.is_compact else None,
        lambda x: np.abs(np.asarray(m(x), dtype=float)),
        tail,
        tuple(b for b in m.breakpoints if abs(b) <= m.extent) + (
            (-m.support_radius, m.support_radius) if m.is_compact else ()),
        tuple(s.position for s in m.singular_points),
        m.l1_norm == 0.0,
        m.l1_norm,
    )


def derivative_weight(w: WeightFunction) -> WeightMap:
    """``a = (w')^{1/2}``; cell masses are differences of ``w``."""
    tv = w.total_variation
    tail = w.tail_mass
    if tail is None:
        def tail(L):
            vals = np.asarray(w.w(np.array([-1e300, -L, L, 1e300])), dtype=float)
            return float(vals[1] - vals[0] + vals[3] - vals[2])
    return WeightMap(
        f"sqrt(w') [{w.kind}]",
        w.cell_mass,
        w.support,
        lambda x: np.asarray(w.w_prime(x), dtype=float),
        tail,
        tuple(b for b in w.breakpoints if len(w.breakpoints) <= 64 or abs(b) <= 10.0),
        tuple(s.position for s in w.singular_points),
        tv == 0.0,
        tv,
    )


def exterior_weight(R: float, delta: float) -> WeightMap:
    """``a = 1_{|x| > R} (1 + |x|)^{-(1 + delta)/2}``."""
    if R < 0 or delta <= 0:
        raise SpecError("exterior weight needs R >= 0 and delta > 0")

    def anti(x):
        # int_{-inf}^x a^2
        x = np.asarray(x, dtype=float)
        ax = np.maximum(np.abs(x), R)
        half = (1.0 + R) ** (-delta) / delta
        part = ((1.0 + R) ** (-delta) - (1.0 + ax) ** (-delta)) / delta
        return np.where(x < 0, half - part, half + part)

    return WeightMap(
        f"exterior(R={R:g},delta={delta:g})",
        lambda e: np.diff(anti(e)),
        None,
        lambda x: np.where(np.abs(x) > R, (1.0 + np.abs(np.asarray(x, dtype=float))) ** (-1.0 - delta), 0.0),
        lambda L: 2.0 * (1.0 + max(L, R)) ** (-delta) / delta,
        (-float(R), float(R)),
        (),
        False,
        2.0 * (1.0 + R) ** (-delta) / delta,
    )


def window_weight(L: float) -> WeightMap:
    """``a = 1`` on ``[-L, L]``, 0 outside."""
    return WeightMap(
        f"indicator[-{L:g},{L:g}]",
        lambda e: np.diff(np.clip(np.asarray(e, dtype=float), -L, L)),
        float(L),
        lambda x: (np.abs(np.asarray(x, dtype=float)) <= L).astype(float),
        lambda r: max(0.0, 2.0 * (L - r)),
        (-float(L), float(L)),
        (),
        L == 0.0,
        2.0 * L,
    )


def zero_weight() -> WeightMap:
    return WeightMap("zero", lambda e: np.zeros(max(len(e) - 1, 0)), 0.0,
                     lambda x: np.zeros_like(np.asarray(x, float)), lambda L: 0.0, (), (), True, 0.0)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class CellGrid:
    edges: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def n(self) -> int:
        return self.edges.size - 1


def make_grid(lo: float, hi: float, delta: float, anchors=(), singular=(),
              core: tuple[float, float, float] | None = None) -> CellGrid:
    """Cells of width at most ``delta`` with every anchor on a cell edge.

    Segments between anchors are divided uniformly; each singular point gets
    geometric anchors ``s +- delta 2^-j`` so cells shrink towards it.  With
    ``core = (c0, c1, d)`` cells inside ``[c0, c1]`` are at most ``d`` wide.
    """
    pts = {lo, hi} | {a for a in anchors if lo < a < hi}
    if core is not None:
        pts |= {c for c in core[:2] if lo < c < hi}
    for s in singular:
        if lo <= s <= hi:
            pts.add(s)
            for j in range(1, _GEOM_LEVELS + 1):
                for p in (s - delta * 2.0**-j, s + delta * 2.0**-j):
                    if lo < p < hi:
                        pts.add(p)
    pts = np.array(sorted(pts))
    pieces = []
    for a, b in zip(pts[:-1], pts[1:]):
        d = delta
        if core is not None and core[0] <= a and b <= core[1]:
            d = min(delta, core[2])
        n = max(1, int(math.ceil((b - a) / d - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[:-1])
    pieces.append(pts[-1:])
    return CellGrid(np.concatenate(pieces))


def local_wavenumber(V: Potential, h: float, E: float, lo: float, hi: float, ppw: float) -> float:
    """``sqrt(max(E, max |V - E|)) / h`` with V sampled away from its singular points."""
    base = 2.0 * math.pi * h / (ppw * math.sqrt(E))
    r0, r1 = max(lo, -V.extent) if V.is_compact else lo, min(hi, V.extent) if V.is_compact else hi
    top = E
    if r1 > r0:
        x = np.linspace(r0, r1, max(3, min(200_001, int((r1 - r0) / base) * 4 + 3)))
        for s in V.singular_points:
            x = x[np.abs(x - s.position) > base]
        if x.size:
            top = max(E, float(np.max(np.abs(np.asarray(V(x)) - E))))
    return math.sqrt(top) / h


def grid_spacing(V: Potential, h: float, E: float, lo: float, hi: float, ppw: float) -> float:
    return 2.0 * math.pi / (ppw * local_wavenumber(V, h, E, lo, hi, ppw))


def weight_core(V: Potential, a: WeightMap, ppw: float, n: int = 4001) -> tuple[float, float, float] | None:
    """Interval holding the weight's breakpoints and a spacing that resolves its growth there.

    A density ``a^2 ~ exp(g x)`` is treated like a wave of wavenumber ``g / 2``;
    ``g`` is the largest log-slope of the sampled density between breakpoints.
    """
    marks = [abs(b) for b in a.breakpoints]
    if a.support is not None:
        marks.append(a.support)
    if V.is_compact:
        marks.append(V.support_radius)
    if not marks or max(marks) == 0.0:
        return None
    c = max(marks)
    x = np.linspace(-c, c, n)
    for s in a.singular:
        x = x[np.abs(x - s) > 4.0 * c / n]
    d = np.asarray(a.density(x), dtype=float)
    ok = (d[:-1] > 0) & (d[1:] > 0)
    bps = np.array(sorted(a.breakpoints) or [np.inf])
    # drop sample pairs that straddle a breakpoint (jumps are not growth)
    j = np.searchsorted(bps, x)
    ok &= j[:-1] == j[1:]
    if not np.any(ok):
        return None
    with np.errstate(divide="ignore"):
        slope = np.abs(np.diff(np.log(np.where(d > 0, d, 1.0)))) / np.diff(x)
    g = float(np.max(slope[ok]))
    if g <= 0:
        return None
    return -c, c, 2.0 * math.pi / (ppw * 0.5 * g)


# ---------------------------------------------------------------------------
# power iteration


def stable_seed(*parts) -> int:
    """Deterministic 32-bit seed from a description of the problem."""
    return int.from_bytes(hashlib.sha256(repr(parts).encode()).digest()[:4], "little")


def power_iteration(apply: Callable, apply_adj: Callable, n: int, seed: int = 0, tol: float = 1e-10,
                    maxiter: int = 20_000, lanczos_after: int | None = 300) -> tuple[float, int, bool]:
    """Largest singular value by power iteration on ``A^H A``; returns (sigma, iterations, converged).

    When the top singular values cluster, power iteration crawls; after
    ``lanczos_after`` steps the current iterate seeds ARPACK (``svds``), which
    converges at the Lanczos rate.  ``lanczos_after=None`` disables the switch.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for it in range(1, maxiter + 1):
        w = apply(v)
        s_new = float(np.linalg.norm(w))
        if s_new == 0.0:
            return 0.0, it, True
        v = apply_adj(w)
        nv = np.linalg.norm(v)
        v /= nv
        if abs(s_new - sigma) <= tol * s_new:
            return max(s_new, math.sqrt(nv)), it, True
        sigma = s_new
        if lanczos_after is not None and it >= lanczos_after and n > 2:
            return _lanczos_top(apply, apply_adj, n, v, tol, it, sigma)
    return sigma, maxiter, False


def _lanczos_top(apply, apply_adj, n, v0, tol, its, sigma):
    op = spla.LinearOperator((n, n), matvec=lambda f: apply(np.ravel(f)),
                            rmatvec=lambda f: apply_adj(np.ravel(f)), dtype=complex)
    try:
        s = spla.svds(op, k=1, v0=v0, tol=max(tol, 1e-14), maxiter=max(1000, 20 * n),
                      return_singular_vectors=False)
    except spla.ArpackNoConvergence:
        return sigma, its, False
    return max(float(s[0]), sigma), its, True


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class NormEstimate:
    value: float
    backend: str
    discretization: dict
    convergence_flag: bool
    weight_spec: str
    tail_bound: float = 0.0
    iterations: int = 0
    refinements: tuple[float, ...] = ()
    truncation_bound: float = 0.0

    @property
    def upper_value(self) -> float:
        """``value`` plus a Hilbert-Schmidt bound for the weight mass outside the window."""
        return self.value + self.truncation_bound

    @property
    def extrapolated(self) -> float:
        """Richardson value from the two finest levels (both schemes are second order)."""
        if len(self.refinements) < 2:
            return self.value
        c, f = self.refinements[-2], self.refinements[-1]
        return (4.0 * f - c) / 3.0

    def as_dict(self) -> dict:
        return {
            "value": self.value, "backend": self.backend, "convergence_flag": self.convergence_flag,
            "weight_spec": self.weight_spec, "tail_bound": self.tail_bound,
            "iterations": self.iterations, "refinements": list(self.refinements),
            "truncation_bound": self.truncation_bound,
            "extrapolated": self.extrapolated, **{f"disc_{k}": v for k, v in self.discretization.items()},
        }


def _zero_estimate(backend: str, a: WeightMap) -> NormEstimate:
    return NormEstimate(0.0, backend, {}, True, a.name)


def _decayed_cumsum(x: np.ndarray, kap: float, a: np.ndarray) -> np.ndarray:
    """``r_i = sum_{j <= i} exp(-kap (x_i - x_j)) a_j`` for increasing ``x``, in overflow-safe blocks."""
    if kap == 0.0:
        return np.cumsum(a)
    out = np.empty_like(a)
    n = x.size
    s = 0
    carry = 0.0
    xprev = x[0]
    while s < n:
        e = max(int(np.searchsorted(x, x[s] + _BLOCK_DECAY / kap, side="right")), s + 1)
        xs = x[s:e] - x[s]
        loc = np.cumsum(np.exp(kap * xs) * a[s:e])
        out[s:e] = np.exp(-kap * xs) * loc + carry * np.exp(-kap * (x[s:e] - xprev))
        carry = out[e - 1]
        xprev = x[e - 1]
        s = e
    return out


class _KernelOperator:
    """``f -> sqrt(Q) K (sqrt(Q) f)`` on cell centres in O(N)."""

    def __init__(self, K: KernelEval, x: np.ndarray, q: np.ndarray):
        self.x = x
        self.sq = np.sqrt(q)
        self.up = K.u_plus.scaled(x)[0]
        self.um = K.u_minus.scaled(x)[0]
        lam = K.scattering.lam
        self.kap = lam.imag if isinstance(lam, complex) else 0.0
        self.c = K.scale

    def dense(self) -> np.ndarray:
        x = self.x
        below = x[:, None] <= x[None, :]
        prod = np.where(below, self.um[:, None] * self.up[None, :], self.up[:, None] * self.um[None, :])
        if self.kap:
            prod = prod * np.exp(-self.kap * np.abs(x[:, None] - x[None, :]))
        return self.c * self.sq[:, None] * prod * self.sq[None, :]

    def __call__(self, f: np.ndarray) -> np.ndarray:
        g = self.sq * f
        x, kap = self.x, self.kap
        fwd = _decayed_cumsum(x, kap, self.um * g)
        inc = _decayed_cumsum(-x[::-1], kap, (self.up * g)[::-1])[::-1]
        bwd = np.zeros_like(inc)
        bwd[:-1] = inc[1:] * (np.exp(-kap * (x[1:] - x[:-1])) if kap else 1.0)
        return self.sq * self.c * (self.up * fwd + self.um * bwd)

    def adjoint(self, f: np.ndarray) -> np.ndarray:
        # the Nystrom matrix is complex symmetric
        return np.conj(self(np.conj(f)))


def _kernel_norm(K: KernelEval, grid: CellGrid, a: WeightMap, seed: int, tol: float,
                 n_dense: int) -> tuple[float, int, bool, int]:
    q = np.asarray(a.mass(grid.edges), dtype=float)
    keep = q > 0
    x, q = grid.centers[keep], q[keep]
    if x.size == 0:
        return 0.0, 0, True, 0
    op = _KernelOperator(K, x, q)
    if x.size <= n_dense:
        return float(np.linalg.norm(op.dense(), 2)), 0, True, x.size
    s, it, ok = power_iteration(op, op.adjoint, x.size, seed, tol)
    return s, it, ok, x.size


_EXTRA_LEVELS = 2


def _levels_agree(values, rtol: float = 0.01) -> bool:
    """The two finest refinements agree within ``rtol``."""
    return len(values) < 2 or abs(values[-1] - values[-2]) <= rtol * values[-1]


def _core_at(core, level: int):
    return None if core is None else (core[0], core[1], core[2] / 2**level)


def _anchors(V: Potential, a: WeightMap) -> list[float]:
    pts = list(a.breakpoints)
    if V.is_compact:
        pts += [-V.support_radius, V.support_radius]
        pts += [b for b in V.breakpoints if abs(b) <= V.support_radius]
    else:
        pts += list(V.breakpoints)
    return pts


def _sup_kernel(K: KernelEval) -> float:
    sd = K.scattering
    absA, absB = abs(complex(sd.hp.A)), abs(complex(sd.hp.B))
    return (absA + absB) / (2.0 * absA * sd.h**2 * abs(sd.lam))


def _hs_truncation(a: WeightMap, L: float, sup_k: float) -> float:
    """``sup|K| (2 |a_in| |a_out| + |a_out|^2)``: norm of the part of the operator left outside ``[-L, L]``."""
    if a.support is not None and L >= a.support:
        return 0.0
    out = a.tail(L)
    inside = max(a.total - out, 0.0) if np.isfinite(a.total) else float("inf")
    return sup_k * (2.0 * math.sqrt(inside * out) + out)


def _weight_window(a: WeightMap, base: float, sup_k: float, value: float, tail_rtol: float,
                   max_radius: float, tail_atol: float = 0.0) -> tuple[float, float, bool]:
    """Smallest radius (base times a power of two) whose weight tail is below
    ``max(tail_rtol * value, tail_atol)``."""
    if a.support is not None:
        return a.support, 0.0, True
    thresh = max(tail_rtol * value, tail_atol)
    L = base
    while sup_k * a.tail(L) > thresh and 2.0 * L <= max_radius:
        L *= 2.0
    t = sup_k * a.tail(L)
    return L, t, bool(t <= thresh)


def norm_via_kernel(V: Potential, h: float, E: float, eps: float, a: WeightMap, ppw: float = DEFAULT_PPW,
                    levels: int = 2, tail_rtol: float = 1e-4, max_cells: int = 400_000,
                    n_dense: int = N_DENSE, seed: int | None = None, tol: float = 1e-10,
                    tail_atol: float = 0.0) -> NormEstimate:
    """Nystrom estimate of ``||a (P - E - i eps)^{-1} a||`` from the Jost kernel (compact V, eps >= 0).

    The window grows until ``sup|K| int_{|x|>L} a^2`` is below
    ``max(tail_rtol * value, tail_atol)``.
    """
    check_regime(h, E, eps)
    if not V.is_compact:
        raise SpecError("the kernel backend needs a compactly supported potential")
    if a.zero:
        return _zero_estimate("kernel_nystrom", a)
    seed = stable_seed("kernel", V.name, V.params, h, E, eps, a.name) if seed is None else seed
    K = build_kernel(V, h, E, eps)
    R = V.support_radius
    wavelength = 2.0 * math.pi * h / math.sqrt(E)
    base = max(R, *(abs(b) for b in a.breakpoints), 0.0) + 4.0 * wavelength
    lo_guess = -(a.support if a.support is not None else base)
    delta0 = grid_spacing(V, h, E, lo_guess, -lo_guess, ppw)
    wcore = weight_core(V, a, ppw)
    finest = delta0 / 2 ** (levels - 1)
    max_radius = 0.5 * max_cells * finest
    tail_bound, tail_ok = 0.0, True
    if a.support is None:
        g0 = make_grid(-base, base, delta0, _anchors(V, a), a.singular, wcore)
        v0, *_ = _kernel_norm(K, g0, a, seed, 1e-6, n_dense)
        L, tail_bound, tail_ok = _weight_window(a, base, _sup_kernel(K), v0, tail_rtol, max_radius, tail_atol)
    else:
        L = a.support
    values, its, conv, n = [], 0, True, 0
    lev = 0
    # refine past ``levels`` (at most _EXTRA_LEVELS times) until two successive levels agree
    while lev < levels or (not _levels_agree(values) and lev < levels + _EXTRA_LEVELS
                           and 2 * n <= max_cells):
        d = delta0 / 2**lev
        grid = make_grid(-L, L, d, _anchors(V, a), a.singular, _core_at(wcore, lev))
        v, it, ok, n = _kernel_norm(K, grid, a, seed, tol, n_dense)
        values.append(v)
        its += it
        conv &= ok
        lev += 1
    if not conv:
        raise ConvergenceError("power iteration stagnated in the kernel backend")
    agree = _levels_agree(values)
    disc = {"delta": delta0 / 2 ** (lev - 1), "L": L, "ppw": ppw, "levels": lev, "n": n,
            "tail_ok": tail_ok}
    trunc = _hs_truncation(a, L, _sup_kernel(K))
    return NormEstimate(values[-1], "kernel_nystrom", disc, bool(agree and tail_ok), a.name,
                        tail_bound, its, tuple(values), trunc)


# ---------------------------------------------------------------------------
# finite-difference backend


def fd_hamiltonian(V: Potential, h: float, grid: CellGrid) -> sp.csc_matrix:
    """Symmetric tridiagonal matrix of ``-h^2 d^2/dx^2 + V`` in orthonormal cell coordinates.

    Cell-centred differences with Dirichlet walls at the outer edges; the
    potential enters through cell averages.
    """
    dx = grid.widths
    c = grid.centers
    dist = np.diff(c)
    flux = h**2 / dist  # between neighbouring centres
    wall_l = h**2 / (0.5 * dx[0])
    wall_r = h**2 / (0.5 * dx[-1])
    diag = np.zeros(grid.n)
    diag[:-1] += flux
    diag[1:] += flux
    diag[0] += wall_l
    diag[-1] += wall_r
    diag /= dx
    diag += V.cell_integrals(grid.edges) / dx
    off = -flux / np.sqrt(dx[:-1] * dx[1:])
    return sp.diags([off, diag, off], [-1, 0, 1], format="csc")


def _matrix_norm(V: Potential, h: float, z: complex, grid: CellGrid, a: WeightMap, seed: int,
                 tol: float) -> tuple[float, int, bool]:
    q = np.asarray(a.mass(grid.edges), dtype=float)
    act = np.flatnonzero(q > 0)
    if act.size == 0:
        return 0.0, 0, True
    H = fd_hamiltonian(V, h, grid)
    n = grid.n
    lu = spla.splu((H - z * sp.identity(n, format="csc")).tocsc(), permc_spec="NATURAL")
    # a_i = sqrt(Q_i / dx_i) in orthonormal coordinates
    av = np.sqrt(q[act] / grid.widths[act])
    buf = np.zeros(n, dtype=complex)

    def apply(f):
        buf[:] = 0.0
        buf[act] = av * f
        return av * lu.solve(buf)[act]

    def apply_adj(f):
        return np.conj(apply(np.conj(f)))

    if act.size <= 200:
        # small active sets: assemble the dense operator column by column
        cols = np.eye(act.size, dtype=complex)
        M = np.column_stack([apply(cols[:, j]) for j in range(act.size)])
        return float(np.linalg.norm(M, 2)), act.size, True
    return power_iteration(apply, apply_adj, act.size, seed, tol)


def norm_via_matrix(V: Potential, h: float, E: float, eps: float, a: WeightMap, ppw: float = DEFAULT_PPW,
                    levels: int = 2, margin_rtol: float = 1e-4, tail_rtol: float = 1e-4,
                    max_cells: int = 400_000, check_window: bool = True, seed: int | None = None,
                    tol: float = 1e-10, tail_atol: float = 0.0) -> NormEstimate:
    """Finite-difference estimate of ``||a (P - E - i eps)^{-1} a||`` (eps > 0 required)."""
    if eps <= 0:
        raise SpecError("the matrix backend needs eps > 0; use the kernel backend for eps = 0")
    check_regime(h, E, eps)
    if a.zero:
        return _zero_estimate("fd_matrix", a)
    seed = stable_seed("matrix", V.name, V.params, h, E, eps, a.name) if seed is None else seed
    lam = wavenumber(h, E, eps)
    kap = lam.imag
    z = complex(E, eps)
    wavelength = 2.0 * math.pi * h / math.sqrt(E)
    # the resolvent kernel decays like exp(-kap |x - y|); reflections off the walls travel twice
    margin = math.log(1.0 / margin_rtol) / (2.0 * kap)
    core = max(V.extent, *(abs(b) for b in a.breakpoints), 0.0)
    base = core + 4.0 * wavelength
    delta0 = grid_spacing(V, h, E, -base, base, ppw)
    wcore = weight_core(V, a, ppw)
    finest = delta0 / 2 ** (levels - 1)
    tail_bound, tail_ok = 0.0, True
    if a.support is None:
        max_radius = 0.5 * max_cells * finest - margin
        L0 = base + margin
        g0 = make_grid(-L0, L0, delta0, _anchors(V, a), a.singular, wcore)
        v0, *_ = _matrix_norm(V, h, z, g0, a, seed, 1e-6)
        sup_k = 1.0 / (h**2 * abs(lam))
        W, tail_bound, tail_ok = _weight_window(a, base, sup_k, v0, tail_rtol, max(max_radius, base), tail_atol)
        wa = replace(a, support=W, mass=lambda e, _m=a.mass, _W=W: _m(np.clip(e, -_W, _W)))
    else:
        W, wa = a.support, a
    L = max(W, core) + margin
    anchors = _anchors(V, a) + [-W, W]
    values, its, conv = [], 0, True
    lev, n = 0, 0
    while lev < levels or (not _levels_agree(values) and lev < levels + _EXTRA_LEVELS
                           and 2 * n <= max_cells):
        grid = make_grid(-L, L, delta0 / 2**lev, anchors, a.singular, _core_at(wcore, lev))
        v, it, ok = _matrix_norm(V, h, z, grid, wa, seed, tol)
        values.append(v)
        its += it
        conv &= ok
        n = grid.n
        lev += 1
    if not conv:
        raise ConvergenceError("power iteration stagnated in the matrix backend")
    window_ok = True
    doubled = float("nan")
    if check_window:
        L2 = max(W, core) + 2.0 * margin
        grid = make_grid(-L2, L2, delta0 / 2 ** (lev - 1), anchors, a.singular, _core_at(wcore, lev - 1))
        doubled, it, ok = _matrix_norm(V, h, z, grid, wa, seed, tol)
        its += it
        window_ok = abs(doubled - values[-1]) <= 1e-3 * values[-1]
    agree = _levels_agree(values)
    disc = {"delta": delta0 / 2 ** (lev - 1), "L": L, "weight_window": W, "ppw": ppw, "levels": lev,
            "n": grid.n, "doubled_window_value": doubled, "window_ok": window_ok, "tail_ok": tail_ok}
    # free-kernel size 1/(2 h^2 |lam|), doubled, stands in for sup|K| here
    trunc = _hs_truncation(a, W, 1.0 / (h**2 * abs(lam))) if a.support is None else 0.0
    return NormEstimate(values[-1], "fd_matrix", disc, bool(agree and window_ok and tail_ok), a.name,
                        tail_bound, its, tuple(values), trunc)


def estimate_norm(backend: str, V: Potential, h: float, E: float, eps: float, a: WeightMap, **kw) -> NormEstimate:
    if backend in ("kernel", "kernel_nystrom"):
        return norm_via_kernel(V, h, E, eps, a, **kw)
    if backend in ("matrix", "fd_matrix"):
        return norm_via_matrix(V, h, E, eps, a, **kw)
    raise SpecError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# rescalings


@dataclass(frozen=True)
class RescalingReport:
    base: float
    dilated: float
    energy_rescaled: float
    dilation_rel_diff: float
    energy_rel_diff: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.dilation_rel_diff <= self.tol and self.energy_rel_diff <= self.tol


def check_rescaling_invariance(V: Potential, h: float, E: float, eps: float, m: Envelope | WeightMap,
                               backend: str = "kernel", tol: float = 1e-4, **kw) -> RescalingReport:
    """Compare the norm with its value after ``x = h y`` and after dividing ``P`` by ``h^2``.

    (i) ``(V, h, E, eps, m)`` against ``(V(h .), 1, E, eps, m(h .))``;
    (ii) ``(V, h, E, eps)`` against ``h^-2 * (h^-2 V, 1, h^-2 E, h^-2 eps)`` with the same weight.
    """
    check_regime(h, E, eps)
    a = m if isinstance(m, WeightMap) else envelope_weight(m)
    base = estimate_norm(backend, V, h, E, eps, a, **kw).value
    dil = estimate_norm(backend, V.dilated(h), 1.0, E, eps, a.dilated(h), **kw).value
    s = h**-2
    en = estimate_norm(backend, V.scaled(s), 1.0, s * E, s * eps, a, **kw).value * s
    rel = lambda x: abs(x - base) / base if base else abs(x)
    return RescalingReport(base, dil, en, rel(dil), rel(en), tol)
