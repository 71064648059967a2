"""Weight functions ``w`` with closed-form derivatives and the ``(k/h)|V w| <= w'`` check.

Two constructions are provided.  From an envelope ``m >= |V|`` with
``M = int m`` and ``C(x) = int_{-inf}^x m``,

    w(x) = 2 exp(-(k/2h) M) sinh((k/h) (C(x) - C(a))),   C(a) = M/2,

written here as ``exp((k/h)(C - M)) - exp(-(k/h) C)`` so that no large
exponentials are formed.  For potentials supported in ``[-R, R]`` the odd
exterior weight ``w(x) = sign(x) (1 - (1+R)^delta (1+|x|)^-delta)`` for
``|x| > R`` and 0 inside.  The constant is ``k = 4 / sqrt(E)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import SpecError
from .potentials import Envelope, Potential, Singularity
from .quadrature import integrate

ArrayFunc = Callable[[np.ndarray], np.ndarray]


def k_constant(E: float) -> float:
    return 4.0 / math.sqrt(E)


@dataclass(frozen=True)
class WeightFunction:
    """A weight ``w`` (values in [-1, 1]) and its derivative ``w' >= 0``.

    ``support`` is the radius outside which ``w'`` vanishes (None if it does
    not), ``tail_mass(L)`` returns ``int_{|x| > L} w'`` and
    ``breakpoints``/``singular_points`` locate the points where ``w'`` is not
    smooth or unbounded.
    """

    w: ArrayFunc = field(repr=False)
    w_prime: ArrayFunc = field(repr=False)
    k: float
    kind: str
    metadata: dict = field(default_factory=dict)
    h: float | None = None
    support: float | None = None
    breakpoints: tuple[float, ...] = ()
    singular_points: tuple[Singularity, ...] = ()
    tail_mass: Callable[[float], float] | None = field(default=None, repr=False)
    envelope: Envelope | None = field(default=None, repr=False)

    def __call__(self, x):
        return self.w(x)

    def cell_mass(self, edges: np.ndarray) -> np.ndarray:
        """``int w'`` over consecutive cells, as differences of ``w``."""
        return np.diff(np.asarray(self.w(np.asarray(edges, dtype=float)), dtype=float))

    @property
    def total_variation(self) -> float:
        """``w(+inf) - w(-inf)``."""
        lim = self.metadata.get("limits")
        if lim is not None:
            return lim[1] - lim[0]
        big = 1e300
        return float(self.w(np.array([big]))[0] - self.w(np.array([-big]))[0])


# ---------------------------------------------------------------------------
# constructions


def _bisect_median(m: Potential, M: float, tol: float = 1e-12) -> float:
    """Point ``a`` with ``int_{-inf}^a m = M/2``."""
    r = max(m.extent, 1.0)
    lo, hi = -r, r
    while m.cumulative_abs(lo) > 0.5 * M:
        lo *= 2.0
    while m.cumulative_abs(hi) < 0.5 * M:
        hi *= 2.0
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if m.cumulative_abs(mid) < 0.5 * M:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_thm1_weight(m: Envelope, h: float, E: float) -> WeightFunction:
    """The sinh weight built from an envelope ``m``; ``w' = (2k/h) e^{-kM/2h} cosh(...) m``."""
    if h <= 0 or E <= 0:
        raise SpecError("h and E must be positive")
    k = k_constant(E)
    M = float(m.l1_norm)
    c = k / h
    if M == 0.0:
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        return WeightFunction(zero, zero, k, "thm1_sinh", {"a": 0.0, "int_m": 0.0, "degenerate": True,
                                                          "limits": (0.0, 0.0)},
                              h=h, support=0.0, tail_mass=lambda L: 0.0)
    a = _bisect_median(m, M)

    def w(x):
        C = m.cumulative_abs(np.asarray(x, dtype=float))
        return np.exp(c * (C - M)) - np.exp(-c * C)

    def w_prime(x):
        x = np.asarray(x, dtype=float)
        C = m.cumulative_abs(x)
        return c * np.asarray(m(x)) * (np.exp(c * (C - M)) + np.exp(-c * C))

    limit = 1.0 - math.exp(-c * M)
    bound = 2.0 * c * math.exp(-0.5 * c * M)
    tail = None
    if m.is_compact:
        tail = lambda L: 0.0 if L >= m.support_radius else float("nan")
    else:
        # w' <= 2 (k/h) m, hence the tail of w' is bounded by 2 (k/h) tail(m)
        tail = lambda L: 2.0 * c * m.tail_abs(max(L, m.extent))
    meta = {"a": a, "int_m": M, "degenerate": False, "limits": (-limit, limit),
            "lower_bound_factor": bound, "envelope": m.name}
    return WeightFunction(w, w_prime, k, "thm1_sinh", meta, h=h,
                          support=m.support_radius if m.is_compact else None,
                          breakpoints=tuple(m._marks()), singular_points=m.singular_points,
                          tail_mass=tail, envelope=m)


def build_thm2_weight(R: float, delta: float, E: float | None = None) -> WeightFunction:
    """Odd exterior weight vanishing on ``[-R, R]``, ``w' = delta (1+R)^delta (1+|x|)^(-1-delta)`` outside."""
    if R <= 0 or delta <= 0:
        raise SpecError("build_thm2_weight needs R > 0 and delta > 0")
    c = (1.0 + R) ** delta

    def w(x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        out = np.sign(x) * (1.0 - c * (1.0 + ax) ** (-delta))
        return np.where(ax > R, out, 0.0)

    def w_prime(x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        return np.where(ax > R, delta * c * (1.0 + ax) ** (-1.0 - delta), 0.0)

    def tail(L):
        return 2.0 * c * (1.0 + max(L, R)) ** (-delta)

    k = k_constant(E) if E is not None else float("nan")
    return WeightFunction(w, w_prime, k, "thm2_exterior", {"R": R, "delta": delta, "limits": (-1.0, 1.0)},
                          support=None, breakpoints=(-R, R), tail_mass=tail)


def custom_weight(w: ArrayFunc, w_prime: ArrayFunc, E: float, support: float | None = None,
                  breakpoints=(), name: str = "custom", tail_mass=None, limits=None) -> WeightFunction:
    """Wrap a user-supplied pair ``(w, w')``; nothing about it is assumed, see ``validate_weight``."""
    meta = {"name": name}
    if limits is not None:
        meta["limits"] = tuple(limits)
    return WeightFunction(w, w_prime, k_constant(E), "custom", meta, support=support,
                          breakpoints=tuple(breakpoints), tail_mass=tail_mass)


def weight_from_config(cfg: Mapping, V: Potential, m: Envelope, h: float, E: float) -> WeightFunction:
    """``{"kind": "thm1"}``, ``{"kind": "thm2", "R": .., "delta": ..}``, ``{"kind": "constant", "value": c}``
    or ``{"kind": "tanh", "scale": s}``."""
    kind = cfg.get("kind", "thm1")
    if kind in ("thm1", "thm1_sinh"):
        return build_thm1_weight(m, h, E)
    if kind in ("thm2", "thm2_exterior"):
        R = float(cfg.get("R", V.support_radius if V.is_compact and V.support_radius else 1.0))
        return build_thm2_weight(R, float(cfg.get("delta", 1.0)), E)
    if kind == "constant":
        val = float(cfg.get("value", 1.0))
        return custom_weight(lambda x: np.full_like(np.asarray(x, float), val),
                             lambda x: np.zeros_like(np.asarray(x, float)), E, support=0.0,
                             name=f"constant({val:g})", tail_mass=lambda L: 0.0, limits=(val, val))
    if kind == "tanh":
        s = float(cfg.get("scale", 1.0))
        return custom_weight(lambda x: np.tanh(np.asarray(x, float) / s),
                             lambda x: 1.0 / (s * np.cosh(np.asarray(x, float) / s) ** 2), E,
                             name=f"tanh({s:g})", tail_mass=lambda L: 2.0 * (1.0 - math.tanh(L / s)),
                             limits=(-1.0, 1.0))
    raise SpecError(f"unknown weight kind {kind!r}")


# ---------------------------------------------------------------------------
# checks


def check_grid(V: Potential | None, w: WeightFunction, n: int = 20_000, span: float | None = None) -> np.ndarray:
    """Uniform grid plus geometric refinement near singularities and breakpoints."""
    r = max(1.0, V.extent if V is not None else 0.0, w.support or 0.0, *(abs(b) for b in w.breakpoints))
    span = 3.0 * r if span is None else span
    parts = [np.linspace(-span, span, n)]
    # breakpoints are refined only when there are few of them (oscillatory potentials list thousands)
    spots = set(w.breakpoints) if len(w.breakpoints) <= 64 else set()
    sing = list(w.singular_points) + (list(V.singular_points) if V is not None else [])
    spots |= {s.position for s in sing}
    if V is not None and V.is_compact:
        spots |= {-V.support_radius, V.support_radius}
    d = np.geomspace(1e-12, r, 400)
    for s in sorted(spots):
        parts += [s + d, s - d]
    x = np.unique(np.concatenate(parts))
    return x


@dataclass(frozen=True)
class W2Report:
    min_margin: float
    min_relative_margin: float
    worst_x: float
    passed: bool
    n_points: int


def verify_w2_condition(w: WeightFunction, V: Potential, h: float, E: float,
                        grid: np.ndarray | None = None, rtol: float = 1e-12) -> W2Report:
    """Sample ``w' - (k/h)|V w|`` on a refined grid; pass if it is nonnegative up to rounding."""
    k = k_constant(E)
    x = check_grid(V, w) if grid is None else np.asarray(grid, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lhs = (k / h) * np.abs(np.asarray(V(x)) * np.asarray(w.w(x)))
        rhs = np.asarray(w.w_prime(x), dtype=float)
        margin = rhs - lhs
        scale = np.maximum(lhs, rhs)
    ok = np.isfinite(margin)
    margin, scale, x = margin[ok], scale[ok], x[ok]
    i = int(np.argmin(margin))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, margin / scale, 0.0)
    passed = bool(np.all(margin >= -rtol * scale))
    return W2Report(float(margin[i]), float(np.min(rel)), float(x[i]), passed, int(x.size))


@dataclass(frozen=True)
class WeightValidation:
    max_abs_w: float
    min_w_prime: float
    variation_error: float
    lower_bound_margin: float | None
    passed: bool


def validate_weight(w: WeightFunction, V: Potential | None = None, n: int = 20_000) -> WeightValidation:
    """Check ``|w| <= 1``, ``w' >= 0``, ``w(b) - w(a) = int_a^b w'`` and, for sinh weights,
    the lower bound ``w' >= (2k/h) e^{-kM/2h} m``."""
    x = check_grid(V, w, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        wv = np.asarray(w.w(x), dtype=float)
        wp = np.asarray(w.w_prime(x), dtype=float)
    fin = np.isfinite(wp)
    max_w = float(np.max(np.abs(wv)))
    min_wp = float(np.min(wp[fin]))
    # integral consistency on a few windows; oscillatory weights list their kinks only
    # inside a core region, so their windows stay inside it
    r = max(1.0, w.support or 0.0, *(abs(b) for b in w.breakpoints))
    far = 2.0 * r if len(w.breakpoints) <= 64 else r
    sing = [(s.position, s.exponent) for s in w.singular_points]
    errs = []
    for a, b in [(-far, far), (-r / 3, r / 2), (0.1 * r, far)]:
        q = integrate(lambda t: np.asarray(w.w_prime(t), float), a, b, sing, list(w.breakpoints), rtol=1e-11)
        d = float(w.w(np.array([b]))[0] - w.w(np.array([a]))[0])
        errs.append(abs(q - d))
    lb = None
    if w.kind == "thm1_sinh" and not w.metadata.get("degenerate"):
        fac = w.metadata["lower_bound_factor"]
        with np.errstate(invalid="ignore"):
            lbm = wp - fac * np.asarray(w.envelope(x), dtype=float)
        lb = float(np.min(lbm[np.isfinite(lbm)]))
    ok = max_w <= 1.0 and min_wp >= 0.0 and max(errs) <= 1e-9 and (lb is None or lb >= -1e-12)
    return WeightValidation(max_w, min_wp, max(errs), lb, bool(ok))


def dump_weight_csv(w: WeightFunction, x: np.ndarray, path: str | Path) -> Path:
    """Write ``x, w, w'`` rows."""
    path = Path(path)
    x = np.asarray(x, dtype=float)
    wv, wp = np.asarray(w.w(x)), np.asarray(w.w_prime(x))
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "w", "w_prime"])
        for a, b, c in zip(x, wv, wp):
            wr.writerow([f"{a:.12e}", f"{b:.12e}", f"{c:.12e}"])
    return path
