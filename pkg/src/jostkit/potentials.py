"""Integrable potentials, envelopes and the test catalog.

Potentials are closed-form vectorised functions plus the metadata needed to
integrate them accurately: the support radius, the points where they are not
smooth and the positions/exponents of integrable singularities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import erf

from .errors import CatalogError, SpecError
from .quadrature import integrate, integrate_intervals

ArrayFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Singularity:
    """``|V(x)| ~ c |x - position|**(-exponent)`` near ``position``, 0 < exponent < 1."""

    position: float
    exponent: float

    def __post_init__(self):
        if not 0.0 < self.exponent < 1.0:
            raise CatalogError(f"singularity exponent must lie in (0, 1), got {self.exponent}")


def _zero_tail(x: float) -> float:
    return 0.0


@dataclass(frozen=True)
class Potential:
    """A real potential in L^1(R).

    ``func`` is evaluated only for ``|x| <= support_radius`` when the radius is
    set, so ``eval`` returns exactly 0 outside.  For potentials without compact
    support, ``core_radius`` bounds the region listed by ``breakpoints`` and
    ``tail_abs(r)`` must return ``int_{|x| > r} |V|`` for ``r >= core_radius``.
    """

    name: str
    func: ArrayFunc = field(repr=False, compare=False)
    params: tuple = ()
    support_radius: float | None = None
    singular_points: tuple[Singularity, ...] = ()
    breakpoints: tuple[float, ...] = ()
    core_radius: float | None = None
    tail_abs: Callable[[float], float] = field(default=_zero_tail, repr=False, compare=False)
    l1_norm: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if self.support_radius is not None and self.support_radius < 0:
            raise CatalogError("support radius must be nonnegative")
        if math.isnan(self.l1_norm):
            object.__setattr__(self, "l1_norm", self._quadrature_l1())

    # -- evaluation -----------------------------------------------------
    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        if self.support_radius is None:
            return self.func(x)
        out = np.zeros_like(x)
        inside = np.abs(x) <= self.support_radius
        if np.any(inside):
            out[inside] = self.func(x[inside])
        return out if out.ndim else float(out)

    @property
    def is_compact(self) -> bool:
        return self.support_radius is not None

    @property
    def extent(self) -> float:
        """Radius outside which the potential is zero or described by ``tail_abs``."""
        if self.support_radius is not None:
            return self.support_radius
        return float(self.core_radius or 0.0)

    @property
    def singular(self) -> list[tuple[float, float]]:
        return [(s.position, s.exponent) for s in self.singular_points]

    # -- integration ----------------------------------------------------
    def _integrand(self, absolute: bool) -> ArrayFunc:
        if absolute:
            return lambda x: np.abs(self.eval(x))
        return self.eval

    def integral(self, a: float, b: float, absolute: bool = False) -> float:
        """``int_a^b V`` (or ``|V|``), subdividing at breakpoints and singularities."""
        if self.support_radius is not None:
            r = self.support_radius
            a, b = max(a, -r), min(b, r)
            if a >= b:
                return 0.0
        return integrate(self._integrand(absolute), a, b, self.singular, self._marks())

    def _marks(self) -> list[float]:
        pts = list(self.breakpoints)
        if self.support_radius is not None:
            pts += [-self.support_radius, self.support_radius]
        return pts

    def _quadrature_l1(self) -> float:
        if self.support_radius is not None:
            if self.support_radius == 0.0:
                return 0.0
            return self.integral(-self.support_radius, self.support_radius, absolute=True)
        x0 = self.extent
        return self.integral(-x0, x0, absolute=True) + 2.0 * self.tail_abs(x0)

    def cell_integrals(self, edges: np.ndarray, absolute: bool = False) -> np.ndarray:
        """Integrals of V (or |V|) over consecutive cells ``[edges[i], edges[i+1]]``.

        ``edges`` must be nondecreasing.
        """
        edges = np.asarray(edges, dtype=float)
        if self.support_radius is not None:
            r = self.support_radius
            edges = np.clip(edges, -r, r)
        out = np.zeros(max(edges.size - 1, 0))
        if out.size == 0 or edges[-1] <= edges[0]:
            return out
        marks = np.array(sorted(set(self._marks()) | {s.position for s in self.singular_points}))
        if marks.size:
            marks = marks[(marks > edges[0]) & (marks < edges[-1])]
        pts = np.union1d(edges, marks)
        lo, hi = pts[:-1], pts[1:]
        cell = np.searchsorted(edges, lo, side="right") - 1
        sing = {s.position: s.exponent for s in self.singular_points}
        al = np.array([sing.get(p, 0.0) for p in lo]) if sing else None
        ah = np.array([sing.get(p, 0.0) for p in hi]) if sing else None
        scale = self.l1_norm if np.isfinite(self.l1_norm) and self.l1_norm > 0 else 1.0
        vals = integrate_intervals(self._integrand(absolute), lo, hi, al, ah, rtol=1e-13,
                                   atol=1e-16 * scale)
        np.add.at(out, cell, vals)
        return out

    def cumulative_abs(self, x):
        """``int_{-inf}^x |V|`` for scalar or array ``x``."""
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        shape = x.shape
        x = x.ravel()
        out = np.empty_like(x)
        x0 = self.extent
        if self.support_radius is not None and x0 == 0.0:
            out[:] = 0.0
            return float(out[0]) if scalar else out.reshape(shape)
        left = x <= -x0
        right = x >= x0
        mid = ~(left | right)
        left_mass = 0.0 if self.is_compact else self.tail_abs(x0)
        core_mass = self.l1_norm - 2.0 * left_mass
        if self.is_compact:
            out[left] = 0.0
            out[right] = core_mass
        else:
            for i in np.flatnonzero(left):
                out[i] = self.tail_abs(-x[i])
            for i in np.flatnonzero(right):
                out[i] = 2.0 * left_mass + core_mass - self.tail_abs(x[i])
        if np.any(mid):
            xs = x[mid]
            order = np.argsort(xs)
            edges = np.concatenate([[-x0], xs[order]])
            pieces = self.cell_integrals(edges, absolute=True)
            vals = np.empty_like(xs)
            vals[order] = left_mass + np.cumsum(pieces)
            out[mid] = vals
        return float(out[0]) if scalar else out.reshape(shape)

    # -- transformations -------------------------------------------------
    def scaled(self, factor: float) -> "Potential":
        """The potential ``factor * V``."""
        f = self.func
        tail = self.tail_abs
        return Potential(
            name=f"{factor:g}*{self.name}",
            func=lambda x: factor * f(x),
            params=self.params,
            support_radius=self.support_radius,
            singular_points=self.singular_points,
            breakpoints=self.breakpoints,
            core_radius=self.core_radius,
            tail_abs=lambda r: abs(factor) * tail(r),
            l1_norm=abs(factor) * self.l1_norm,
        )

    def dilated(self, h: float) -> "Potential":
        """The potential ``y -> V(h y)`` (lengths measured in units of ``h``)."""
        f = self.func
        tail = self.tail_abs
        return Potential(
            name=f"{self.name}(x*{h:g})",
            func=lambda y: f(h * y),
            params=self.params,
            support_radius=None if self.support_radius is None else self.support_radius / h,
            singular_points=tuple(Singularity(s.position / h, s.exponent) for s in self.singular_points),
            breakpoints=tuple(b / h for b in self.breakpoints),
            core_radius=None if self.core_radius is None else self.core_radius / h,
            tail_abs=lambda r: tail(h * r) / h,
            l1_norm=self.l1_norm / h,
        )


@dataclass(frozen=True)
class Envelope(Potential):
    """A nonnegative integrable majorant ``m >= |V|``."""

    dominates: Potential | None = field(default=None, compare=False)


def abs_envelope(V: Potential) -> Envelope:
    """The default envelope ``m = |V|``."""
    f = V.func
    return Envelope(
        name=f"|{V.name}|",
        func=lambda x: np.abs(f(x)),
        params=V.params,
        support_radius=V.support_radius,
        singular_points=V.singular_points,
        breakpoints=V.breakpoints,
        core_radius=V.core_radius,
        tail_abs=V.tail_abs,
        l1_norm=V.l1_norm,
        dominates=V,
    )


def power_envelope(A: float, delta: float, dominates: Potential | None = None) -> Envelope:
    """``m(x) = A (1 + |x|)**(-1 - delta)``."""
    if A < 0 or delta <= 0:
        raise CatalogError("power envelope needs A >= 0 and delta > 0")
    return Envelope(
        name=f"power_envelope({A:g},{delta:g})",
        func=lambda x: A * (1.0 + np.abs(x)) ** (-1.0 - delta),
        params=(A, delta),
        breakpoints=(0.0,),
        core_radius=1.0,
        tail_abs=lambda r: A * (1.0 + r) ** (-delta) / delta,
        l1_norm=2.0 * A / delta,
        dominates=dominates,
    )


def indicator_envelope(R: float, height: float = 1.0, dominates: Potential | None = None) -> Envelope:
    """``m = height * 1_[-R, R]``."""
    return Envelope(
        name=f"indicator({height:g},{R:g})",
        func=lambda x: np.full_like(np.asarray(x, float), height),
        params=(height, R),
        support_radius=float(R),
        l1_norm=2.0 * height * R,
        dominates=dominates,
    )


def envelope_from(V: Potential, dominates: Potential | None = None) -> Envelope:
    """Reinterpret a nonnegative potential as an envelope."""
    return Envelope(
        name=V.name, func=V.func, params=V.params, support_radius=V.support_radius,
        singular_points=V.singular_points, breakpoints=V.breakpoints,
        core_radius=V.core_radius, tail_abs=V.tail_abs, l1_norm=V.l1_norm,
        dominates=dominates,
    )


def domination_margin(m: Envelope, V: Potential, n: int = 10_000) -> float:
    """Minimum of ``m - |V|`` over a uniform grid plus geometric points near singularities."""
    r = max(V.extent, m.extent, 1.0)
    xs = [np.linspace(-2.0 * r, 2.0 * r, n)]
    for s in set(V.singular) | set(m.singular):
        d = np.geomspace(1e-12, r, 200)
        xs += [s[0] + d, s[0] - d]
    x = np.concatenate(xs)
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = np.asarray(m(x)) - np.abs(np.asarray(V(x)))
    diff = diff[np.isfinite(diff)]
    return float(np.min(diff))


# ---------------------------------------------------------------------------
# catalog

def _free():
    return Potential("free", lambda x: np.zeros_like(x), (), support_radius=0.0, l1_norm=0.0)


def _square_barrier(V0, R):
    if R <= 0:
        raise CatalogError("square_barrier needs R > 0")
    return Potential(
        "square_barrier", lambda x: np.full_like(x, V0), (V0, R),
        support_radius=float(R), breakpoints=(-R, R), l1_norm=2.0 * abs(V0) * R,
    )


def _gaussian_truncated(A, sigma, R):
    if sigma <= 0 or R <= 0:
        raise CatalogError("gaussian_truncated needs sigma > 0 and R > 0")
    l1 = abs(A) * sigma * math.sqrt(2.0 * math.pi) * math.erf(R / (sigma * math.sqrt(2.0)))
    return Potential(
        "gaussian_truncated", lambda x: A * np.exp(-0.5 * (x / sigma) ** 2), (A, sigma, R),
        support_radius=float(R), breakpoints=(-R, R), l1_norm=l1,
    )


def _inverse_sqrt_singular(A, R):
    if R <= 0:
        raise CatalogError("inverse_sqrt_singular needs R > 0")

    def f(x):
        with np.errstate(divide="ignore"):
            return A / np.sqrt(np.abs(x))

    return Potential(
        "inverse_sqrt_singular", f, (A, R), support_radius=float(R),
        singular_points=(Singularity(0.0, 0.5),), breakpoints=(-R, R),
        l1_norm=4.0 * abs(A) * math.sqrt(R),
    )


_WVN_HALF_PERIODS = 1400


def _wvn_like(A, delta):
    """``A sin(2x) (1 + |x|)**(-1 - delta)``: oscillating, slowly decaying, |V| <= A(1+|x|)^(-1-delta)."""
    if delta <= 0:
        raise CatalogError("wvn_like needs delta > 0; delta <= 0 gives a non-integrable potential")
    core = _WVN_HALF_PERIODS * math.pi / 2.0
    zeros = tuple(k * math.pi / 2.0 for k in range(-_WVN_HALF_PERIODS, _WVN_HALF_PERIODS + 1))

    def tail(r):
        # mean value 2/pi of |sin 2x| plus two terms of the periodic-averaging expansion
        t = math.fmod(r, math.pi / 2.0)
        s1 = 0.5 * (1.0 - math.cos(2.0 * t)) - 2.0 * t / math.pi
        s2 = 0.5 * t - 0.25 * math.sin(2.0 * t) - t * t / math.pi - (math.pi / 24.0 - 0.5 / math.pi)
        g = (1.0 + r) ** (-1.0 - delta)
        dg = -(1.0 + delta) * (1.0 + r) ** (-2.0 - delta)
        return abs(A) * ((2.0 / math.pi) * (1.0 + r) ** (-delta) / delta - s1 * g + s2 * dg)

    return Potential(
        "wvn_like", lambda x: A * np.sin(2.0 * x) * (1.0 + np.abs(x)) ** (-1.0 - delta), (A, delta),
        breakpoints=zeros, core_radius=core, tail_abs=tail,
    )


def _sinh_test(A, R):
    """Asymmetric step ``A`` on [-R, 0), ``3A`` on [0, R]; its median point is R/3."""
    if R <= 0:
        raise CatalogError("sinh_test needs R > 0")
    return Potential(
        "sinh_test", lambda x: np.where(x < 0.0, A, 3.0 * A), (A, R),
        support_radius=float(R), breakpoints=(-R, 0.0, R), l1_norm=4.0 * abs(A) * R,
    )


_CATALOG: dict[str, tuple[Callable[..., Potential], int, tuple]] = {
    "free": (_free, 0, ()),
    "square_barrier": (_square_barrier, 2, (1.0, 1.0)),
    "gaussian_truncated": (_gaussian_truncated, 3, (1.0, 0.5, 3.0)),
    "inverse_sqrt_singular": (_inverse_sqrt_singular, 2, (1.0, 1.0)),
    "wvn_like": (_wvn_like, 2, (1.0, 0.5)),
    "sinh_test": (_sinh_test, 2, (1.0, 1.0)),
}

CATALOG_NAMES = tuple(_CATALOG)


def catalog_get(name: str, params: Sequence[float] | None = None) -> Potential:
    """Build a catalog potential; ``params=None`` selects the catalog defaults."""
    try:
        ctor, nparams, defaults = _CATALOG[name]
    except KeyError:
        raise CatalogError(f"unknown potential {name!r}; choose from {', '.join(_CATALOG)}") from None
    params = defaults if params is None else tuple(float(p) for p in params)
    if len(params) != nparams:
        raise CatalogError(f"{name} takes {nparams} parameters, got {len(params)}")
    return ctor(*params)


def cumulative_abs(V: Potential, x):
    """``int_{-inf}^x |V|``; ``x = +inf`` returns the L^1 norm."""
    if np.ndim(x) == 0 and np.isinf(x):
        return 0.0 if x < 0 else V.l1_norm
    return V.cumulative_abs(x)


def potential_from_config(cfg: Mapping) -> tuple[Potential, Envelope]:
    """Load ``{name, params, envelope}`` into a potential and its envelope.

    ``envelope`` is optional and may be ``{"kind": "abs"}`` (default),
    ``{"kind": "power", "params": [A, delta]}``,
    ``{"kind": "indicator", "params": [R, height]}`` or
    ``{"kind": "catalog", "name": ..., "params": [...]}`` (must be nonnegative).
    """
    if "name" not in cfg:
        raise SpecError("potential config needs a 'name'")
    V = catalog_get(cfg["name"], cfg.get("params"))
    env = cfg.get("envelope") or {"kind": "abs"}
    kind = env.get("kind", "abs")
    p = env.get("params") or []
    if kind == "abs":
        m = abs_envelope(V)
    elif kind == "power":
        m = power_envelope(*map(float, p), dominates=V)
    elif kind == "indicator":
        m = indicator_envelope(*map(float, p), dominates=V)
    elif kind == "catalog":
        m = envelope_from(catalog_get(env["name"], env.get("params")), dominates=V)
    else:
        raise SpecError(f"unknown envelope kind {kind!r}")
    return V, m
