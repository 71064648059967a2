"""Panel quadrature utilities.

Adaptive integration uses a nested pair of Gauss-Legendre rules (10 and 21
points) on each piece, bisecting pieces whose two estimates disagree.  A piece
that ends on an integrable singularity ``|x - s|**(-alpha)`` is integrated in
the variable ``t = |x - s|**(1 - alpha)``, which removes the singularity of
the integrand times the Jacobian.

The same module supplies the fixed-order panel machinery used by the Volterra
solver and the Green's function application: Gauss nodes on ``[0, 1]``, the
spectral integration matrix and barycentric interpolation.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import legendre as L

from .errors import QuadratureError

_N_LO = 10
_N_HI = 21
_TAIL_BETA = 10.0


@lru_cache(maxsize=None)
def gauss_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = L.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def integration_matrix(n: int) -> np.ndarray:
    """Matrix ``S`` with ``S[i, k] = int_{t_i}^1 l_k(t) dt`` on the unit Gauss nodes.

    ``l_k`` is the Lagrange basis polynomial of node ``k``; applying ``S`` to
    samples of a smooth function gives its integral from each node to 1.
    """
    t, _ = gauss_unit(n)
    s = 2.0 * t - 1.0
    vinv = np.linalg.inv(L.legvander(s, n - 1))
    S = np.empty((n, n))
    for k in range(n):
        c = vinv[:, k]
        ci = L.legint(c, lbnd=-1.0)
        total = L.legval(1.0, ci)
        S[:, k] = 0.5 * (total - L.legval(s, ci))
    return S


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


def lagrange_matrix(nodes: np.ndarray, t: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Rows of Lagrange basis values at points ``t`` (barycentric form)."""
    nodes = np.asarray(nodes, dtype=float)
    bw = barycentric_weights(nodes) if weights is None else weights
    t = np.asarray(t, dtype=float)
    d = t[:, None] - nodes[None, :]
    exact = d == 0.0
    d[exact] = 1.0
    c = bw[None, :] / d
    P = c / np.sum(c, axis=1, keepdims=True)
    hit = np.any(exact, axis=1)
    if np.any(hit):
        P[hit] = exact[hit].astype(float)
    return P


@lru_cache(maxsize=None)
def closed_gauss_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit Gauss nodes with both endpoints appended, and their barycentric weights."""
    t, _ = gauss_unit(n)
    nodes = np.concatenate([[0.0], t, [1.0]])
    return nodes, barycentric_weights(nodes)


def interpolation_matrix(n: int, t: np.ndarray) -> np.ndarray:
    """Rows of Lagrange basis values at points ``t`` for the n-point unit Gauss nodes."""
    nodes, _ = gauss_unit(n)
    return lagrange_matrix(nodes, t)


# ---------------------------------------------------------------------------
# adaptive integration


def _piece_nodes(t0, t1, kind, s, beta, n):
    """Physical nodes and Jacobian-scaled weights for a batch of pieces."""
    u, w = gauss_unit(n)
    width = (t1 - t0)[:, None]
    t = t0[:, None] + width * u[None, :]
    ww = width * w[None, :]
    x = t.copy()
    jac = np.ones_like(t)
    left = kind == 1
    right = kind == 2
    if np.any(left):
        b = beta[left][:, None]
        x[left] = s[left][:, None] + t[left] ** b
        jac[left] = b * t[left] ** (b - 1.0)
    if np.any(right):
        b = beta[right][:, None]
        x[right] = s[right][:, None] - t[right] ** b
        jac[right] = b * t[right] ** (b - 1.0)
    return x, ww * jac


def integrate_intervals(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    alpha_lo: np.ndarray | None = None,
    alpha_hi: np.ndarray | None = None,
    rtol: float = 1e-13,
    atol: float = 1e-300,
    max_rounds: int = 60,
) -> np.ndarray:
    """Integrate a vectorised ``f`` over many finite intervals at once.

    ``alpha_lo[i] > 0`` declares a singularity of exponent ``alpha_lo[i]`` at
    ``lo[i]`` (likewise ``alpha_hi``).  Intervals with both ends singular are
    split at the midpoint.  Returns the array of integrals.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    m = lo.size
    a_lo = np.zeros(m) if alpha_lo is None else np.broadcast_to(np.asarray(alpha_lo, float), (m,))
    a_hi = np.zeros(m) if alpha_hi is None else np.broadcast_to(np.asarray(alpha_hi, float), (m,))

    # build elementary pieces in their integration variable
    orig, t0, t1, kind, s, beta = [], [], [], [], [], []

    def add(i, a, b, al, ah):
        if b <= a:
            return
        if al > 0.0:
            bt = 1.0 / (1.0 - al)
            orig.append(i); t0.append(0.0); t1.append((b - a) ** (1.0 / bt))
            kind.append(1); s.append(a); beta.append(bt)
        elif ah > 0.0:
            bt = 1.0 / (1.0 - ah)
            orig.append(i); t0.append(0.0); t1.append((b - a) ** (1.0 / bt))
            kind.append(2); s.append(b); beta.append(bt)
        else:
            orig.append(i); t0.append(a); t1.append(b)
            kind.append(0); s.append(0.0); beta.append(1.0)

    for i in range(m):
        a, b = lo[i], hi[i]
        if a_lo[i] > 0.0 and a_hi[i] > 0.0:
            mid = 0.5 * (a + b)
            add(i, a, mid, a_lo[i], 0.0)
            add(i, mid, b, 0.0, a_hi[i])
        else:
            add(i, a, b, a_lo[i], a_hi[i])

    orig = np.asarray(orig, dtype=int)
    t0 = np.asarray(t0); t1 = np.asarray(t1)
    kind = np.asarray(kind, dtype=int); s = np.asarray(s); beta = np.asarray(beta)
    span = np.zeros(m)
    np.add.at(span, orig, t1 - t0)

    result = np.zeros(m)
    if orig.size == 0:
        return result
    estimate = np.zeros(m)
    for _ in range(max_rounds):
        xh, wh = _piece_nodes(t0, t1, kind, s, beta, _N_HI)
        xl, wl = _piece_nodes(t0, t1, kind, s, beta, _N_LO)
        ih = np.sum(wh * f(xh), axis=1)
        il = np.sum(wl * f(xl), axis=1)
        err = np.abs(ih - il)
        estimate[:] = result
        np.add.at(estimate, orig, ih)
        frac = (t1 - t0) / span[orig]
        tol = np.maximum(atol, rtol * np.abs(estimate[orig])) * frac
        tiny = (t1 - t0) <= 1e-15 * np.maximum(np.abs(t0), 1.0)
        ok = (err <= tol) | tiny
        np.add.at(result, orig[ok], ih[ok])
        bad = ~ok
        if not np.any(bad):
            return result
        if np.count_nonzero(bad) > 50_000 or not np.all(np.isfinite(ih[bad])):
            break
        mid = 0.5 * (t0[bad] + t1[bad])
        orig = np.concatenate([orig[bad], orig[bad]])
        kind = np.concatenate([kind[bad], kind[bad]])
        s = np.concatenate([s[bad], s[bad]])
        beta = np.concatenate([beta[bad], beta[bad]])
        t0, t1 = np.concatenate([t0[bad], mid]), np.concatenate([mid, t1[bad]])
    raise QuadratureError(
        "adaptive quadrature did not converge; a singularity may be undeclared "
        "or its exponent mis-declared"
    )


def _split_points(a: float, b: float, pts: Iterable[float]) -> list[float]:
    inner = sorted({p for p in pts if a < p < b})
    return [a, *inner, b]


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    singular: Sequence[tuple[float, float]] = (),
    breakpoints: Sequence[float] = (),
    rtol: float = 1e-13,
    atol: float = 1e-300,
) -> float:
    """Integrate ``f`` over ``[a, b]``; either end may be infinite.

    ``singular`` lists ``(position, alpha)`` pairs, ``breakpoints`` lists
    points where ``f`` is not smooth.  Both are used as subdivision points.
    """
    if a == b:
        return 0.0
    if a > b:
        return -integrate(f, b, a, singular, breakpoints, rtol, atol)
    if np.isinf(a) or np.isinf(b):
        return _integrate_infinite(f, a, b, singular, breakpoints, rtol, atol)
    sing = {float(p): float(al) for p, al in singular}
    pts = _split_points(a, b, list(sing) + list(breakpoints))
    lo = np.array(pts[:-1]); hi = np.array(pts[1:])
    al = np.array([sing.get(p, 0.0) for p in lo])
    ah = np.array([sing.get(p, 0.0) for p in hi])
    return float(np.sum(integrate_intervals(f, lo, hi, al, ah, rtol, atol)))


def _integrate_infinite(f, a, b, singular, breakpoints, rtol, atol):
    marks = sorted({float(p) for p, _ in singular} | {float(p) for p in breakpoints})
    if np.isinf(a) and np.isinf(b):
        c = 0.0 if not marks else marks[0]
        return (_integrate_infinite(f, -np.inf, c, singular, breakpoints, rtol, atol)
                + integrate(f, c, np.inf, singular, breakpoints, rtol, atol))
    # x = c +/- (tau**-beta - 1): algebraic tails |x|**(-1-delta) become tau**(beta*delta - 1)
    beta = _TAIL_BETA
    if np.isinf(b):
        c = max([a] + [p for p in marks if p > a]) + 1.0
        total = integrate(f, a, c, singular, breakpoints, rtol, atol)
        sign = 1.0
    else:
        c = min([b] + [p for p in marks if p < b]) - 1.0
        total = integrate(f, c, b, singular, breakpoints, rtol, atol)
        sign = -1.0

    def g(tau):
        with np.errstate(over="ignore", invalid="ignore"):
            out = f(c + sign * (tau ** -beta - 1.0)) * beta * tau ** (-beta - 1.0)
        return np.where(np.isfinite(out), out, 0.0)

    total += float(integrate_intervals(g, np.array([0.0]), np.array([1.0]), rtol=rtol, atol=atol)[0])
    return total
