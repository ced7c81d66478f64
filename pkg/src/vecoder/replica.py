"""Replica-symmetric fixed points for the energy of vector precoding.

Two routes are provided and are kept independent of each other:

* :func:`solve_general` iterates the generic pair of equations for ``(q, b)``
  for any alphabet and any R-transform, integrating the nearest-point map
  against Gaussian noise numerically.
* :func:`solve_1d`, :func:`solve_quadrature`, :func:`solve_semidiscrete` and
  :func:`solve_square_1d` iterate the closed forms that hold for channel
  inversion (the inverse-Gramian R-transform), parameterized by
  ``p = sqrt((1 - alpha)^2 + 4 alpha b)`` so that ``E_s = q / p``.

Beyond a lattice-dependent load the fixed point ceases to exist and the
predicted energy jumps to infinity. Solutions past that point come back with
``diverged=True``. Loads above one are reached by continuation in ``alpha``
from a load where a cold start converges.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import root
from scipy.spatial import QhullError, Voronoi
from scipy.special import ndtr

from . import rmt
from .alphabet import Alphabet, DataPrior, Kind, enumerate_points, resolve_points
from .errors import BadBracket, DivergentMoment, DomainError, MaxIterations
from .rmt import RTransformSpec

# integration range for the real Gaussian coordinate; Q(10) ~ 8e-24
_ZMAX = 10.0
_MAX_PANEL = 2.0
_STALL = 300  # Picard steps between attempts to polish a slow iteration


@dataclass(frozen=True)
class FixedPointConfig:
    damping: float = 0.5
    tol: float = 1e-12
    max_iter: int = 100_000
    quad_order: int = 64
    init_q: float | None = None  # None: smallest-energy point of each set
    init_b: float = 1.0
    divergence_cap: float = 1e6
    fd_step: float | None = None  # None: 1e-6 * max(1, b)
    continuation: bool = True

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise DomainError("damping must lie in (0, 1]")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be positive")
        if self.quad_order < 8:
            raise DomainError("quad_order must be at least 8")
        if not self.divergence_cap > 0:
            raise DomainError("divergence_cap must be positive")
        if self.init_q is not None and not self.init_q > 0:
            raise DomainError("init_q must be positive")
        if not self.init_b > 0:
            raise DomainError("init_b must be positive")


@dataclass
class ReplicaSolution:
    q: float
    b: float
    p: float | None
    es: float
    eb: float
    converged: bool
    diverged: bool
    iterations: int
    alpha: float | None = None
    error: str | None = None

    @property
    def es_db(self) -> float:
        if not math.isfinite(self.es) or self.es <= 0:
            return math.inf
        return 10.0 * math.log10(self.es)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["es_db"] = self.es_db
        return {k: d[k] for k in ("alpha", "q", "b", "p", "es", "eb", "es_db",
                                  "converged", "diverged", "iterations", "error")}


def _diverged(alpha, iterations, q=math.nan, b=math.nan, p=None, error=None):
    return ReplicaSolution(q=q, b=b, p=p, es=math.inf, eb=math.inf, converged=False,
                           diverged=True, iterations=iterations, alpha=alpha, error=error)


# ---------------------------------------------------------------------------
# scalar helpers


def gaussian_q(x):
    """Gaussian tail probability ``Q(x) = P(Z > x)`` for standard normal ``Z``."""
    return ndtr(-np.asarray(x, dtype=float)) if np.ndim(x) else float(ndtr(-float(x)))


def energy_from_qb(q: float, b: float, spec: RTransformSpec, fd_step: float | None = None) -> float:
    """Energy per symbol ``q * d/db [b R(-b)] = q (R(-b) - b R'(-b))``.

    The analytic derivative is used for the closed-form families; tabulated
    spectra fall back to a central difference of ``b R(-b)``.
    """
    if not b > 0:
        raise DomainError(f"b must be positive, got {b}")
    if spec.family is rmt.Family.TABULATED:
        h = fd_step if fd_step is not None else 1e-6 * max(1.0, b)
        h = min(h, b / 2)
        f_plus = (b + h) * rmt.r_transform(spec, -(b + h))
        f_minus = (b - h) * rmt.r_transform(spec, -(b - h))
        return q * (f_plus - f_minus) / (2 * h)
    return q * (rmt.r_transform(spec, -b) - b * rmt.r_prime(spec, -b))


def _b_from_p(alpha: float, p: float) -> float:
    # p sits on its floor |1 - alpha| when the outer points carry no mass
    return max(0.0, (p - (1.0 - alpha)) * (p + (1.0 - alpha)) / (4.0 * alpha))


def _p_from_b(alpha: float, b: float) -> float:
    return math.sqrt((1.0 - alpha) ** 2 + 4.0 * alpha * b)


# ---------------------------------------------------------------------------
# numerical Gaussian moments of the nearest-point map


@lru_cache(maxsize=None)
def _leggauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(order)


def _legendre_panels(breaks: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [-ZMAX, ZMAX] split at ``breaks``.

    The nearest-point map is piecewise constant, so splitting at its jumps
    makes every panel integrand smooth.
    """
    inner = np.sort(breaks[(breaks > -_ZMAX) & (breaks < _ZMAX)])
    edges = np.concatenate(([-_ZMAX], inner, [_ZMAX]))
    x, w = _leggauss(order)
    zs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        n_sub = max(1, int(math.ceil((b - a) / _MAX_PANEL)))
        sub = np.linspace(a, b, n_sub + 1)
        for lo, hi in zip(sub[:-1], sub[1:]):
            half = (hi - lo) / 2
            zs.append((lo + hi) / 2 + half * x)
            ws.append(half * w)
    z = np.concatenate(zs)
    weights = np.concatenate(ws) * np.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    return z, weights


def _axis_moments(points: np.ndarray | None, sigma: float, order: int) -> tuple[float, float]:
    """``E[x^2]`` and ``E[x z]`` along one real axis, ``x`` nearest to ``sigma z``.

    ``points=None`` is an unconstrained coordinate (``x = sigma z``).
    """
    if points is None:
        return sigma * sigma, sigma
    c = np.unique(np.asarray(points, dtype=float))
    if c.size == 1:
        return float(c[0] ** 2), 0.0
    edges = (c[1:] + c[:-1]) / 2.0
    z, w = _legendre_panels(edges / sigma, order)
    # nodes never sit on a boundary, so the cell index is unambiguous
    x = c[np.searchsorted(edges, sigma * z)]
    return float(np.sum(w * x * x)), float(np.sum(w * x * z))


@lru_cache(maxsize=256)
def _planar_geometry(key: tuple[tuple[float, float], ...]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points grouped by imaginary part, and Voronoi-vertex abscissae."""
    pts = np.array([complex(r, i) for r, i in key])
    rows = np.unique(np.round(pts.imag, 12))
    group = np.searchsorted(rows, np.round(pts.imag, 12))
    if len(pts) >= 3:
        try:
            vx = np.unique(Voronoi(np.c_[pts.real, pts.imag]).vertices[:, 0])
        except QhullError:  # collinear sets have no vertices
            vx = np.zeros(0)
    else:
        vx = np.zeros(0)
    return pts, group, vx


def planar_moments(points: np.ndarray, sigma: float, order: int) -> tuple[float, float]:
    """``E|x|^2`` and ``E Re{x conj(z)}`` for a finite planar set, ``x`` nearest ``sigma z``.

    Along each vertical line ``Re z = u`` the nearest point is the lowest of
    the lines ``|sigma u - c_r|^2 + c_i^2 - 2 c_i t`` in ``t = sigma Im z``, so
    the inner Gaussian integral is exact (normal cdf/pdf differences between
    the envelope breakpoints). The outer integral uses Gauss-Legendre panels
    split where a vertical line crosses a Voronoi vertex, which is where the
    inner integral stops being smooth in ``u``.
    """
    pts, group, vx = _planar_geometry(tuple((float(c.real), float(c.imag)) for c in points))
    if len(pts) == 1:
        c = pts[0]
        return float(abs(c) ** 2), 0.0
    u, wu = _legendre_panels(vx / sigma, order)
    n_rows = int(group.max()) + 1
    # lowest intercept per row of equal imaginary part
    inter = (sigma * u[:, None] - pts.real[None, :]) ** 2 + pts.imag[None, :] ** 2
    best = np.full((u.size, n_rows), np.inf)
    arg = np.zeros((u.size, n_rows), dtype=int)
    for g in range(n_rows):
        members = np.nonzero(group == g)[0]
        j = np.argmin(inter[:, members], axis=1)
        arg[:, g] = members[j]
        best[:, g] = inter[np.arange(u.size), members[j]]
    slope = -2.0 * pts.imag[arg]  # (nodes, rows)
    if n_rows == 1:
        x = pts[arg[:, 0]]
        return (float(np.sum(wu * np.abs(x) ** 2)), float(np.sum(wu * x.real * u)))
    gi, hi = np.triu_indices(n_rows, 1)
    cuts = (best[:, hi] - best[:, gi]) / (slope[:, gi] - slope[:, hi])
    cuts = np.sort(cuts, axis=1)
    mids = np.concatenate([cuts[:, :1] - 1.0, (cuts[:, 1:] + cuts[:, :-1]) / 2,
                           cuts[:, -1:] + 1.0], axis=1)
    vals = best[:, None, :] + slope[:, None, :] * mids[:, :, None]
    win = np.argmin(vals, axis=2)
    x = pts[np.take_along_axis(arg, win, axis=1)]  # (nodes, segments)
    edges = np.concatenate([np.full((u.size, 1), -np.inf), cuts / sigma,
                            np.full((u.size, 1), np.inf)], axis=1)
    mass = np.diff(ndtr(edges), axis=1)
    dens = np.exp(-0.5 * edges ** 2) / math.sqrt(2 * math.pi)
    first = -np.diff(dens, axis=1)  # integral of v phi(v) over each segment
    m2 = np.sum(np.abs(x) ** 2 * mass, axis=1)
    corr = np.sum(x.real * u[:, None] * mass + x.imag * first, axis=1)
    return float(np.sum(wu * m2)), float(np.sum(wu * corr))


def gaussian_moments(a: Alphabet, s, sigma: float, order: int = 64) -> tuple[float, float]:
    """``E|x|^2`` and ``E Re{x conj(z)}`` for ``x = argmin_{B_s} |sigma z - x|``.

    ``z`` is complex with independent unit-variance real and imaginary parts.
    """
    if a.kind is Kind.CHECKERBOARD:
        return planar_moments(enumerate_points(a, s), sigma, order)
    re, im = a.real_axis_sets(s)
    m_re, c_re = _axis_moments(re, sigma, order)
    m_im, c_im = _axis_moments(im, sigma, order)
    return m_re + m_im, c_re + c_im


# ---------------------------------------------------------------------------
# continuation in the load


def _track(alpha: float, attempt: Callable, start: float = 0.9,
           h0: float = 0.1, h_min: float = 1e-4) -> ReplicaSolution:
    """Solve at ``alpha``; on failure walk the branch up from ``start``.

    ``attempt(alpha, init)`` returns a ReplicaSolution. The walk stops with a
    diverged result when the step shrinks below ``h_min``, which is where the
    stable branch of fixed points ends.
    """
    sol = attempt(alpha, None)
    if sol.converged or alpha <= start:
        return sol
    base = attempt(start, None)
    if not base.converged:
        return sol
    a_cur, h, state = start, h0, base
    while a_cur < alpha:
        a_try = min(a_cur + h, alpha)
        trial = attempt(a_try, state)
        if trial.converged:
            a_cur, state = a_try, trial
            h = min(2 * h, 0.5)
        else:
            h /= 2
            if h < h_min:
                return _diverged(alpha, trial.iterations,
                                 error=f"fixed-point branch ends near alpha={a_cur:.4f}")
    return state


# ---------------------------------------------------------------------------
# closed forms for channel inversion


def _sorted_points(points: Sequence[float]) -> np.ndarray:
    c = np.sort(resolve_points(points))
    if np.any(np.diff(c) <= 0):
        raise DomainError("points must be distinct")
    return c


def _closed_form(alpha: float, points, cfg: FixedPointConfig, n_discrete: int, n_free: int,
                 bits: float, init: ReplicaSolution | None = None) -> ReplicaSolution:
    """Damped Picard iteration of the ``(q, p)`` closed forms.

    Per discrete axis the nearest-point map contributes
    ``T = c_1^2 + sum (c_i^2 - c_{i-1}^2) Q(sqrt(p / (2 q alpha)) (c_i + c_{i-1}))``
    to ``q`` and ``S = sum (c_i - c_{i-1}) exp(-p (c_i + c_{i-1})^2 / (4 q alpha))``
    to ``p``; a free axis adds ``q alpha / (2 p)`` to ``q`` and ``alpha`` to ``p``.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    c = _sorted_points(points)
    m, f = float(n_discrete), float(n_free)
    p_floor = abs(1.0 - alpha)

    if c.size == 1:
        p = 1.0 - alpha + f * alpha
        q_den = 1.0 - f * alpha / (2.0 * p) if p > 0 else -1.0
        if p <= 0 or q_den <= 0:
            return _diverged(alpha, 0, error="no fixed point without precoding at this load")
        q = m * c[0] ** 2 / q_den
        es = q / p
        if es > cfg.divergence_cap:
            return _diverged(alpha, 0, q=q, p=p)
        return ReplicaSolution(q=q, b=_b_from_p(alpha, p), p=p, es=es, eb=es / bits,
                               converged=True, diverged=False, iterations=0, alpha=alpha)

    sums = c[1:] + c[:-1]
    steps = c[1:] - c[:-1]
    sq_steps = c[1:] ** 2 - c[:-1] ** 2
    c1sq = c[0] ** 2

    if init is not None and init.converged and init.p is not None:
        q, p = init.q, init.p
    else:
        q = cfg.init_q if cfg.init_q is not None else m * c1sq
        p = max(1.0 - alpha, 0.1)

    d = cfg.damping
    for it in range(1, cfg.max_iter + 1):
        scale = p / (2.0 * q * alpha)
        T = c1sq + np.dot(sq_steps, ndtr(-math.sqrt(scale) * sums))
        S = np.dot(steps, np.exp(-scale * sums * sums / 2.0))
        q_new = m * T + f * q * alpha / (2.0 * p)
        p_new = 1.0 - alpha + f * alpha + m * math.sqrt(alpha * p / (math.pi * q)) * S
        if not (p_new > 1e-8 and math.isfinite(q_new) and q_new > 0):
            return _diverged(alpha, it, q=q, p=p, error="p collapsed to zero")
        q_next = (1 - d) * q + d * q_new
        p_next = (1 - d) * p + d * p_new
        if q_next / p_next > cfg.divergence_cap:
            return _diverged(alpha, it, q=q_next, p=p_next, error="energy above cap")
        done = abs(q_next - q) <= cfg.tol * q and abs(p_next - p) <= cfg.tol * p
        q, p = q_next, p_next
        if done:
            if p < p_floor * (1.0 - 1e-12):
                return _diverged(alpha, it, q=q, p=p,
                                 error="only the unphysical root with b < 0 was found")
            es = q / p
            return ReplicaSolution(q=q, b=_b_from_p(alpha, p), p=p, es=es, eb=es / bits,
                                   converged=True, diverged=False, iterations=it, alpha=alpha)
    raise MaxIterations(f"no convergence after {cfg.max_iter} iterations at alpha={alpha}")


def _closed_form_tracked(alpha, points, cfg, n_discrete, n_free, bits, init=None):
    def attempt(a, state):
        try:
            return _closed_form(a, points, cfg, n_discrete, n_free, bits, init=state)
        except MaxIterations as exc:
            return ReplicaSolution(math.nan, math.nan, None, math.nan, math.nan, False, False,
                                   cfg.max_iter, a, str(exc))

    sol = attempt(alpha, init) if init is not None else None
    if sol is not None and sol.converged:
        return sol
    if cfg.continuation:
        sol = _track(alpha, attempt)
    elif sol is None:
        sol = attempt(alpha, None)
    if not sol.converged and not sol.diverged:
        raise MaxIterations(sol.error or "fixed-point iteration did not settle")
    return sol


def solve_1d(alpha: float, points: Sequence[float], cfg: FixedPointConfig | None = None,
             init: ReplicaSolution | None = None) -> ReplicaSolution:
    """Real one-dimensional lattice (Tomlinson-Harashima type) under channel inversion.

    ``points`` is the real set of one data symbol, e.g. ``lattice_points(L)``
    or the magnitudes ``[1, 3, 5]`` (see ``alphabet.resolve_points``); its
    mirror image gives the same answer.
    """
    cfg = cfg or FixedPointConfig()
    return _closed_form_tracked(alpha, points, cfg, 1, 0, 1.0, init)


def solve_quadrature(alpha: float, points: Sequence[float], cfg: FixedPointConfig | None = None,
                     init: ReplicaSolution | None = None) -> ReplicaSolution:
    """Gray-mapped QPSK with the 1-D lattice in both quadrature components."""
    cfg = cfg or FixedPointConfig()
    return _closed_form_tracked(alpha, points, cfg, 2, 0, 2.0, init)


def solve_semidiscrete(alpha: float, points: Sequence[float], cfg: FixedPointConfig | None = None,
                       init: ReplicaSolution | None = None) -> ReplicaSolution:
    """Discrete real parts, unconstrained imaginary parts.

    The free imaginary coordinate contributes ``q R'(-b) / (2 R(-b)^2)`` to
    ``q`` and ``1 / (2 R(-b))`` to ``b``; with ``R'/R^2 = alpha / p`` both
    become explicit in ``(q, p)``.
    """
    cfg = cfg or FixedPointConfig()
    sol = _closed_form_tracked(alpha, points, cfg, 1, 1, 1.0, init)
    if sol.converged and sol.b > 0:
        sol.es = energy_from_qb(sol.q, sol.b, RTransformSpec.inverse_gramian(alpha))
        sol.eb = sol.es
    return sol


def solve_square_1d(points: Sequence[float], cfg: FixedPointConfig | None = None) -> ReplicaSolution:
    """Square channel (``alpha = 1``): scalar fixed point in ``E_s`` directly.

    ``E = pi [(c_1^2 + sum (c_i^2 - c_{i-1}^2) Q((c_i + c_{i-1}) / sqrt(2E)))
    / sum (c_i - c_{i-1}) exp(-(c_i + c_{i-1})^2 / (4E))]^2``,
    iterated with damping from ``E = 2``. ``q`` and ``b`` are recovered from
    ``p = sum (c_i - c_{i-1}) exp(...) / sqrt(pi E)``, ``q = E p``, ``b = p^2/4``.
    """
    cfg = cfg or FixedPointConfig()
    c = _sorted_points(points)
    if c.size == 1:
        return _diverged(1.0, 0, q=c[0] ** 2, p=0.0, error="pole at alpha = 1 without precoding")
    sums = c[1:] + c[:-1]
    steps = c[1:] - c[:-1]
    sq_steps = c[1:] ** 2 - c[:-1] ** 2
    E, d = 2.0, cfg.damping
    for it in range(1, cfg.max_iter + 1):
        num = c[0] ** 2 + np.dot(sq_steps, ndtr(-sums / math.sqrt(2 * E)))
        den = np.dot(steps, np.exp(-sums * sums / (4 * E)))
        if not den > 0:
            return _diverged(1.0, it, error="denominator vanished")
        E_next = (1 - d) * E + d * math.pi * (num / den) ** 2
        if E_next > cfg.divergence_cap:
            return _diverged(1.0, it, error="energy above cap")
        done = abs(E_next - E) <= cfg.tol * E
        E = E_next
        if done:
            p = np.dot(steps, np.exp(-sums * sums / (4 * E))) / math.sqrt(math.pi * E)
            return ReplicaSolution(q=E * p, b=p * p / 4, p=p, es=E, eb=E, converged=True,
                                   diverged=False, iterations=it, alpha=1.0)
    raise MaxIterations(f"square-channel fixed point did not converge in {cfg.max_iter} steps")


# ---------------------------------------------------------------------------
# general route


def _polish(rhs: Callable, q: float, b: float, tol: float) -> tuple[float, float] | None:
    """Root of ``rhs(q, b) = (q, b)`` near the iterate, or None.

    Solved in log variables so the search stays in ``q, b > 0``.
    """
    def resid(u):
        try:
            qn, bn = rhs(math.exp(u[0]), math.exp(u[1]))
        except (DomainError, OverflowError, ValueError):
            return np.array([1e3, 1e3])
        if not (qn > 0 and bn > 0):
            return np.array([1e3, 1e3])
        return np.log([qn, bn]) - u

    sol = root(resid, [math.log(q), math.log(b)], method="hybr",
               options={"xtol": max(tol, 1e-14)})
    if not sol.success or np.max(np.abs(resid(sol.x))) > 1e-9:
        return None
    q_r, b_r = (float(v) for v in np.exp(sol.x))
    if not 1e-12 <= b_r <= 1e12:
        return None
    return q_r, b_r


def _min_energy(a: Alphabet, s) -> float:
    if a.kind is Kind.SEMI_DISCRETE:
        re, _ = a.real_axis_sets(s)
        return float(np.min(re * re))
    return float(np.min(np.abs(enumerate_points(a, s)) ** 2))


def _general_once(spec: RTransformSpec, a: Alphabet, prior: DataPrior, cfg: FixedPointConfig,
                  init: ReplicaSolution | None) -> ReplicaSolution:
    probs = prior.probabilities
    syms = prior.symbols
    bits = a.bits_per_symbol
    alpha = spec.alpha if spec.has_alpha else None

    if a.is_finite and all(len(enumerate_points(a, s)) == 1 for s in syms):
        q = float(sum(pr * _min_energy(a, s) for s, pr in zip(syms, probs)))
        try:
            es = q * rmt.r_transform(spec, 0.0)
        except DivergentMoment:
            return _diverged(alpha, 0, q=q, b=0.0, error="R(0) is infinite")
        if not (math.isfinite(es) and 0 < es <= cfg.divergence_cap):
            return _diverged(alpha, 0, q=q, b=0.0)
        return ReplicaSolution(q=q, b=0.0, p=None, es=es, eb=es / bits, converged=True,
                               diverged=False, iterations=0, alpha=alpha)

    if init is not None and init.converged and init.b > 0:
        q, b = init.q, init.b
    else:
        q = cfg.init_q if cfg.init_q is not None else float(
            sum(pr * _min_energy(a, s) for s, pr in zip(syms, probs)))
        b = cfg.init_b

    def rhs(q: float, b: float) -> tuple[float, float]:
        r = rmt.r_transform(spec, -b)
        rp = rmt.r_prime(spec, -b)
        if not (r > 0 and rp > 0):
            raise DomainError("R or R' not positive")
        sigma = math.sqrt(q * rp / (2.0 * r * r))
        m2 = corr = 0.0
        for s, pr in zip(syms, probs):
            if pr == 0:
                continue
            m2_s, corr_s = gaussian_moments(a, s, sigma, cfg.quad_order)
            m2 += pr * m2_s
            corr += pr * corr_s
        return m2, corr / math.sqrt(2.0 * q * rp)

    def finish(q: float, b: float, it: int) -> ReplicaSolution:
        try:
            es = energy_from_qb(q, b, spec, cfg.fd_step)
        except DomainError as exc:
            return _diverged(alpha, it, q=q, b=b, error=str(exc))
        if not (0 < es <= cfg.divergence_cap):
            return _diverged(alpha, it, q=q, b=b, error="energy above cap")
        p = _p_from_b(alpha, b) if spec.family is rmt.Family.INVERSE_GRAMIAN else None
        return ReplicaSolution(q=q, b=b, p=p, es=es, eb=es / bits, converged=True,
                               diverged=False, iterations=it, alpha=alpha)

    d = cfg.damping
    falling = 0  # consecutive iterations with b decreasing
    for it in range(1, cfg.max_iter + 1):
        try:
            q_new, b_new = rhs(q, b)
        except DomainError as exc:
            return _diverged(alpha, it, q=q, b=b, error=str(exc))
        q_next = (1 - d) * q + d * q_new
        b_next = (1 - d) * b + d * b_new
        if not (1e-12 <= b_next <= 1e12) or not (math.isfinite(q_next) and q_next > 0):
            return _diverged(alpha, it, q=q_next, b=b_next, error="b left [1e-12, 1e12]")
        done = abs(q_next - q) <= cfg.tol * q and abs(b_next - b) <= cfg.tol * b
        falling = falling + 1 if b_next < b else 0
        q, b = q_next, b_next
        if done:
            return finish(q, b, it)
        if it % _STALL == 0:
            # critical slowing down near the end of the branch; locate the
            # fixed point of the same equations directly
            found = _polish(rhs, q, b, cfg.tol)
            if found is not None:
                return finish(found[0], found[1], it)
            if falling >= _STALL:
                return _diverged(alpha, it, q=q, b=b,
                                 error="no fixed point with b > 0; b decreasing steadily")
    raise MaxIterations(f"general solver did not converge in {cfg.max_iter} iterations")


def solve_general(spec: RTransformSpec, a: Alphabet, prior: DataPrior | None = None,
                  cfg: FixedPointConfig | None = None,
                  init: ReplicaSolution | None = None) -> ReplicaSolution:
    """Iterate the generic ``(q, b)`` replica equations.

    With ``sigma = sqrt(q R'(-b) / (2 R(-b)^2))`` and ``x(z)`` the point of
    ``B_s`` nearest to ``sigma z``::

        q <- E_s E_z |x(z)|^2
        b <- E_s E_z Re{x(z) conj(z)} / sqrt(2 q R'(-b))

    and ``E_s = q (R(-b) - b R'(-b))``. Axis-separable alphabets are integrated
    per real coordinate with Gauss-Legendre panels split at the Voronoi
    boundaries; the checkerboard uses a tensor Gauss-Hermite rule.
    """
    cfg = cfg or FixedPointConfig()
    prior = prior or DataPrior.uniform(a)
    for s in prior.symbols:
        a.symbol_index(s)

    def attempt(alpha, state):
        sp = spec.with_alpha(alpha) if alpha is not None else spec
        try:
            return _general_once(sp, a, prior, cfg, state)
        except MaxIterations as exc:
            return ReplicaSolution(math.nan, math.nan, None, math.nan, math.nan, False, False,
                                   cfg.max_iter, alpha, str(exc))

    if init is not None:
        sol = attempt(spec.alpha if spec.has_alpha else None, init)
        if sol.converged:
            return sol
    if spec.has_alpha and cfg.continuation:
        sol = _track(spec.alpha, attempt)
    else:
        sol = attempt(spec.alpha if spec.has_alpha else None, None)
    if not sol.converged and not sol.diverged:
        raise MaxIterations(sol.error or "fixed-point iteration did not settle")
    return sol


# ---------------------------------------------------------------------------
# sweeps and thresholds


class SolverKind(str, Enum):
    ONE_DIM = "1d"
    SQUARE = "square"
    QUADRATURE = "quadrature"
    SEMI_DISCRETE = "semidiscrete"
    CHECKERBOARD = "checkerboard"


def solve(kind: SolverKind | str, alpha: float, points: Sequence[float],
          cfg: FixedPointConfig | None = None, init: ReplicaSolution | None = None) -> ReplicaSolution:
    """Dispatch to the solver for ``kind`` under channel inversion."""
    kind = SolverKind(kind)
    cfg = cfg or FixedPointConfig()
    if kind is SolverKind.ONE_DIM:
        return solve_1d(alpha, points, cfg, init)
    if kind is SolverKind.SQUARE:
        if alpha != 1.0:
            raise DomainError("the square-channel solver only applies at alpha = 1")
        return solve_square_1d(points, cfg)
    if kind is SolverKind.QUADRATURE:
        return solve_quadrature(alpha, points, cfg, init)
    if kind is SolverKind.SEMI_DISCRETE:
        return solve_semidiscrete(alpha, points, cfg, init)
    a = Alphabet.checkerboard(len(points), points)
    return solve_general(RTransformSpec.inverse_gramian(alpha), a, cfg=cfg, init=init)


def _safe_solve(kind, alpha, points, cfg, init=None) -> ReplicaSolution:
    try:
        return solve(kind, alpha, points, cfg, init)
    except Exception as exc:  # noqa: BLE001 - sweeps record and continue
        return ReplicaSolution(math.nan, math.nan, None, math.nan, math.nan, False, False, 0,
                               alpha, f"{type(exc).__name__}: {exc}")


def sweep(kind: SolverKind | str, alpha_grid: Sequence[float], points: Sequence[float],
          cfg: FixedPointConfig | None = None, parallel: bool = False,
          workers: int | None = None) -> list[tuple[float, ReplicaSolution]]:
    """One solve per load in ``alpha_grid``.

    The default sequential mode warm-starts each point from the last
    converged one; ``parallel=True`` cold-starts every point on a thread pool.
    Errors are stored on the solution, never raised.
    """
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise DomainError("alpha grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("alpha grid must be strictly increasing")
    cfg = cfg or FixedPointConfig()
    if parallel:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sols = list(pool.map(lambda a: _safe_solve(kind, a, points, cfg), grid))
        return list(zip(grid, sols))
    out, last = [], None
    for a in grid:
        sol = _safe_solve(kind, a, points, cfg, last)
        if sol.converged:
            last = sol
        out.append((a, sol))
    return out


def find_threshold(kind: SolverKind | str, points: Sequence[float],
                   cfg: FixedPointConfig | None = None, lo: float = 0.5, hi: float = 3.0,
                   atol: float = 1e-3) -> float:
    """Load at which the fixed point disappears, by bisection to ``atol``."""
    cfg = cfg or FixedPointConfig()

    def ok(a):
        return _safe_solve(kind, a, points, cfg).converged

    if not ok(lo):
        raise BadBracket(f"solver does not converge at lo={lo}")
    if ok(hi):
        raise BadBracket(f"solver still converges at hi={hi}")
    while hi - lo > atol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def crossover_load(f: Callable[[float], float], g: Callable[[float], float],
                   lo: float, hi: float, atol: float = 1e-4) -> float:
    """Load where ``f(alpha) - g(alpha)`` changes sign, by bisection."""
    d_lo = f(lo) - g(lo)
    d_hi = f(hi) - g(hi)
    if not (math.isfinite(d_lo) and math.isfinite(d_hi)) or d_lo * d_hi > 0:
        raise BadBracket(f"no sign change of the difference on [{lo}, {hi}]")
    while hi - lo > atol:
        mid = 0.5 * (lo + hi)
        d_mid = f(mid) - g(mid)
        if d_mid * d_lo > 0:
            lo, d_lo = mid, d_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def semidiscrete_vs_quadrature_crossover(cfg: FixedPointConfig | None = None,
                                         L_semi: int = 1, L_quad: int = 100,
                                         lo: float = 0.05, hi: float = 0.95) -> float:
    """Largest load where the semi-discrete lattice beats the quadrature lattice in E_b."""
    from .alphabet import lattice_points

    cfg = cfg or FixedPointConfig()
    semi_pts, quad_pts = lattice_points(L_semi), lattice_points(L_quad)
    return crossover_load(lambda a: solve_semidiscrete(a, semi_pts, cfg).eb,
                          lambda a: solve_quadrature(a, quad_pts, cfg).eb, lo, hi)


__all__ = [
    "FixedPointConfig", "ReplicaSolution", "SolverKind", "gaussian_q", "energy_from_qb",
    "gaussian_moments", "solve_general", "solve_1d", "solve_square_1d", "solve_quadrature",
    "solve_semidiscrete", "solve", "sweep", "find_threshold", "crossover_load",
    "semidiscrete_vs_quadrature_crossover",
]
