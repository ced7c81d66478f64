"""R-transforms of the eigenvalue laws that enter the replica energy.

Three families are supported:

* ``MarchenkoPastur``: spectrum of ``HH^H`` for a ``k x n`` matrix with
  i.i.d. entries of variance ``1/n`` and load ``alpha = k/n``.
* ``InverseGramian``: spectrum of ``(HH^H)^{-1}``, the matrix ``J`` seen by
  the precoder after channel inversion.
* ``Tabulated``: an empirical spectrum; the R-transform is obtained by
  numerically inverting the Stieltjes transform.

Convention: ``R(w) = m^{-1}(-w) - 1/w`` with ``m(s) = E[1/(x - s)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DivergentMoment, DivisionByZero, DomainError, NoBracket

# Sign in front of the square root in the inverse-Gramian R-transform. Only
# the minus branch has the pole at w = 0 that a diverging mean requires; the
# constant exists so the verification suite can inject the wrong branch.
BRANCH_SIGN = -1

_MAX_EXPANSIONS = 200


class Family(str, Enum):
    MARCHENKO_PASTUR = "mp"
    INVERSE_GRAMIAN = "inverse-gramian"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class RTransformSpec:
    """Description of a limiting eigenvalue distribution.

    Use the constructors :meth:`marchenko_pastur`, :meth:`inverse_gramian`,
    :meth:`tabulated` and :meth:`point_mass` rather than the raw initializer.
    """

    family: Family
    alpha: float | None = None
    eigenvalues: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if family is Family.TABULATED:
            if len(self.eigenvalues) == 0:
                raise DomainError("tabulated spectrum needs at least one eigenvalue")
            eig = tuple(float(x) for x in self.eigenvalues)
            if min(eig) < 0:
                raise DomainError("eigenvalues must be nonnegative")
            object.__setattr__(self, "eigenvalues", eig)
        else:
            if self.alpha is None or not self.alpha > 0:
                raise DomainError(f"{family.value} requires alpha > 0, got {self.alpha}")
            object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def marchenko_pastur(cls, alpha: float) -> "RTransformSpec":
        return cls(Family.MARCHENKO_PASTUR, alpha=alpha)

    @classmethod
    def inverse_gramian(cls, alpha: float) -> "RTransformSpec":
        return cls(Family.INVERSE_GRAMIAN, alpha=alpha)

    @classmethod
    def tabulated(cls, eigenvalues: Sequence[float]) -> "RTransformSpec":
        return cls(Family.TABULATED, eigenvalues=tuple(np.ravel(eigenvalues)))

    @classmethod
    def point_mass(cls, c: float) -> "RTransformSpec":
        return cls.tabulated([c])

    @property
    def has_alpha(self) -> bool:
        return self.family is not Family.TABULATED

    def with_alpha(self, alpha: float) -> "RTransformSpec":
        if not self.has_alpha:
            raise DomainError("tabulated spectra carry no load parameter")
        return RTransformSpec(self.family, alpha=alpha)

    def to_dict(self) -> dict:
        d: dict = {"family": self.family.value}
        if self.has_alpha:
            d["alpha"] = self.alpha
        else:
            d["eigenvalues"] = list(self.eigenvalues)
        return d


# ---------------------------------------------------------------------------
# inverse Gramian closed forms


def _ig_discriminant(alpha: float, w: float) -> float:
    disc = (1.0 - alpha) ** 2 - 4.0 * alpha * w
    if disc < 0:
        raise DomainError(
            f"w={w} outside the real branch of the inverse-Gramian R-transform "
            f"(need w <= {(1 - alpha) ** 2 / (4 * alpha)})"
        )
    return disc


def _ig_r(alpha: float, w: float) -> float:
    root = math.sqrt(_ig_discriminant(alpha, w))
    if BRANCH_SIGN < 0:
        # (1 - a - root) / (2 a w) with the numerator rationalized, which is
        # free of cancellation and finite at w = 0 when a < 1
        den = 1.0 - alpha + root
        if den == 0.0:
            raise DivergentMoment(
                f"inverse-Gramian R-transform has a pole at w=0 for alpha={alpha} >= 1"
            )
        return 2.0 / den
    if w == 0.0:
        raise DivergentMoment("plus branch is singular at w=0")
    return (1.0 - alpha + root) / (2.0 * alpha * w)


def _ig_r_prime(alpha: float, w: float) -> float:
    disc = _ig_discriminant(alpha, w)
    if BRANCH_SIGN < 0 and w == 0.0 and alpha >= 1.0:
        raise DivergentMoment(
            f"inverse-Gramian R-transform has a pole at w=0 for alpha={alpha} >= 1")
    if disc == 0.0:
        raise DomainError("R' is infinite at the branch point")
    root = math.sqrt(disc)
    if BRANCH_SIGN < 0:
        den = 1.0 - alpha + root
        if den == 0.0:
            raise DivergentMoment(
                f"inverse-Gramian R-transform has a pole at w=0 for alpha={alpha} >= 1"
            )
        return 4.0 * alpha / (den * den * root)
    if w == 0.0:
        raise DivergentMoment("plus branch is singular at w=0")
    num = 1.0 - alpha + root
    return num * num / (4.0 * alpha * w * w * root)


# ---------------------------------------------------------------------------
# public operations


def r_transform(spec: RTransformSpec, w: float) -> float:
    """R-transform of ``spec`` at the real point ``w``."""
    w = float(w)
    if spec.family is Family.MARCHENKO_PASTUR:
        den = 1.0 - spec.alpha * w
        if den == 0.0:
            raise DomainError(f"w = 1/alpha = {w} is a pole of the MP R-transform")
        return 1.0 / den
    if spec.family is Family.INVERSE_GRAMIAN:
        return _ig_r(spec.alpha, w)
    return r_from_stieltjes(spec.eigenvalues, w)


def r_prime(spec: RTransformSpec, w: float) -> float:
    """Derivative ``R'(w)``; central differences for tabulated spectra."""
    w = float(w)
    if spec.family is Family.MARCHENKO_PASTUR:
        den = 1.0 - spec.alpha * w
        if den == 0.0:
            raise DomainError(f"w = 1/alpha = {w} is a pole of the MP R-transform")
        return spec.alpha / (den * den)
    if spec.family is Family.INVERSE_GRAMIAN:
        return _ig_r_prime(spec.alpha, w)
    h = max(1e-6, 1e-6 * abs(w))
    return (r_from_stieltjes(spec.eigenvalues, w + h)
            - r_from_stieltjes(spec.eigenvalues, w - h)) / (2.0 * h)


def r_ratio(spec: RTransformSpec, w: float) -> float:
    """``R(w)**2 / R'(w)``."""
    if spec.family is Family.INVERSE_GRAMIAN and BRANCH_SIGN < 0:
        alpha = spec.alpha
        # same domain and pole checks as R itself
        _ig_r(alpha, float(w))
        return math.sqrt(_ig_discriminant(alpha, float(w))) / alpha
    rp = r_prime(spec, w)
    if rp == 0.0:
        raise DivisionByZero(f"R'({w}) = 0")
    r = r_transform(spec, w)
    return r * r / rp


def stieltjes(eigenvalues: Sequence[float], s: complex) -> complex:
    """Empirical Stieltjes transform ``mean(1 / (x_i - s))``."""
    x = np.asarray(eigenvalues, dtype=float)
    d = x - s
    if np.any(d == 0):
        raise DomainError(f"s={s} coincides with an eigenvalue")
    return complex(np.mean(1.0 / d))


def r_from_stieltjes(eigenvalues: Sequence[float], w: float) -> float:
    """R-transform of an empirical spectrum by inverting its Stieltjes transform.

    Solving ``m(s) = -w`` directly for ``s`` loses all precision near ``w = 0``
    because ``s ~ 1/w``. Writing ``s = r + 1/w`` turns the condition into

        h(r) = mean((x - r) / (1 - w (x - r))) = 0,

    which is smooth through ``w = 0`` (where ``r`` is the mean) and strictly
    decreasing in ``r`` on the branch where ``s`` lies outside the spectrum.
    The root is bracketed by geometric expansion and refined with Brent's
    method.
    """
    x = np.asarray(eigenvalues, dtype=float)
    if x.size == 0:
        raise DomainError("empty spectrum")
    w = float(w)
    mean = float(np.mean(x))
    if w == 0.0:
        return mean
    if np.all(x == x[0]):
        return float(x[0])

    def h(r: float) -> float:
        u = x - r
        return float(np.mean(u / (1.0 - w * u)))

    # the pole of h sits where s = r + 1/w touches the spectrum edge
    if w < 0:
        edge = float(x.min()) - 1.0 / w
        inner, outer_sign = -1.0, -1.0
    else:
        edge = float(x.max()) - 1.0 / w
        inner, outer_sign = 1.0, 1.0

    gap = 1.0
    for _ in range(_MAX_EXPANSIONS):
        r_in = edge + inner * gap
        if (h(r_in) < 0) if w < 0 else (h(r_in) > 0):
            break
        gap /= 2.0
    else:
        raise NoBracket(f"could not approach the spectrum edge for w={w}")

    dist = 1.0
    start = min(mean, r_in) if w < 0 else max(mean, r_in)
    for _ in range(_MAX_EXPANSIONS):
        r_out = start + outer_sign * dist
        if (h(r_out) > 0) if w < 0 else (h(r_out) < 0):
            break
        dist *= 2.0
    else:
        raise NoBracket(f"could not bracket the inverse Stieltjes transform at w={w}")

    lo, hi = sorted((r_in, r_out))
    return float(brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def verify_inverse_lemma(spec_x: RTransformSpec, spec_x_inv: RTransformSpec, w: float) -> float:
    """Residual of ``1/R_X(w) = R_{X^-1}(-R_X(w) (1 + w R_X(w)))``."""
    rx = r_transform(spec_x, w)
    arg = -rx * (1.0 + w * rx)
    return abs(1.0 / rx - r_transform(spec_x_inv, arg))
