"""Elementary symmetric polynomials, Garding cones, and degree-one curvature functions.

The building blocks here are the normalized symmetric functions of a vector of
principal curvatures κ = (κ_1, ..., κ_n):

    σ_k(κ) = sum over k-element subsets of products,   σ_0 = 1,

together with the open cones on which they behave elliptically,

    Γ_k^+ = {κ : σ_1(κ) > 0, ..., σ_k(κ) > 0},
    Γ_+   = {κ : κ_i > 0 for every i},

and a small family of degree-one concave speeds built from them: σ_k^{1/k},
quotients (σ_k/σ_l)^{1/(k-l)}, power means with negative exponent, and
weighted geometric products of the above.

All evaluation routines are vectorized: κ may carry arbitrary leading axes, so
one call services a whole grid of curvature vectors.  σ_k is accumulated with
the stable one-entry-at-a-time recurrence

    e_k(x_1..x_m) = e_k(x_1..x_{m-1}) + x_m e_{k-1}(x_1..x_{m-1}),

never through monomial expansion.  Everything in this module is pure and
reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

__all__ = [
    "ConeViolation",
    "Cone",
    "GAMMA_PLUS",
    "SigmaKRoot",
    "QuotientRoot",
    "PowerMean",
    "WeightedProduct",
    "sigma",
    "sigma_all",
    "sigma_grad",
    "sigma_second_partial",
    "in_cone",
    "cone_failure",
    "F_eval",
    "F_grad",
    "natural_cone",
    "eta_of",
    "newton_maclaurin_margin",
]


class ConeViolation(ValueError):
    """Raised when a curvature vector leaves the admissibility cone of a speed."""


def _as_batch(kappa) -> np.ndarray:
    arr = np.asarray(kappa, dtype=float)
    if arr.ndim == 0:
        raise ValueError("curvature input must have at least one axis")
    return arr


def sigma_all(kappa, kmax: int) -> np.ndarray:
    """All σ_0..σ_kmax of κ in one sweep.

    Parameters
    ----------
    kappa : array_like, shape (..., n)
    kmax : int, 0 <= kmax <= n

    Returns
    -------
    ndarray, shape (..., kmax + 1)
        ``out[..., j]`` is σ_j(κ).
    """
    arr = _as_batch(kappa)
    n = arr.shape[-1]
    if not 0 <= kmax <= n:
        raise ValueError(f"kmax must lie in [0, {n}], got {kmax}")
    e = np.zeros(arr.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for m in range(n):
        x = arr[..., m]
        top = min(m + 1, kmax)
        for j in range(top, 0, -1):
            e[..., j] += x * e[..., j - 1]
    return e


def sigma(kappa, k: int):
    """σ_k(κ) for κ of shape (..., n); returns shape (...)."""
    return sigma_all(kappa, k)[..., k]


def sigma_grad(kappa, k: int) -> np.ndarray:
    """Gradient of σ_k: component i is σ_{k-1}(κ with entry i removed).

    Shape (..., n) in, shape (..., n) out.  1 <= k <= n.
    """
    arr = _as_batch(kappa)
    n = arr.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    out = np.empty_like(arr)
    for i in range(n):
        rest = np.delete(arr, i, axis=-1)
        out[..., i] = sigma(rest, k - 1) if n > 1 else 1.0
    return out


def sigma_second_partial(kappa, k: int, i: int, j: int):
    """∂²σ_k/∂κ_i∂κ_j: σ_{k-2} of κ with entries i and j removed, 0 when i == j."""
    arr = _as_batch(kappa)
    n = arr.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("index out of range")
    if i == j or k < 2:
        return np.zeros(arr.shape[:-1])
    rest = np.delete(arr, [i, j], axis=-1)
    return sigma(rest, k - 2)


# ---------------------------------------------------------------------------
# cones


@dataclass(frozen=True)
class Cone:
    """Admissibility cone: Γ_k^+ for integer k, Γ_+ when k is None."""

    k: int | None = None

    def describe(self) -> str:
        return "Gamma_plus" if self.k is None else f"Gamma_{self.k}^+"


GAMMA_PLUS = Cone(None)


def in_cone(kappa, cone: Cone):
    """Strict cone membership test, vectorized over leading axes.

    Returns a boolean array of shape (...); a plain bool for a single vector.
    """
    arr = _as_batch(kappa)
    ok = np.all(np.isfinite(arr), axis=-1)
    if cone.k is None:
        ok = ok & np.all(arr > 0.0, axis=-1)
    else:
        e = sigma_all(np.where(np.isfinite(arr), arr, 0.0), cone.k)
        ok = ok & np.all(e[..., 1:] > 0.0, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


def cone_failure(kappa, cone: Cone) -> str | None:
    """First violated inequality for a single vector, or None if admissible."""
    arr = np.asarray(kappa, dtype=float)
    if arr.ndim != 1:
        raise ValueError("cone_failure expects a single curvature vector")
    if not np.all(np.isfinite(arr)):
        return "non-finite curvature entry"
    if cone.k is None:
        for i, x in enumerate(arr):
            if x <= 0.0:
                return f"kappa_{i + 1} = {x:.6g} <= 0"
        return None
    for j in range(1, cone.k + 1):
        s = float(sigma(arr, j))
        if s <= 0.0:
            return f"sigma_{j} = {s:.6g} <= 0"
    return None


# ---------------------------------------------------------------------------
# curvature-function specs


@dataclass(frozen=True)
class SigmaKRoot:
    """F = σ_k^{1/k}."""

    k: int


@dataclass(frozen=True)
class QuotientRoot:
    """F = (σ_k/σ_l)^{1/(k-l)}, 0 <= l < k."""

    k: int
    l: int


@dataclass(frozen=True)
class PowerMean:
    """F = (Σ κ_i^p)^{1/p} with p < 0; needs strictly positive κ."""

    p: float


@dataclass(frozen=True)
class WeightedProduct:
    """F = Π F_i^{α_i} with α_i >= 0 summing to one; evaluated in log space."""

    terms: tuple


FSpec = SigmaKRoot | QuotientRoot | PowerMean | WeightedProduct


def _validate_spec(spec, n: int) -> None:
    if isinstance(spec, SigmaKRoot):
        if not 1 <= spec.k <= n:
            raise ValueError(f"sigma_k root needs 1 <= k <= {n}, got k={spec.k}")
    elif isinstance(spec, QuotientRoot):
        if not 0 <= spec.l < spec.k <= n:
            raise ValueError(
                f"quotient root needs 0 <= l < k <= {n}, got k={spec.k}, l={spec.l}"
            )
    elif isinstance(spec, PowerMean):
        if not spec.p < 0:
            raise ValueError(f"power mean exponent must be negative, got p={spec.p}")
    elif isinstance(spec, WeightedProduct):
        if not spec.terms:
            raise ValueError("weighted product needs at least one factor")
        weights = np.array([w for _, w in spec.terms], dtype=float)
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weighted product weights must be >= 0 and sum to 1")
        for sub, _ in spec.terms:
            if isinstance(sub, WeightedProduct):
                raise ValueError("weighted products do not nest")
            _validate_spec(sub, n)
    else:
        raise TypeError(f"unknown curvature-function spec {spec!r}")


def natural_cone(spec) -> Cone:
    """Largest cone on which the speed is defined, elliptic, and concave."""
    if isinstance(spec, SigmaKRoot):
        return Cone(spec.k)
    if isinstance(spec, QuotientRoot):
        return Cone(spec.k)
    if isinstance(spec, PowerMean):
        return GAMMA_PLUS
    if isinstance(spec, WeightedProduct):
        ks = []
        for sub, _ in spec.terms:
            cone = natural_cone(sub)
            if cone.k is None:
                return GAMMA_PLUS
            ks.append(cone.k)
        return Cone(max(ks))
    raise TypeError(f"unknown curvature-function spec {spec!r}")


def _check_cone(spec, arr: np.ndarray) -> None:
    cone = natural_cone(spec)
    ok = in_cone(arr, cone)
    if arr.ndim == 1:
        if not ok:
            raise ConeViolation(cone_failure(arr, cone) or "cone violation")
        return
    if not np.all(ok):
        flat = arr.reshape(-1, arr.shape[-1])
        bad = int(np.argmin(np.asarray(ok).reshape(-1)))
        raise ConeViolation(
            f"cone violation at flat node {bad}: {cone_failure(flat[bad], cone)}"
        )


def F_eval(spec, kappa, *, checked: bool = True):
    """Evaluate the degree-one speed F at κ (vectorized over leading axes).

    With ``checked=True`` (default) the natural cone is enforced first and a
    ConeViolation raised on the first failure. Callers that have already
    screened the field may pass ``checked=False``.
    """
    arr = _as_batch(kappa)
    _validate_spec(spec, arr.shape[-1])
    if checked:
        _check_cone(spec, arr)
    return _F_eval_raw(spec, arr)


def _F_eval_raw(spec, arr: np.ndarray):
    if isinstance(spec, SigmaKRoot):
        return sigma(arr, spec.k) ** (1.0 / spec.k)
    if isinstance(spec, QuotientRoot):
        num = sigma(arr, spec.k)
        den = sigma(arr, spec.l) if spec.l > 0 else 1.0
        return (num / den) ** (1.0 / (spec.k - spec.l))
    if isinstance(spec, PowerMean):
        return np.sum(arr ** spec.p, axis=-1) ** (1.0 / spec.p)
    if isinstance(spec, WeightedProduct):
        acc = 0.0
        for sub, w in spec.terms:
            acc = acc + w * np.log(_F_eval_raw(sub, arr))
        return np.exp(acc)
    raise TypeError(f"unknown curvature-function spec {spec!r}")


def F_grad(spec, kappa, *, checked: bool = True) -> np.ndarray:
    """∂F/∂κ_i, shape (..., n); strictly positive on the natural cone."""
    arr = _as_batch(kappa)
    _validate_spec(spec, arr.shape[-1])
    if checked:
        _check_cone(spec, arr)
    return _F_grad_raw(spec, arr)


def _F_grad_raw(spec, arr: np.ndarray) -> np.ndarray:
    if isinstance(spec, SigmaKRoot):
        k = spec.k
        sk = sigma(arr, k)
        return (1.0 / k) * sk[..., None] ** (1.0 / k - 1.0) * sigma_grad(arr, k)
    if isinstance(spec, QuotientRoot):
        k, l = spec.k, spec.l
        f = _F_eval_raw(spec, arr)
        sk = sigma(arr, k)
        term = sigma_grad(arr, k) / sk[..., None]
        if l > 0:
            sl = sigma(arr, l)
            term = term - sigma_grad(arr, l) / sl[..., None]
        return f[..., None] * term / (k - l)
    if isinstance(spec, PowerMean):
        p = spec.p
        s = np.sum(arr ** p, axis=-1)
        return s[..., None] ** (1.0 / p - 1.0) * arr ** (p - 1.0)
    if isinstance(spec, WeightedProduct):
        f = _F_eval_raw(spec, arr)
        acc = np.zeros_like(arr)
        for sub, w in spec.terms:
            fi = _F_eval_raw(sub, arr)
            acc += w * _F_grad_raw(sub, arr) / fi[..., None]
        return f[..., None] * acc
    raise TypeError(f"unknown curvature-function spec {spec!r}")


def eta_of(spec, n: int, beta: float) -> float:
    """Normalization η = F(1, ..., 1)^{-β} for the unit curvature vector in dim n."""
    ones = np.ones(n)
    return float(F_eval(spec, ones) ** (-beta))


def newton_maclaurin_margin(kappa, m: int):
    """Smallest gap in the chain p_1 >= p_2^{1/2} >= ... >= p_m^{1/m}.

    Here p_j = σ_j/C(n, j).  The margin is min_j (p_j^{1/j} - p_{j+1}^{1/(j+1)})
    over j = 1..m-1; it is >= 0 on Γ_m^+ and 0 exactly at κ_1 = ... = κ_n.
    Vectorized; requires 2 <= m <= n and κ in Γ_m^+.
    """
    arr = _as_batch(kappa)
    n = arr.shape[-1]
    if not 2 <= m <= n:
        raise ValueError(f"m must lie in [2, {n}], got {m}")
    if not np.all(in_cone(arr, Cone(m))):
        raise ConeViolation(f"newton_maclaurin_margin needs kappa in Gamma_{m}^+")
    e = sigma_all(arr, m)
    roots = np.empty(arr.shape[:-1] + (m,))
    for j in range(1, m + 1):
        p_j = e[..., j] / comb(n, j)
        roots[..., j - 1] = p_j ** (1.0 / j)
    return np.min(roots[..., :-1] - roots[..., 1:], axis=-1)
