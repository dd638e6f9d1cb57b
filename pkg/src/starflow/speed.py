"""Prescribed forcing terms and their admissibility checks.

The right-hand side driving every flow in this package has the separable form

    G(X, ν) = c · exp(Σ_j s_j ⟨X/|X|, v_j⟩) · u^a · ρ^b,

with u = ⟨X, ν⟩ the support value and ρ = |X|.  The exponential factor ψ is
the anisotropy; with no terms ψ ≡ 1 and G depends on the point only through u
and ρ.  Admissibility of a (G, F, β) triple is decided here:

- barrier_radii: the largest sphere pinched from inside and the smallest
  pinching from outside, found by bisection on r ↦ (c ψ_ext)^{1/β} r^{(a+b+β)/β}
  against F(1, ..., 1), with ψ extremized over a Fibonacci direction lattice.
- monotonicity_report: the closed-form exponent conditions that the various
  convergence and uniqueness arguments need, each with its margin.
- radius_root: for isotropic G, the radius of the stationary sphere solving
  η c R^{a+b+β} = 1 with η = F(1, ..., 1)^{-β}.  The normalization η is kept
  explicit rather than folded into c.

Validators are report-only: nothing here mutates a flow, and the run loop
never calls them unless asked to gate on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .symfunc import F_eval

__all__ = [
    "PsiTerm",
    "SpeedSpec",
    "fibonacci_directions",
    "psi_eval",
    "psi_extrema",
    "G_eval",
    "BarrierRadii",
    "barrier_radii",
    "MonotonicityReport",
    "monotonicity_report",
    "radius_root",
]

_R_LO, _R_HI = 1e-6, 1e6


@dataclass(frozen=True)
class PsiTerm:
    """One anisotropy factor exp(s ⟨ξ, v⟩) with v a unit 3-vector."""

    s: float
    v: tuple[float, float, float]

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError("psi direction must be a finite 3-vector")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"psi direction must be unit length, |v| = {norm:.6g}")


@dataclass(frozen=True)
class SpeedSpec:
    """Forcing G = c ψ(ξ) u^a ρ^b."""

    c: float
    a: float
    b: float
    psi: tuple[PsiTerm, ...] = ()

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0.0):
            raise ValueError(f"amplitude c must be positive, got {self.c}")
        for x in (self.a, self.b):
            if not np.isfinite(x):
                raise ValueError("exponents must be finite")
        object.__setattr__(self, "psi", tuple(self.psi))

    @property
    def isotropic(self) -> bool:
        return all(term.s == 0.0 for term in self.psi)

    def axis_aligned(self, tol: float = 1e-12) -> bool:
        """True when every anisotropy direction is ±(0, 0, 1)."""
        for term in self.psi:
            vx, vy, vz = term.v
            if abs(vx) > tol or abs(vy) > tol or abs(abs(vz) - 1.0) > tol:
                return False
        return True


def fibonacci_directions(count: int) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors on S², shape (count, 3)."""
    if count < 1:
        raise ValueError("need at least one direction")
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    ang = golden * i
    return np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=-1)


def psi_eval(spec: SpeedSpec, xi: np.ndarray) -> np.ndarray:
    """ψ(ξ) = exp(Σ s_j ⟨ξ, v_j⟩) for directions ξ of shape (..., 3)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 3:
        raise ValueError("directions must be 3-vectors")
    acc = np.zeros(xi.shape[:-1])
    for term in spec.psi:
        acc = acc + term.s * (xi @ np.asarray(term.v))
    return np.exp(acc)


def psi_extrema(spec: SpeedSpec, samples: int = 10_000) -> tuple[float, float]:
    """(min, max) of ψ over a Fibonacci lattice of directions."""
    if not spec.psi:
        return 1.0, 1.0
    vals = psi_eval(spec, fibonacci_directions(samples))
    return float(np.min(vals)), float(np.max(vals))


def G_eval(
    spec: SpeedSpec,
    xi: np.ndarray,
    u: np.ndarray,
    rho: np.ndarray,
    *,
    checked: bool = True,
):
    """Evaluate G at nodes with radial direction ξ, support u, radius ρ."""
    u = np.asarray(u, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if checked:
        if np.any(u <= 0.0) or not np.all(np.isfinite(u)):
            raise ValueError("support function must be positive and finite")
        if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
            raise ValueError("radius must be positive and finite")
    out = spec.c * psi_eval(spec, xi)
    if spec.a != 0.0:
        out = out * u**spec.a
    if spec.b != 0.0:
        out = out * rho**spec.b
    return out


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class BarrierRadii:
    """Result of the sphere-barrier search."""

    ok: bool
    r1: float = float("nan")
    r2: float = float("nan")
    equality: bool = False
    reason: str = ""


def barrier_radii(
    spec: SpeedSpec,
    F_spec,
    n: int,
    beta: float,
    samples: int = 10_000,
) -> BarrierRadii:
    """Inner and outer sphere barriers for the triple (G, F, β).

    A sphere of radius r pinches the flow from inside when
    G^{1/β}(rξ, ξ) · r >= F(1, ..., 1) for every direction ξ, and from outside
    under the reversed inequality.  On spheres u = ρ = r, so each side is a
    power law in r and the critical radii come from a bisection against the
    sampled extrema of ψ.  They exist exactly when a + b + β < 0; the scale
    of r₁ uses ψ_min, that of r₂ uses ψ_max, hence r₁ <= r₂.
    """
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    f_unit = float(F_eval(F_spec, np.ones(n)))
    slope = (spec.a + spec.b + beta) / beta
    psi_min, psi_max = psi_extrema(spec, samples)

    if slope > 0.0:
        return BarrierRadii(
            ok=False,
            reason=(
                "a + b + beta > 0: sphere comparison runs the wrong way, no "
                "inner/outer pair exists"
            ),
        )
    if slope == 0.0:
        return BarrierRadii(
            ok=False,
            reason="a + b + beta = 0: forcing is scale-invariant, radii are not pinned",
        )

    def edge(psi_val: float) -> float:
        # root of (c psi)^{1/beta} r^{slope} - f_unit, decreasing in r
        def fn(r: float) -> float:
            return (spec.c * psi_val) ** (1.0 / beta) * r**slope - f_unit

        lo, hi = fn(_R_LO), fn(_R_HI)
        if not (lo > 0.0 > hi):
            raise ValueError(
                f"no barrier radius inside [{_R_LO:g}, {_R_HI:g}] "
                f"(endpoint values {lo:.3g}, {hi:.3g})"
            )
        return float(bisect(fn, _R_LO, _R_HI, xtol=1e-13, rtol=8.9e-16))

    try:
        r1 = edge(psi_min)
        r2 = edge(psi_max)
    except ValueError as exc:
        return BarrierRadii(ok=False, reason=str(exc))
    return BarrierRadii(ok=True, r1=r1, r2=r2, equality=bool(abs(r1 - r2) < 1e-12))


@dataclass(frozen=True)
class MonotonicityReport:
    """Closed-form exponent conditions; margin > 0 means strictly satisfied.

    radial_scaling        a + b + β <= 0   flow-ordered sphere barriers
    support_negative      a < 0            support exponent strictly negative
    radial_contraction    a + b + 1 < 0    strict decay of r ↦ r·G on rays,
                                           the uniqueness regime
    support_free          a = 0, b + 1 <= 0  support-free forcing variant
    support_nonzero       |a| > 0          nondegenerate support dependence
    """

    margins: dict = field(default_factory=dict)

    def holds(self, name: str) -> bool:
        return self.margins[name] > 0.0

    def holds_weak(self, name: str) -> bool:
        return self.margins[name] >= 0.0


def monotonicity_report(spec: SpeedSpec, beta: float) -> MonotonicityReport:
    """Margins for every exponent condition the convergence theory leans on."""
    margins = {
        "radial_scaling": -(spec.a + spec.b + beta),
        "support_negative": -spec.a,
        "radial_contraction": -(spec.a + spec.b + 1.0),
        "support_free": (-(spec.b + 1.0)) if spec.a == 0.0 else float("-inf"),
        "support_nonzero": abs(spec.a),
    }
    return MonotonicityReport(margins=margins)


def radius_root(
    spec: SpeedSpec, F_spec, n: int, beta: float, psi_mode: str = "identity"
) -> float:
    """Radius of the stationary sphere for isotropic forcing.

    In "identity" mode the SpeedSpec encodes G itself and the equation is
    η c R^{a+b+β} = 1 with η = F(1, ..., 1)^{-β}.  In "neg_reciprocal" mode
    it is read as the contracting form's forcing G̃ = 1/G, and the
    equivalent reciprocal equation η^{-1} c R^{a+b-β} = 1 is solved instead.
    Both are handled by bisection in log R over [1e-6, 1e6].  Requires ψ ≡ 1
    and a nonzero net exponent.
    """
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not spec.isotropic:
        raise ValueError("radius_root needs isotropic forcing (no psi terms)")
    eta = float(F_eval(F_spec, np.ones(n)) ** (-beta))
    if psi_mode == "identity":
        s = spec.a + spec.b + beta
        const = np.log(eta * spec.c)
    elif psi_mode == "neg_reciprocal":
        s = spec.a + spec.b - beta
        const = np.log(spec.c / eta)
    else:
        raise ValueError(f"unknown psi mode {psi_mode!r}")
    if s == 0.0:
        raise ValueError("net radial exponent is zero: stationary radius is not isolated")

    def fn(log_r: float) -> float:
        return const + s * log_r

    lo, hi = np.log(_R_LO), np.log(_R_HI)
    if fn(lo) * fn(hi) > 0.0:
        raise ValueError("stationary radius falls outside [1e-6, 1e6]")
    return float(np.exp(bisect(fn, lo, hi, xtol=1e-14)))
