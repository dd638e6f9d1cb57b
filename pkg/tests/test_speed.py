"""Forcing term G, barrier radii, exponent conditions, stationary radius."""

import numpy as np
import pytest

from starflow.speed import (
    BarrierRadii,
    G_eval,
    PsiTerm,
    SpeedSpec,
    barrier_radii,
    fibonacci_directions,
    monotonicity_report,
    psi_eval,
    psi_extrema,
    radius_root,
)
from starflow.symfunc import SigmaKRoot

EZ = (0.0, 0.0, 1.0)


def test_psi_term_validation():
    PsiTerm(s=0.5, v=EZ)
    with pytest.raises(ValueError):
        PsiTerm(s=0.5, v=(0.0, 0.0, 2.0))
    with pytest.raises(ValueError):
        PsiTerm(s=0.5, v=(0.0, 0.0))
    with pytest.raises(ValueError):
        PsiTerm(s=0.5, v=(np.nan, 0.0, 1.0))


def test_speed_spec_validation():
    spec = SpeedSpec(c=1.0, a=0.0, b=-2.0)
    assert spec.isotropic
    assert spec.axis_aligned()
    with pytest.raises(ValueError):
        SpeedSpec(c=0.0, a=0.0, b=1.0)
    with pytest.raises(ValueError):
        SpeedSpec(c=-2.0, a=0.0, b=1.0)
    aniso = SpeedSpec(c=1.0, a=0.0, b=0.0, psi=(PsiTerm(s=0.2, v=EZ),))
    assert not aniso.isotropic
    assert aniso.axis_aligned()
    tilted = SpeedSpec(c=1.0, a=0.0, b=0.0, psi=(PsiTerm(s=0.2, v=(1.0, 0.0, 0.0)),))
    assert not tilted.axis_aligned()
    # zero-strength terms count as isotropic no matter the direction
    assert SpeedSpec(c=1.0, a=0.0, b=0.0, psi=(PsiTerm(s=0.0, v=(1.0, 0.0, 0.0)),)).isotropic


def test_psi_eval_pointwise():
    spec = SpeedSpec(c=1.0, a=0.0, b=0.0, psi=(PsiTerm(s=0.2, v=EZ),))
    north = np.array([0.0, 0.0, 1.0])
    south = np.array([0.0, 0.0, -1.0])
    equator = np.array([1.0, 0.0, 0.0])
    assert psi_eval(spec, north) == pytest.approx(np.exp(0.2), rel=1e-14)
    assert psi_eval(spec, south) == pytest.approx(np.exp(-0.2), rel=1e-14)
    assert psi_eval(spec, equator) == pytest.approx(1.0, rel=1e-14)
    # terms multiply
    two = SpeedSpec(
        c=1.0, a=0.0, b=0.0,
        psi=(PsiTerm(s=0.2, v=EZ), PsiTerm(s=-0.1, v=(1.0, 0.0, 0.0))),
    )
    xi = np.array([np.sqrt(0.5), 0.0, np.sqrt(0.5)])
    want = np.exp(0.2 * np.sqrt(0.5)) * np.exp(-0.1 * np.sqrt(0.5))
    assert psi_eval(two, xi) == pytest.approx(want, rel=1e-14)


def test_fibonacci_directions():
    dirs = fibonacci_directions(5000)
    assert dirs.shape == (5000, 3)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
    # the lattice covers the sphere: any direction has a near neighbor
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        assert np.max(dirs @ v) > 0.999


def test_psi_extrema_single_axis():
    spec = SpeedSpec(c=1.0, a=0.0, b=0.0, psi=(PsiTerm(s=0.2, v=EZ),))
    lo, hi = psi_extrema(spec)
    assert lo == pytest.approx(np.exp(-0.2), rel=1e-3)
    assert hi == pytest.approx(np.exp(0.2), rel=1e-3)
    assert psi_extrema(SpeedSpec(c=1.0, a=0.0, b=0.0)) == (1.0, 1.0)


def test_psi_extrema_stable_under_refinement():
    spec = SpeedSpec(
        c=1.0, a=0.0, b=0.0,
        psi=(PsiTerm(s=0.3, v=EZ), PsiTerm(s=0.1, v=(0.0, 1.0, 0.0))),
    )
    lo1, hi1 = psi_extrema(spec)
    lo2, hi2 = psi_extrema(spec, samples=80_000)
    assert abs(lo1 - lo2) < 1e-3 and abs(hi1 - hi2) < 1e-3


def test_G_eval_values():
    xi = np.array([0.0, 0.0, 1.0])
    # pure radius power
    spec = SpeedSpec(c=1.0, a=0.0, b=-2.0)
    assert G_eval(spec, xi, 1.3, 1.3) == pytest.approx(1.3**-2, rel=1e-14)
    # split exponents with amplitude
    spec = SpeedSpec(c=2.0, a=-0.5, b=-1.5)
    assert G_eval(spec, xi, 4.0, 4.0) == pytest.approx(2.0 / 16.0, rel=1e-14)
    # anisotropy multiplies in at the north pole
    spec = SpeedSpec(c=1.0, a=0.0, b=-2.0, psi=(PsiTerm(s=0.2, v=EZ),))
    assert G_eval(spec, xi, 1.0, 1.0) == pytest.approx(np.exp(0.2), rel=1e-14)


def test_G_eval_homogeneity():
    rng = np.random.default_rng(6)
    spec = SpeedSpec(c=1.7, a=-0.5, b=-1.5)
    for _ in range(30):
        xi = rng.normal(size=3)
        xi /= np.linalg.norm(xi)
        u = float(rng.uniform(0.2, 2.0))
        rho = u * float(rng.uniform(1.0, 1.5))
        lam = float(rng.uniform(0.5, 3.0))
        base = float(G_eval(spec, xi, u, rho))
        scaled = float(G_eval(spec, xi, lam * u, lam * rho))
        assert scaled == pytest.approx(lam ** (spec.a + spec.b) * base, rel=1e-12)


def test_G_eval_rejects_bad_support():
    spec = SpeedSpec(c=1.0, a=-1.0, b=0.0)
    xi = np.array([0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        G_eval(spec, xi, 0.0, 1.0)
    with pytest.raises(ValueError):
        G_eval(spec, xi, 1.0, -1.0)
    # unchecked mode leaves the branch cut to the caller
    with np.errstate(divide="ignore"):
        G_eval(spec, xi, 0.0, 1.0, checked=False)


def test_barrier_radii_isotropic_pinch():
    radii = barrier_radii(SpeedSpec(c=1.0, a=0.0, b=-2.0), SigmaKRoot(k=2), 2, 1.0)
    assert radii.ok and radii.equality
    assert radii.r1 == pytest.approx(1.0, rel=1e-10)
    assert radii.r2 == pytest.approx(1.0, rel=1e-10)


def test_barrier_radii_anisotropic():
    spec = SpeedSpec(c=1.0, a=0.0, b=-2.0, psi=(PsiTerm(s=0.2, v=EZ),))
    radii = barrier_radii(spec, SigmaKRoot(k=2), 2, 1.0)
    assert radii.ok and not radii.equality
    assert radii.r1 == pytest.approx(np.exp(-0.2), rel=1e-3)
    assert radii.r2 == pytest.approx(np.exp(0.2), rel=1e-3)
    assert radii.r1 < radii.r2


def test_barrier_radii_wrong_scaling():
    radii = barrier_radii(SpeedSpec(c=1.0, a=1.0, b=0.0), SigmaKRoot(k=2), 2, 1.0)
    assert not radii.ok
    assert "a + b + beta" in radii.reason or "wrong way" in radii.reason
    radii = barrier_radii(SpeedSpec(c=1.0, a=0.0, b=-1.0), SigmaKRoot(k=2), 2, 1.0)
    assert not radii.ok  # scale-invariant: no isolated comparison spheres
    assert isinstance(radii, BarrierRadii)


def test_monotonicity_report():
    rep = monotonicity_report(SpeedSpec(c=1.0, a=0.0, b=-2.0), 1.0)
    assert rep.margins["radial_scaling"] == pytest.approx(1.0)
    assert rep.margins["radial_contraction"] == pytest.approx(1.0)
    assert rep.margins["support_free"] == pytest.approx(1.0)
    assert rep.holds("radial_scaling")
    assert not rep.holds("support_nonzero")
    assert rep.holds_weak("support_negative")

    rep = monotonicity_report(SpeedSpec(c=1.0, a=-0.5, b=-1.5), 1.0)
    assert rep.margins["radial_scaling"] == pytest.approx(1.0)
    assert rep.margins["support_negative"] == pytest.approx(0.5)
    assert rep.margins["support_free"] == float("-inf")
    assert rep.margins["support_nonzero"] == pytest.approx(0.5)


def test_radius_root_identity_mode():
    # eta = 1 for sigma_2^{1/2} on S^2, so c R^{a+b+beta} = 1
    r = radius_root(SpeedSpec(c=1.0, a=0.0, b=-2.0), SigmaKRoot(k=2), 2, 1.0)
    assert r == pytest.approx(1.0, rel=1e-10)
    r = radius_root(SpeedSpec(c=2.0, a=0.0, b=-2.0), SigmaKRoot(k=2), 2, 1.0)
    assert r == pytest.approx(2.0, rel=1e-10)
    # eta = 1/3 for sigma_1 on S^3: R = 1/3
    r = radius_root(SpeedSpec(c=1.0, a=0.0, b=-2.0), SigmaKRoot(k=1), 3, 1.0)
    assert r == pytest.approx(1.0 / 3.0, rel=1e-10)


def test_radius_root_neg_reciprocal_mode():
    # the SpeedSpec is the contracting forcing itself: eta^{-1} c R^{a+b-beta} = 1
    # with eta = 3^{-1} gives 3R = 1
    r = radius_root(
        SpeedSpec(c=1.0, a=0.0, b=3.0), SigmaKRoot(k=2), 3, 2.0,
        psi_mode="neg_reciprocal",
    )
    assert r == pytest.approx(1.0 / 3.0, rel=1e-10)


def test_radius_root_rejections():
    with pytest.raises(ValueError):
        radius_root(SpeedSpec(c=1.0, a=0.0, b=-1.0), SigmaKRoot(k=2), 2, 1.0)
    with pytest.raises(ValueError):
        radius_root(
            SpeedSpec(c=1.0, a=0.0, b=-2.0, psi=(PsiTerm(s=0.1, v=EZ),)),
            SigmaKRoot(k=2), 2, 1.0,
        )
    with pytest.raises(ValueError):
        radius_root(SpeedSpec(c=1.0, a=0.0, b=-2.0), SigmaKRoot(k=2), 2, 1.0, psi_mode="cubed")
