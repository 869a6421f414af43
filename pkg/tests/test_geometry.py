import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import simpson, sphere_area
from warpiso.errors import ConfigError
from warpiso.geometry import (
    SlabRegion,
    WarpedProduct,
    slab_perimeter,
    slab_perimeter_excess,
    slab_volume,
    slice_mean_curvature,
    solve_volume_endpoint,
    symmetric_difference,
)
from warpiso.profiles import AnalyticPowerProfile, ConstantProfile, FlatBumpProfile
from warpiso.quadrature import QuadratureGrid

FLAT2 = WarpedProduct(2, ConstantProfile())
FB3 = WarpedProduct(3, FlatBumpProfile(k=8.0))
AP3 = WarpedProduct(3, AnalyticPowerProfile(m=2))
L = 2 * math.pi * 10

# reference values from tests/oracles.py (mpmath at 60 digits)
FB3_TOTAL_VOLUME = 789.19556801547552084
AP3_M2_VOLUME_1_13 = 2.1205752700971006352
AP4_M1_VOLUME_05_7 = 60.083584618266053472


def test_flat_volume_and_half_volume():
    assert slab_volume(FLAT2, SlabRegion.single(0.0, 2.5, L)) == pytest.approx(2 * math.pi * 2.5, rel=1e-14)
    for n in (2, 3, 5):
        M = WarpedProduct(n, ConstantProfile())
        half = slab_volume(M, SlabRegion.single(0.3, 0.3 + math.pi * 10, L))
        assert half == pytest.approx(0.5 * M.total_volume, rel=1e-13)


def test_volumes_against_frozen_high_precision_values():
    assert FB3.total_volume == pytest.approx(FB3_TOTAL_VOLUME, rel=1e-12)
    assert slab_volume(AP3, SlabRegion.single(1.0, 1.3, L)) == pytest.approx(AP3_M2_VOLUME_1_13, rel=1e-12)
    M4 = WarpedProduct(4, AnalyticPowerProfile(m=1))
    assert slab_volume(M4, SlabRegion.single(0.5, 7.0, L)) == pytest.approx(AP4_M1_VOLUME_05_7, rel=1e-12)


def test_volume_against_simpson_oracle():
    P = AnalyticPowerProfile(m=2)
    ref = 4 * math.pi * simpson(lambda r: (0.75 + 0.25 * np.sin((r - 1) / 10) ** 4) ** 2, 1.0, 1.3)
    assert abs(slab_volume(AP3, SlabRegion.single(1.0, 1.3, L)) - ref) < 1e-10
    phi = lambda r: FlatBumpProfile().phi(r)
    ref = 4 * math.pi * sum(simpson(lambda r: phi(r) ** 2, lo, hi, 40000)
                            for lo, hi in [(0.9, 0.875 + 0.0), (0.875, 1.0), (1.0, 1.125), (1.125, 4.0)] if hi > lo)
    got = slab_volume(FB3, SlabRegion.single(0.875, 4.0, L))
    assert abs(got - ref) < 1e-9


def test_volume_primitive_panels_consistent():
    prim = FB3.primitive
    for r in [0.0, 0.95, 1.0, 1.07, 30.0, 62.0, -3.0]:
        direct = 0.0 if r == 0 else math.copysign(1, r) * slab_volume(
            FB3, SlabRegion.single(min(0.0, r), max(0.0, r), L)) / (4 * math.pi)
        assert prim(r) == pytest.approx(direct, abs=1e-11)


def test_perimeter_examples():
    assert slab_perimeter(FLAT2, SlabRegion.single(1.0, 5.0, L)) == pytest.approx(4 * math.pi)
    M = WarpedProduct(2, FlatBumpProfile(k=8.0))
    assert slab_perimeter(M, SlabRegion.single(1.0, 20.0, L)) == pytest.approx(2 * math.pi * (2 - 1 / 8))
    E = SlabRegion.from_arcs([(1.0, 3.0), (10.0, 12.0)], L)
    assert slab_perimeter_excess(FB3, E) == pytest.approx(
        slab_perimeter(FB3, E) - 4 * 4 * math.pi * (7 / 8) ** 2, rel=1e-12)


def test_perimeter_gap_slope_two_for_quadratic_minimum():
    M = WarpedProduct(3, AnalyticPowerProfile(m=1))
    V = 0.5 * M.total_volume
    ds = np.geomspace(1e-3, 1e-2, 6)
    gaps = []
    for d in ds:
        b = solve_volume_endpoint(M, 1.0 + d, V)
        gaps.append(slab_perimeter_excess(M, SlabRegion.single(1.0 + d, b, M.period)))
    slope = np.polyfit(np.log(ds), np.log(gaps), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.01)


def test_slice_mean_curvature():
    assert slice_mean_curvature(FB3, 1.0) == 0.0
    assert slice_mean_curvature(WarpedProduct(4, ConstantProfile()), 3.3) == 0.0
    M = WarpedProduct(3, AnalyticPowerProfile(m=1))
    P = M.profile
    for d in (1e-3, 1e-2, 0.1):
        h = 1e-6
        fd = (P.phi(1 + d + h) - P.phi(1 + d - h)) / (2 * h)
        assert slice_mean_curvature(M, 1 + d) == pytest.approx(2 * fd / P.phi(1 + d), rel=1e-6)
        approx = 2 * 2 * 0.25 * d / 10**2 / 0.75
        assert slice_mean_curvature(M, 1 + d) == pytest.approx(approx, rel=2e-3)


def test_symmetric_difference_examples():
    E = SlabRegion.single(2.0, 9.0, L)
    assert symmetric_difference(FB3, E, E) == 0.0
    F = SlabRegion.single(20.0, 30.0, L)
    assert symmetric_difference(FB3, E, F) == pytest.approx(slab_volume(FB3, E) + slab_volume(FB3, F), rel=1e-13)
    # the sliding family: |Gamma_delta delta Gamma_0| = 2 sigma int_1^{1+delta} phi^{n-1}
    V = 0.5 * FB3.total_volume
    b0 = solve_volume_endpoint(FB3, 1.0, V)
    for d in (1e-3, 1e-2, 0.1):
        bd = solve_volume_endpoint(FB3, 1.0 + d, V)
        got = symmetric_difference(FB3, SlabRegion.single(1 + d, bd, L), SlabRegion.single(1, b0, L))
        ref = 2 * slab_volume(FB3, SlabRegion.single(1.0, 1.0 + d, L))
        assert got == pytest.approx(ref, rel=1e-11)
        assert got >= 2 * 4 * math.pi * (7 / 8) ** 2 * d * (1 - 1e-12)


arcs = st.tuples(st.floats(0, 62), st.floats(0.1, 20))


@settings(max_examples=40, deadline=None)
@given(a=arcs, b=arcs, c=arcs)
def test_symmetric_difference_is_a_metric(a, b, c):
    E, F, G = (SlabRegion.single(x, x + w, L) for x, w in (a, b, c))
    dEF = symmetric_difference(AP3, E, F)
    assert dEF == pytest.approx(symmetric_difference(AP3, F, E), abs=1e-10)
    assert dEF <= symmetric_difference(AP3, E, G) + symmetric_difference(AP3, G, F) + 1e-9


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-50, 100), frac=st.floats(0.01, 0.99), fam=st.integers(0, 2))
def test_volume_endpoint_round_trip(a, frac, fam):
    M = [FB3, AP3, WarpedProduct(4, AnalyticPowerProfile(m=1, eps=0.4))][fam]
    V = frac * M.total_volume
    b = solve_volume_endpoint(M, a, V)
    assert a < b < a + M.period
    assert abs(slab_volume(M, SlabRegion.single(a, b, M.period)) - V) <= 1e-12 * max(1.0, V / 100)
    # endpoint recovered from its own volume
    Vb = slab_volume(M, SlabRegion.single(a, b, M.period))
    assert solve_volume_endpoint(M, a, Vb) == pytest.approx(b, abs=1e-10)


def test_volume_endpoint_examples():
    M = WarpedProduct(3, ConstantProfile())
    assert solve_volume_endpoint(M, 0.0, 4 * math.pi * 2.75) == pytest.approx(2.75, abs=1e-13)
    V = 0.5 * FB3.total_volume
    rho0 = solve_volume_endpoint(FB3, 1.0, V)
    for d in (1e-3, 0.05):
        rho = solve_volume_endpoint(FB3, 1.0 + d, V)
        assert rho == pytest.approx(rho0 + slab_volume(FB3, SlabRegion.single(1, 1 + d, L)) / (4 * math.pi), abs=1e-11)
    with pytest.raises(ConfigError):
        solve_volume_endpoint(FB3, 0.0, FB3.total_volume)
    with pytest.raises(ConfigError):
        solve_volume_endpoint(FB3, 0.0, -1.0)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0, 62), w=st.floats(0.1, 30), s=st.floats(-100, 100))
def test_constant_profile_translation_invariance(a, w, s):
    M = WarpedProduct(3, ConstantProfile())
    E = SlabRegion.single(a, a + w, L)
    assert slab_volume(M, E.shifted(s)) == pytest.approx(slab_volume(M, E), rel=1e-12)
    assert slab_perimeter(M, E.shifted(s)) == slab_perimeter(M, E)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 40), w=st.floats(0.05, 30), fam=st.integers(0, 1))
def test_reflection_symmetry_about_the_minimum(a, w, fam):
    M = [FB3, AP3][fam]
    E = SlabRegion.single(a, a + w, L)
    Er = E.reflected(1.0)
    assert slab_volume(M, Er) == pytest.approx(slab_volume(M, E), rel=1e-11)
    assert slab_perimeter(M, Er) == pytest.approx(slab_perimeter(M, E), rel=1e-13)


def test_flat_bump_calibration_on_grid():
    V = 0.5 * FB3.total_volume
    best = slab_perimeter(FB3, SlabRegion.single(1.0, solve_volume_endpoint(FB3, 1.0, V), L))
    for t in np.linspace(1.3, 1.0 + L - 0.3, 120):
        b = solve_volume_endpoint(FB3, t, V)
        if min(abs((b - 1.0) % L), L - abs((b - 1.0) % L)) < 1e-6:
            continue
        assert slab_perimeter(FB3, SlabRegion.single(t, b, L)) > best


def test_slab_region_canonical_form():
    E = SlabRegion.from_arcs([(70.0, 72.0), (3.0, 4.0), (3.5, 5.0)], L)
    np.testing.assert_allclose(E.arcs, [(3.0, 5.0), (70.0 - L, 72.0 - L)], atol=1e-13)
    assert all(0 <= a < L for a, _ in E.arcs)
    assert E.length == pytest.approx(4.0)
    # an arc crossing the seam merges with one starting just after it
    W = SlabRegion.from_arcs([(60.0, 64.0), (1.0, 2.0)], L)
    assert len(W.arcs) == 1 and W.length == pytest.approx(2.0 + L - 60.0)
    C = E.complement()
    np.testing.assert_allclose(C.complement().arcs, E.arcs, atol=1e-13)
    assert E.length + C.length == pytest.approx(L)
    with pytest.raises(ConfigError):
        SlabRegion.from_arcs([], L)
    with pytest.raises(ConfigError):
        SlabRegion.single(2.0, 1.0, L)
    with pytest.raises(ConfigError):
        SlabRegion.single(0.0, L + 1.0, L)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0, 62), w=st.floats(0.1, 60))
def test_complement_volume_additivity(a, w):
    assume(w < L - 0.1)
    E = SlabRegion.single(a, a + w, L)
    assert slab_volume(AP3, E) + slab_volume(AP3, E.complement()) == pytest.approx(AP3.total_volume, rel=1e-12)
    assert symmetric_difference(AP3, E, E.complement()) == pytest.approx(AP3.total_volume, rel=1e-12)


@pytest.mark.parametrize("n", range(2, 8))
def test_quadrature_grid_weights(n):
    for q in (16, 48, 101):
        g = QuadratureGrid.build(n, q)
        assert np.all(g.weights > 0)
        assert abs(g.weights.sum() - sphere_area(n - 1)) < 1e-13


def test_manifold_validation():
    with pytest.raises(ConfigError):
        WarpedProduct(8, ConstantProfile())
    with pytest.raises(ConfigError):
        WarpedProduct(1, ConstantProfile())
    M = WarpedProduct.from_dict({"n": 3, "family": "flat_bump", "k": 8.0, "R": 10.0})
    assert M == FB3
    assert WarpedProduct.from_dict(M.to_dict()) == M
