import math

import numpy as np
import pytest
from numpy.polynomial import legendre

from oracles import fd_gradient, fd_hessian
from warpiso.errors import ConfigError, EmbeddingError
from warpiso.geometry import SlabRegion, WarpedProduct, slab_perimeter, slab_volume, solve_volume_endpoint
from warpiso.graph import (
    GraphPerturbation,
    area_gradient,
    area_hessian,
    first_variation_residual,
    graph_area,
    graph_area_excess,
    graph_slab_symmetric_difference,
    graph_symmetric_difference,
    graph_volume,
    graph_volume_excess,
    project_to_volume,
    random_perturbation,
    volume_gradient,
    volume_hessian,
)
from warpiso.profiles import AnalyticPowerProfile, ConstantProfile, FlatBumpProfile

FLAT2 = WarpedProduct(2, ConstantProfile())
AP3 = WarpedProduct(3, AnalyticPowerProfile(m=2))
AP2 = WarpedProduct(2, AnalyticPowerProfile(m=1))
FB3 = WarpedProduct(3, FlatBumpProfile(k=8.0))

# 4 * E(m = -0.04), the length of the graph r = 0.2 cos(theta) over the unit circle (mpmath)
ELLIPSE_02 = 6.34555360774294753916


def _zonal(M, a, b, ca, cb, N=8):
    u = GraphPerturbation.zero(M, a, b, N)
    va, vb = np.zeros(N + 1), np.zeros(N + 1)
    va[: len(ca)], vb[: len(cb)] = ca, cb
    return u.with_vector(np.concatenate([va, vb]))


def _fourier(M, a, b, ca, cb, N=8):
    u = GraphPerturbation.zero(M, a, b, N)
    va, vb = np.zeros(2 * N + 1), np.zeros(2 * N + 1)
    va[: len(ca)], vb[: len(cb)] = ca, cb
    return u.with_vector(np.concatenate([va, vb]))


def test_zero_perturbation_reproduces_slab():
    for M, (a, b) in [(FLAT2, (0.0, 5.0)), (AP3, (1.0, 20.0)), (FB3, (0.9, 33.0))]:
        u = GraphPerturbation.zero(M, a, b)
        S = SlabRegion.single(a, b, M.period)
        assert graph_area_excess(M, u) == 0.0
        assert graph_area(M, u) == slab_perimeter(M, S)
        assert graph_volume(M, u) == pytest.approx(slab_volume(M, S), rel=1e-14)


def test_flat_circle_examples():
    u = _fourier(FLAT2, 0.0, 5.0, [0.0], [0.2])
    assert graph_area(FLAT2, u) == pytest.approx(4 * math.pi, rel=1e-14)
    assert graph_volume(FLAT2, u) == pytest.approx(2 * math.pi * 5.2, rel=1e-14)
    w = _fourier(FLAT2, 0.0, 5.0, [0.0], [0.0, 0.2])
    assert abs(graph_area(FLAT2, w) - (2 * math.pi + ELLIPSE_02)) < 1e-10
    # mean-zero displacement keeps the volume
    assert graph_volume(FLAT2, w) == pytest.approx(2 * math.pi * 5.0, rel=1e-14)


def test_volume_against_monte_carlo():
    M = AP3
    a, b = 1.0, 2.5
    ca, cb = [0.05, 0.1, -0.04], [-0.02, 0.0, 0.08, 0.03]
    u = _zonal(M, a, b, ca, cb)
    exact = graph_volume(M, u)
    rng = np.random.default_rng(7)
    lo, hi = a - 0.3, b + 0.3
    box = (hi - lo) * 2.0 * 2 * math.pi
    total, total2, count = 0.0, 0.0, 0
    for _ in range(8):
        r = rng.uniform(lo, hi, 500_000)
        x = rng.uniform(-1.0, 1.0, 500_000)
        inside = (r > a + legendre.legval(x, ca)) & (r < b + legendre.legval(x, cb))
        f = np.where(inside, M.profile.phi(r) ** 2, 0.0) * box
        total += f.sum()
        total2 += (f**2).sum()
        count += f.size
    mean = total / count
    sd = math.sqrt((total2 / count - mean**2) / count)
    assert abs(mean - exact) < 3 * sd


def test_gradients_against_finite_differences():
    rng = np.random.default_rng(11)
    for i in range(100):
        M = [AP3, AP2, FB3][i % 3]
        a = rng.uniform(0.5, 2.0)
        u = random_perturbation(M, a, a + rng.uniform(3.0, 20.0), rng, 0.1, N=6)
        d = rng.standard_normal(u.vector.size)
        d /= np.linalg.norm(d)
        h = 1e-5
        for f, grad in ((graph_area_excess, area_gradient), (graph_volume_excess, volume_gradient)):
            fd = (f(M, u.with_vector(u.vector + h * d)) - f(M, u.with_vector(u.vector - h * d))) / (2 * h)
            an = float(grad(M, u) @ d)
            assert an == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_hessians_against_finite_differences():
    rng = np.random.default_rng(3)
    for M in (AP3, AP2):
        u = random_perturbation(M, 1.0, 12.0, rng, 0.05, N=3)
        H = area_hessian(M, u)
        Hfd = fd_hessian(lambda c: graph_area_excess(M, u.with_vector(c)), u.vector)
        np.testing.assert_allclose(H, Hfd, atol=1e-6 * max(1.0, np.abs(H).max()))
        Hv = volume_hessian(M, u)
        Hvfd = fd_hessian(lambda c: graph_volume_excess(M, u.with_vector(c)), u.vector)
        np.testing.assert_allclose(Hv, Hvfd, atol=1e-6 * max(1.0, np.abs(Hv).max()))
        g = area_gradient(M, u)
        gfd = fd_gradient(lambda c: graph_area_excess(M, u.with_vector(c)), u.vector)
        np.testing.assert_allclose(g, gfd, atol=1e-7)


def test_first_variation_at_critical_slab():
    V = 0.5 * AP3.total_volume
    b = solve_volume_endpoint(AP3, 1.0, V)
    u = GraphPerturbation.zero(AP3, 1.0, b, 8)
    res, lam = first_variation_residual(AP3, u)
    assert np.max(np.abs(res)) < 1e-10
    assert abs(lam) < 1e-10
    rng = np.random.default_rng(5)
    gA = area_gradient(AP3, u)
    for _ in range(20):
        d = rng.standard_normal(u.vector.size)
        h = 1e-4
        fd = (graph_area_excess(AP3, u.with_vector(h * d)) - graph_area_excess(AP3, u.with_vector(-h * d))) / (2 * h)
        assert abs(fd - gA @ d) < 1e-7


def test_project_to_volume_contract():
    u = _fourier(FLAT2, 0.0, 5.0, [0.0], [0.1])
    v = project_to_volume(FLAT2, u, 2 * math.pi * 5.0)
    assert v.coeffs_a[0] == pytest.approx(0.05, abs=1e-13)
    assert v.coeffs_b[0] == pytest.approx(0.05, abs=1e-13)
    rng = np.random.default_rng(9)
    for M in (AP3, FB3, AP2):
        for _ in range(5):
            w = random_perturbation(M, 1.0, 15.0, rng, 0.1, N=6)
            target = slab_volume(M, w.base)
            p = project_to_volume(M, w, target)
            assert abs(graph_volume(M, p) - target) <= 1e-11
            # only the degree-zero coefficients move
            np.testing.assert_array_equal(p.coeffs_a[1:], w.coeffs_a[1:])
            np.testing.assert_array_equal(p.coeffs_b[1:], w.coeffs_b[1:])


def test_spectral_convergence_in_truncation_and_quadrature():
    u = _zonal(AP3, 1.0, 9.0, [0.01, 0.05, 0.0, -0.02], [0.0, -0.03, 0.04, 0.0, 0.01], N=8)
    v = _zonal(AP3, 1.0, 9.0, u.coeffs_a, u.coeffs_b, N=16)
    for f in (graph_area, graph_volume):
        assert abs(f(AP3, u) - f(AP3, v, Q=256)) < 1e-9
    w = _fourier(AP2, 1.0, 9.0, [0.0, 0.05, 0.02], [0.01, 0.0, 0.0, 0.03], N=8)
    x = _fourier(AP2, 1.0, 9.0, w.coeffs_a, w.coeffs_b, N=16)
    for f in (graph_area, graph_volume):
        assert abs(f(AP2, w) - f(AP2, x, Q=512)) < 1e-9


def test_symmetric_difference_for_one_signed_displacement():
    u = _zonal(AP3, 1.0, 9.0, [0.0], [0.05, 0.02])
    S = u.base
    # one-signed displacement: |E delta S| is the volume between the sheets
    ref = graph_volume_excess(AP3, u)
    assert graph_slab_symmetric_difference(AP3, u, S) == pytest.approx(ref, rel=1e-12)
    z = GraphPerturbation.zero(AP3, 1.0, 9.0, 8)
    assert graph_symmetric_difference(AP3, u, z) == pytest.approx(ref, rel=1e-12)
    assert graph_symmetric_difference(AP3, u, u) == 0.0


def test_embedding_error_and_validation():
    u = _zonal(FB3, 1.0, 9.0, [0.3], [0.0])
    with pytest.raises(EmbeddingError):
        graph_area(FB3, u)
    with pytest.raises(ConfigError):
        GraphPerturbation(0.0, 1.0, FLAT2.period, 2, np.zeros(4), np.zeros(4))
    with pytest.raises(ConfigError):
        GraphPerturbation(0.0, 1.0, AP3.period, 3, np.zeros(3), np.zeros(4))
    with pytest.raises(ConfigError):
        GraphPerturbation(0.0, 1.0, AP3.period, 3, [np.nan], [0.0])
    with pytest.raises(ConfigError):
        graph_symmetric_difference(AP3, u, GraphPerturbation.zero(AP3, 1.0, 9.0, 4))


def test_json_round_trip():
    rng = np.random.default_rng(1)
    for M in (AP3, AP2):
        u = random_perturbation(M, 1.0, 7.0, rng, 0.1, N=5)
        v = GraphPerturbation.from_json(u.to_json())
        np.testing.assert_array_equal(v.vector, u.vector)
        assert (v.a, v.b, v.n, v.period) == (u.a, u.b, u.n, u.period)
    d = u.to_dict()
    d["mode"] = "zonal"
    with pytest.raises(ConfigError):
        GraphPerturbation.from_dict(d)
    del d["coeffs_a"]
    with pytest.raises(ConfigError):
        GraphPerturbation.from_dict(d)
