import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carnot_tame.calculus import (
    DerivativeBundle,
    bundle_add,
    bundle_product,
    chain_rule_bundle,
    default_step,
    euclidean_directional,
    fd_bracket,
    fd_bundle,
    fd_directional,
    fd_sublaplacian,
    frame_at,
    radial_bundle,
)
from carnot_tame.errors import EvaluationFailure, OuterSingularity
from carnot_tame.group import GroupPoint, generalized_heisenberg, heisenberg, point, random_points
from carnot_tame.outer import Power


def poly(p: GroupPoint):
    """A polynomial whose derivatives are known in closed form on Heisenberg."""
    return p.x[..., 0] ** 2 * p.z[..., 0] + p.x[..., 1]


def test_frame_on_heisenberg():
    g = heisenberg()
    F = frame_at(g, point([2.0, 3.0], [0.0])).coefficients
    # X_1 = d/dx1 + x2/2 d/dz, X_2 = d/dx2 - x1/2 d/dz
    assert np.allclose(F, [[1.0, 0.0, 1.5], [0.0, 1.0, -1.0]])


def test_fd_gradient_matches_closed_form_polynomial():
    g = heisenberg()
    p = random_points(g, 50, np.random.default_rng(0))
    x1, x2, z = p.x[:, 0], p.x[:, 1], p.z[:, 0]
    g1 = 2 * x1 * z + 0.5 * x2 * x1 ** 2
    g2 = 1.0 - 0.5 * x1 ** 3
    fd = fd_bundle(g, poly, p, 1e-3)
    assert np.allclose(fd.grad[:, 0], g1, atol=1e-6)
    assert np.allclose(fd.grad[:, 1], g2, atol=1e-6)
    # X_1 g1 = 2z + x1 x2 + (x2/2)(2 x1) and X_2 g2 = 0
    assert np.allclose(fd.laplacian, 2 * z + 2 * x1 * x2, atol=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1))
def test_flow_derivative_matches_frame_matrix(a, b, c, i):
    g = heisenberg()
    p = point([a, b], [c])
    flow = fd_directional(g, poly, p, i, 1e-4)
    frame = euclidean_directional(g, poly, p, i, 1e-5)
    assert np.allclose(flow, frame, atol=1e-6)


def test_bracket_on_generalized_heisenberg():
    L = [0.7, -1.2]
    g = generalized_heisenberg(L)
    p = random_points(g, 5, np.random.default_rng(1))

    def z1(q):
        return q.z[..., 0]

    n = len(L)
    for j in range(n):
        br = fd_bracket(g, z1, p, j, j + n, h=1e-3)
        assert np.allclose(br, 2 * L[j], atol=1e-6)
    assert np.allclose(fd_bracket(g, z1, p, 0, 1, h=1e-3), 0.0, atol=1e-6)


def test_sublaplacian_second_order_convergence():
    g = heisenberg()
    p = point([0.4, -0.3], [0.2])

    def f(q):
        return np.exp(-np.sum(q.x ** 2, -1) - q.z[..., 0] ** 2)

    ref = fd_sublaplacian(g, f, p, 1e-4)
    e1 = abs(fd_sublaplacian(g, f, p, 0.02) - ref)
    e2 = abs(fd_sublaplacian(g, f, p, 0.01) - ref)
    assert 3.5 <= e1 / e2 <= 4.5


def test_singular_guard():
    g = heisenberg()
    with pytest.raises(EvaluationFailure):
        fd_bundle(g, poly, point([1e-6, 0.0], [1.0]), singular_x=True)


def test_nonfinite_field_raises():
    g = heisenberg()
    with pytest.raises(EvaluationFailure):
        fd_directional(g, lambda q: np.full(q.batch_shape, np.nan), point([1.0, 0.0], [0.0]), 0)


def test_default_step_scales_with_point():
    p = GroupPoint(np.array([[0.0, 0.0], [300.0, 400.0]]), np.array([[0.0], [0.0]]))
    assert np.allclose(default_step(p), [1e-4, 5e-2])


def test_bundle_algebra_product_rule():
    g = heisenberg()
    p = random_points(g, 20, np.random.default_rng(2))
    r2 = np.sum(p.x ** 2, -1)
    a = radial_bundle(p.x, r2 ** 0.5, np.ones_like(r2), np.zeros_like(r2), g.m)
    prod = bundle_product(a, a)
    # |x|^2 has gradient 2x and sub-Laplacian 2n
    assert np.allclose(prod.value, r2)
    assert np.allclose(prod.grad, 2 * p.x)
    assert np.allclose(prod.laplacian, 4.0)
    s = bundle_add(prod, prod)
    assert np.allclose(s.laplacian, 8.0)


def test_chain_rule_against_fd():
    g = heisenberg()
    p = random_points(g, 20, np.random.default_rng(3))
    r2 = np.sum(p.x ** 2, -1)
    inner = DerivativeBundle(r2 + 1.0, 2 * p.x, np.full_like(r2, 4.0))
    out = chain_rule_bundle(inner, Power(3.0))
    fd = fd_bundle(g, lambda q: (np.sum(q.x ** 2, -1) + 1.0) ** 3, p, 1e-4)
    assert np.allclose(out.grad, fd.grad, rtol=1e-6, atol=1e-6)
    assert np.allclose(out.laplacian, fd.laplacian, rtol=1e-5, atol=1e-4)


def test_chain_rule_outer_singularity():
    inner = DerivativeBundle(np.array([0.0]), np.array([[1.0, 0.0]]), np.array([0.0]))
    with pytest.raises(OuterSingularity):
        chain_rule_bundle(inner, Power(1.5))
