import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from aledg.basis import (REF_VERTICES, default_penalty, inverse_constant, make_basis,
                         make_edge_rule, make_volume_rule, sampled_trace_constant,
                         trace_constant)


def monomial_integral(a, b):
    # int over the reference triangle of x^a y^b = a! b! / (a + b + 2)!
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@settings(max_examples=60, deadline=None)
@given(q=st.integers(0, 12), data=st.data())
def test_volume_rule_exact_on_monomials(q, data):
    a = data.draw(st.integers(0, q))
    b = data.draw(st.integers(0, q - a))
    rule = make_volume_rule(q)
    x, y = rule.points.T
    assert rule.integrate(x ** a * y ** b) == pytest.approx(monomial_integral(a, b), rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(q=st.integers(0, 20), data=st.data())
def test_edge_rule_exact_on_monomials(q, data):
    a = data.draw(st.integers(0, q))
    rule = make_edge_rule(q)
    assert rule.integrate(rule.points ** a) == pytest.approx(1.0 / (a + 1), rel=1e-13)


@pytest.mark.parametrize("q", [0, 3, 8])
def test_volume_rule_points_interior_and_weights_positive(q):
    rule = make_volume_rule(q)
    x, y = rule.points.T
    assert np.all(rule.weights > 0)
    assert np.all((x > 0) & (y > 0) & (x + y < 1))


@pytest.mark.parametrize("q", [-1, 41])
def test_rule_exactness_out_of_range(q):
    with pytest.raises(ValueError):
        make_volume_rule(q)
    with pytest.raises(ValueError):
        make_edge_rule(q)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_lagrange_basis_is_nodal(p):
    basis = make_basis(p)
    assert basis.size == (p + 1) * (p + 2) // 2
    np.testing.assert_allclose(basis.eval(basis.nodes), np.eye(basis.size), atol=1e-12)
    np.testing.assert_allclose(basis.nodes[:3], REF_VERTICES)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(1, 4), x=st.floats(0, 1), y=st.floats(0, 1))
def test_partition_of_unity(p, x, y):
    basis = make_basis(p)
    xi = np.array([[x, y]])
    assert basis.eval(xi).sum() == pytest.approx(1.0, abs=1e-11)
    np.testing.assert_allclose(basis.grad(xi).sum(axis=1), 0.0, atol=1e-9)
    np.testing.assert_allclose(basis.hessian(xi).sum(axis=1), 0.0, atol=1e-7)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_basis_gradient_matches_finite_difference(p, rng):
    basis = make_basis(p)
    xi = rng.uniform(0.1, 0.4, size=(5, 2))
    h = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        fd = (basis.eval(xi + e) - basis.eval(xi - e)) / (2 * h)
        np.testing.assert_allclose(basis.grad(xi)[..., d], fd, atol=1e-7)
        fd2 = (basis.grad(xi + e) - basis.grad(xi - e)) / (2 * h)
        np.testing.assert_allclose(basis.hessian(xi)[..., d], fd2, atol=1e-6)


def p1_closed_form_matrices(verts):
    # P1 mass |K|/12 (1 + delta_ij), edge mass L/6 (1 + delta_ij), gradients from barycentrics
    verts = np.asarray(verts, float)
    B = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    area = 0.5 * abs(np.linalg.det(B))
    M = area / 12 * (np.ones((3, 3)) + np.eye(3))
    Bd = np.zeros((3, 3))
    for k in range(3):
        i, j = k, (k + 1) % 3
        L = np.linalg.norm(verts[j] - verts[i])
        Bd[np.ix_([i, j], [i, j])] += L / 6 * np.array([[2.0, 1.0], [1.0, 2.0]])
    G = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]) @ np.linalg.inv(B)
    S = area * G @ G.T
    diam = max(np.linalg.norm(verts[i] - verts[j]) for i in range(3) for j in range(i))
    return M, Bd, S, diam


@pytest.mark.parametrize("verts", [REF_VERTICES, [[0, 0], [2, 0.3], [0.4, 1.1]]])
def test_p1_constants_match_closed_form(verts):
    M, Bd, S, diam = p1_closed_form_matrices(verts)
    ct = sla.eigh(Bd, M, eigvals_only=True)[-1] * diam
    ci = math.sqrt(sla.eigh(S, M, eigvals_only=True)[-1]) * diam
    assert trace_constant(1, np.asarray(verts, float)) == pytest.approx(ct, rel=1e-12)
    assert inverse_constant(1, np.asarray(verts, float)) == pytest.approx(ci, rel=1e-12)


def test_trace_constants_frozen():
    # [DERIVED] generalized eigenvalues on the reference triangle, h_K = sqrt(2)
    assert trace_constant(1) == pytest.approx(19.59007074335516, rel=1e-12)
    assert trace_constant(2) == pytest.approx(35.535161137331585, rel=1e-12)
    # [DERIVED] p=1 inverse constant is 6 sqrt(2) on the reference triangle
    assert inverse_constant(1) == pytest.approx(6 * math.sqrt(2), rel=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_sampled_trace_constant_is_lower_estimate(p):
    exact = trace_constant(p)
    sampled = sampled_trace_constant(p, n_samples=5000)
    assert sampled <= exact * (1 + 1e-12)
    assert sampled >= 0.5 * exact


def test_trace_constant_scale_invariant():
    v = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])
    assert trace_constant(2, v) == pytest.approx(trace_constant(2), rel=1e-12)


@pytest.mark.parametrize("p", [1, 2])
def test_default_penalty(p):
    assert default_penalty(p) == max(10.0, 2.0 * trace_constant(p))
