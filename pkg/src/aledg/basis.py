"""Reference-triangle Lagrange bases and quadrature rules.

The reference triangle has vertices (0, 0), (1, 0), (0, 1). Edge rules live
on the unit interval [0, 1].
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
import scipy.linalg as sla
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 4
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _monomial_exponents(p):
    return [(i, k - i) for k in range(p + 1) for i in range(k, -1, -1)]


def lagrange_nodes(p):
    """Equispaced nodes ordered vertices, edge interiors, then cell interior.

    Local edge k runs from vertex k to vertex (k + 1) % 3.
    """
    nodes = [tuple(v) for v in REF_VERTICES]
    for k in range(3):
        a, b = REF_VERTICES[k], REF_VERTICES[(k + 1) % 3]
        for i in range(1, p):
            nodes.append(tuple(a + (b - a) * i / p))
    for j in range(1, p):
        for i in range(1, p - j):
            nodes.append((i / p, j / p))
    return np.array(nodes)


@dataclass(frozen=True)
class ReferenceBasis:
    degree: int
    nodes: np.ndarray
    exponents: tuple
    coeffs: np.ndarray  # monomial -> nodal change of basis, shape (m, m)

    @property
    def size(self):
        return len(self.exponents)

    def _monomials(self, xi, dx, dy):
        xi = np.asarray(xi, dtype=float)
        x, y = xi[..., 0], xi[..., 1]
        out = np.zeros(xi.shape[:-1] + (self.size,))
        for col, (a, b) in enumerate(self.exponents):
            if a < dx or b < dy:
                continue
            fa = math.perm(a, dx)
            fb = math.perm(b, dy)
            out[..., col] = fa * fb * x ** (a - dx) * y ** (b - dy)
        return out

    def eval(self, xi):
        """Basis values at reference points, shape (..., m)."""
        return self._monomials(xi, 0, 0) @ self.coeffs

    def grad(self, xi):
        """Reference gradients, shape (..., m, 2)."""
        gx = self._monomials(xi, 1, 0) @ self.coeffs
        gy = self._monomials(xi, 0, 1) @ self.coeffs
        return np.stack([gx, gy], axis=-1)

    def hessian(self, xi):
        """Reference Hessians, shape (..., m, 2, 2)."""
        hxx = self._monomials(xi, 2, 0) @ self.coeffs
        hxy = self._monomials(xi, 1, 1) @ self.coeffs
        hyy = self._monomials(xi, 0, 2) @ self.coeffs
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


@lru_cache(maxsize=None)
def make_basis(p):
    if not 1 <= p <= MAX_DEGREE:
        raise ValueError(f"polynomial degree must lie in [1, {MAX_DEGREE}], got {p}")
    nodes = lagrange_nodes(p)
    exps = tuple(_monomial_exponents(p))
    vander = np.stack([nodes[:, 0] ** a * nodes[:, 1] ** b for a, b in exps], axis=1)
    coeffs = np.linalg.inv(vander)
    return ReferenceBasis(degree=p, nodes=nodes, exponents=exps, coeffs=coeffs)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness: int

    def integrate(self, values):
        return np.tensordot(values, self.weights, axes=([-1], [0]))


@lru_cache(maxsize=None)
def make_edge_rule(exactness):
    """Gauss-Legendre rule on [0, 1]; points shape (q,)."""
    if exactness < 0 or exactness > 40:
        raise ValueError(f"unsupported edge exactness {exactness}")
    k = exactness // 2 + 1
    x, w = roots_legendre(k)
    return QuadratureRule(points=0.5 * (x + 1.0), weights=0.5 * w, exactness=exactness)


@lru_cache(maxsize=None)
def make_volume_rule(exactness):
    """Collapsed (conical product) Gauss rule on the reference triangle.

    Gauss-Legendre in the free direction, Gauss-Jacobi(1, 0) in the collapsed
    one. All weights are positive and all points are interior.
    """
    if exactness < 0 or exactness > 40:
        raise ValueError(f"unsupported volume exactness {exactness}")
    k = exactness // 2 + 1
    a, wa = roots_legendre(k)
    b, wb = roots_jacobi(k, 1.0, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    x = 0.25 * (1.0 + A) * (1.0 - B)
    y = 0.5 * (1.0 + B)
    w = WA * WB / 8.0
    pts = np.stack([x.ravel(), y.ravel()], axis=1)
    return QuadratureRule(points=pts, weights=w.ravel(), exactness=exactness)


def default_exactness(p, geometry_allowance=4):
    return 2 * p + geometry_allowance


def _triangle_matrices(p, verts, exactness=None):
    """Physical mass, stiffness and boundary-mass matrices of one triangle."""
    basis = make_basis(p)
    q = exactness if exactness is not None else 2 * p + 2
    vrule, erule = make_volume_rule(q), make_edge_rule(q)
    verts = np.asarray(verts, dtype=float)
    B = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    det = abs(np.linalg.det(B))
    binv = np.linalg.inv(B)
    phi = basis.eval(vrule.points)
    dphi = basis.grad(vrule.points) @ binv
    mass = det * np.einsum("q,qi,qj->ij", vrule.weights, phi, phi)
    stiff = det * np.einsum("q,qid,qjd->ij", vrule.weights, dphi, dphi)
    bmass = np.zeros_like(mass)
    for k in range(3):
        a, b = REF_VERTICES[k], REF_VERTICES[(k + 1) % 3]
        xi = a + erule.points[:, None] * (b - a)
        length = np.linalg.norm(verts[(k + 1) % 3] - verts[k])
        ph = basis.eval(xi)
        bmass += length * np.einsum("q,qi,qj->ij", erule.weights, ph, ph)
    diam = max(np.linalg.norm(verts[i] - verts[j]) for i in range(3) for j in range(i))
    return mass, stiff, bmass, diam


def trace_constant(p, verts=REF_VERTICES):
    """Smallest C_T with ||v||^2_{dK} <= C_T h_K^{-1} ||v||^2_K on degree-p v.

    Computed as the top generalized eigenvalue of (boundary mass, mass).
    """
    mass, _, bmass, diam = _triangle_matrices(p, verts)
    lam = sla.eigh(bmass, mass, eigvals_only=True)
    return float(lam[-1] * diam)


def inverse_constant(p, verts=REF_VERTICES):
    """Smallest C_I with ||grad v||_K <= C_I h_K^{-1} ||v||_K on degree-p v."""
    mass, stiff, _, diam = _triangle_matrices(p, verts)
    lam = sla.eigh(stiff, mass, eigvals_only=True)
    return float(math.sqrt(lam[-1]) * diam)


def sampled_trace_constant(p, n_samples=2000, seed=0, verts=REF_VERTICES):
    """Rayleigh-quotient sweep over random polynomials (lower estimate of C_T)."""
    mass, _, bmass, diam = _triangle_matrices(p, verts)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((n_samples, mass.shape[0]))
    num = np.einsum("si,ij,sj->s", c, bmass, c)
    den = np.einsum("si,ij,sj->s", c, mass, c)
    return float(np.max(num / den) * diam)


def default_penalty(p):
    return max(10.0, 2.0 * trace_constant(p))
