"""Analytic velocity fields for the flow map and the advection term.

Fields are sums of separable polynomial products ``c * P(x) * Q(y)`` per
component, which gives exact spatial derivatives of any order.
"""
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.polynomial import Polynomial


@dataclass(frozen=True)
class PolyField:
    """2D vector field; ``terms[i]`` lists ``(coef, P, Q)`` for component i."""

    terms: tuple = ((), ())

    def __add__(self, other):
        return PolyField(tuple(a + b for a, b in zip(self.terms, other.terms)))

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, s):
        return PolyField(tuple(tuple((s * c, P, Q) for c, P, Q in comp) for comp in self.terms))

    def partial(self, i, a, b, x):
        """d^a/dx^a d^b/dy^b of component i at points x (N, 2)."""
        out = np.zeros(len(x))
        for c, P, Q in self.terms[i]:
            out += c * P.deriv(a)(x[:, 0]) * Q.deriv(b)(x[:, 1])
        return out

    def derivatives(self, x, order):
        """[values (N,2), jac (N,2,2), hess (N,2,2,2), ...] up to ``order``.

        ``jac[:, i, j] = dV_i/dx_j``; higher tensors append one index per
        derivative.
        """
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        n = len(x)
        out = []
        for k in range(order + 1):
            arr = np.zeros((n, 2) + (2,) * k)
            cache = {}
            for i in range(2):
                for idx in product(range(2), repeat=k):
                    b = sum(idx)
                    key = (i, k - b, b)
                    if key not in cache:
                        cache[key] = self.partial(i, k - b, b, x)
                    arr[(slice(None), i) + idx] = cache[key]
            out.append(arr)
        return out

    def __call__(self, x):
        return self.derivatives(x, 0)[0]


def _poly(*c):
    return Polynomial(np.asarray(c, dtype=float))


ZERO = PolyField(((), ()))
ONE = _poly(1.0)
X = _poly(0.0, 1.0)


def constant_field(cx, cy):
    return PolyField((((cx, ONE, ONE),), ((cy, ONE, ONE),)))


def linear_field(matrix):
    """Field x -> A x for a 2x2 matrix A."""
    A = np.asarray(matrix, dtype=float)
    return PolyField(tuple(((A[i, 0], X, ONE), (A[i, 1], ONE, X)) for i in range(2)))


def bump():
    """h(s) = (s (1 - s))^2."""
    return _poly(0.0, 0.0, 1.0, -2.0, 1.0)


def layer_mesh_velocity(amplitude=2.0 ** 16, variant="literal"):
    """Mesh velocity of the boundary-layer experiment.

    ``literal``: amplitude * (h(y) h'(x), -h(x) h'(y)).
    ``stream_function``: amplitude * (h(x) h'(y), -h'(x) h(y)), the curl of
    amplitude * h(x) h(y), which is divergence free.
    """
    h = bump()
    dh = h.deriv()
    if variant == "literal":
        terms = (((amplitude, dh, h),), ((-amplitude, h, dh),))
    elif variant == "stream_function":
        terms = (((amplitude, h, dh),), ((-amplitude, dh, h),))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return PolyField(terms)


@dataclass(frozen=True)
class VelocityModel:
    """Flow velocity V and mesh velocity Vt (steady), plus reaction shift."""

    flow: PolyField
    mesh: PolyField = field(default=ZERO)
    gamma0: float = 0.0

    def mesh_velocity(self, t, x, order=1):
        return self.mesh.derivatives(x, order)

    def flow_velocity(self, t, x):
        v, dv = self.flow.derivatives(x, 1)
        return v, dv

    def remaining(self, t, x):
        """(V - Vt, div(V - Vt)) at points x."""
        v, dv = self.flow.derivatives(x, 1)
        m, dm = self.mesh.derivatives(x, 1)
        w = v - m
        divw = np.trace(dv - dm, axis1=1, axis2=2)
        return w, divw

    def beta(self, t, x):
        _, divw = self.remaining(t, x)
        return self.gamma0 - 0.5 * divw

    def frozen(self):
        """Same flow, zero mesh velocity (static-mesh counterpart)."""
        return VelocityModel(flow=self.flow, mesh=ZERO, gamma0=self.gamma0)

    def boundary_normal_defect(self, n_samples=200):
        """max |Vt . n| over equispaced points on the unit-square boundary."""
        s = np.linspace(0.0, 1.0, n_samples)
        z, o = np.zeros_like(s), np.ones_like(s)
        sides = [(np.stack([s, z], 1), (0.0, -1.0)), (np.stack([o, s], 1), (1.0, 0.0)),
                 (np.stack([s, o], 1), (0.0, 1.0)), (np.stack([z, s], 1), (-1.0, 0.0))]
        worst = 0.0
        for pts, nrm in sides:
            v = self.mesh(pts)
            worst = max(worst, float(np.max(np.abs(v @ np.asarray(nrm)))))
        return worst


def sup_grid(n=101):
    g = np.linspace(0.0, 1.0, n)
    X_, Y_ = np.meshgrid(g, g, indexing="ij")
    return np.stack([X_.ravel(), Y_.ravel()], axis=1)
