"""Discontinuous piecewise-polynomial space on a static reference mesh.

Precomputes, once per (mesh, p, exactness), everything that does not depend
on time: reference quadrature points in every element and on every edge,
basis tables, affine reference-coordinate gradients and Hessians.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .basis import REF_VERTICES, default_exactness, make_basis, make_edge_rule, make_volume_rule


@dataclass
class DGField:
    """Coefficients (n_elements, m) of a function in a DGSpace."""

    space: "DGSpace"
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_elements, self.space.m):
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match space "
                             f"({self.space.n_elements}, {self.space.m})")

    def __add__(self, other):
        return DGField(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DGField(self.space, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return DGField(self.space, s * self.coeffs)

    __rmul__ = __mul__


class DGSpace:
    def __init__(self, mesh, p, exactness=None):
        self.mesh = mesh
        self.p = int(p)
        self.basis = make_basis(self.p)
        self.exactness = default_exactness(self.p) if exactness is None else int(exactness)
        self.vrule = make_volume_rule(self.exactness)
        self.erule = make_edge_rule(self.exactness)
        self.m = self.basis.size
        self.n_elements = mesh.n_elements
        self.n_edges = mesh.n_edges

        v = mesh.vertices[mesh.elements]
        self.origin = v[:, 0]
        self.B = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        self.detB = np.linalg.det(self.B)
        if np.any(self.detB <= 0):
            raise ValueError("elements must be counterclockwise and non-degenerate")
        self.Binv = np.linalg.inv(self.B)

        xi = self.vrule.points
        self.phi = self.basis.eval(xi)                       # (Qv, m)
        gref = self.basis.grad(xi)                           # (Qv, m, 2)
        self.dphi = np.einsum("qia,kab->kqib", gref, self.Binv)
        href = self.basis.hessian(xi)
        self.hphi = np.einsum("kca,qicd,kdb->kqiab", self.Binv, href, self.Binv)
        self.wv = self.vrule.weights[None, :] * self.detB[:, None]   # (K, Qv)
        self.xv = self.origin[:, None, :] + np.einsum("kab,qb->kqa", self.B, xi)
        self.ref_mass = np.einsum("q,qi,qj->ij", self.vrule.weights, self.phi, self.phi)
        self.ref_mass_inv = np.linalg.inv(self.ref_mass)

        s = self.erule.points
        self.we = self.erule.weights[None, :] * mesh.lengths[:, None]  # (E, Qe)
        a, b = mesh.vertices[mesh.edge_vertices[:, 0]], mesh.vertices[mesh.edge_vertices[:, 1]]
        self.xe = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        self.has_right = mesh.right >= 0
        self.phi_L, self.dphi_L, self.hphi_L = self._edge_tables(mesh.left, mesh.left_local, s)
        rgt = np.where(self.has_right, mesh.right, 0)
        rloc = np.where(self.has_right, mesh.right_local, 0)
        phi_R, dphi_R, hphi_R = self._edge_tables(rgt, rloc, 1.0 - s)
        mask = self.has_right[:, None, None]
        self.phi_R = phi_R * mask
        self.dphi_R = dphi_R * mask[..., None]
        self.hphi_R = hphi_R * mask[..., None, None]
        self.normals = mesh.normals
        self.h_edge = mesh.lengths
        self.n_volume_points = self.n_elements * len(self.vrule.weights)

    def _edge_tables(self, elems, local, s):
        a = REF_VERTICES[local]
        b = REF_VERTICES[(local + 1) % 3]
        xi = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]   # (E, Qe, 2)
        phi = self.basis.eval(xi)
        d = np.einsum("eqia,eab->eqib", self.basis.grad(xi), self.Binv[elems])
        Bi = self.Binv[elems]
        h = np.einsum("eca,eqicd,edb->eqiab", Bi, self.basis.hessian(xi), Bi)
        return phi, d, h

    @property
    def n_dofs(self):
        return self.n_elements * self.m

    @property
    def n_qv(self):
        return len(self.vrule.weights)

    @property
    def n_qe(self):
        return len(self.erule.weights)

    def all_points(self):
        """Tracked points: volume quadrature, edge quadrature, then Lagrange nodes."""
        return np.concatenate([self.xv.reshape(-1, 2), self.xe.reshape(-1, 2),
                               self.node_coordinates().reshape(-1, 2)])

    def node_part(self, arr):
        """Per-node slice (K, m, ...) of a per-point array."""
        start = self.n_volume_points + self.n_edges * self.n_qe
        return arr[start:].reshape((self.n_elements, self.m) + arr.shape[1:])

    def split_points(self, arr):
        """Split per-point array (N, ...) into volume (K, Qv, ...) and edge (E, Qe, ...)."""
        nv = self.n_volume_points
        vol = arr[:nv].reshape((self.n_elements, self.n_qv) + arr.shape[1:])
        edg = arr[nv:nv + self.n_edges * self.n_qe].reshape((self.n_edges, self.n_qe) + arr.shape[1:])
        return vol, edg

    def zeros(self):
        return DGField(self, np.zeros((self.n_elements, self.m)))

    def field(self, coeffs):
        return DGField(self, coeffs)

    # evaluation helpers on coefficient arrays (K, m)
    def values(self, c):
        return c @ self.phi.T

    def grads(self, c):
        return np.einsum("kqia,ki->kqa", self.dphi, c)

    def hessians(self, c):
        return np.einsum("kqiab,ki->kqab", self.hphi, c)

    def edge_values(self, c):
        """Traces (left, right) at edge points; right is 0 on boundary edges."""
        cl = c[self.mesh.left]
        cr = c[np.where(self.has_right, self.mesh.right, 0)]
        return (np.einsum("eqi,ei->eq", self.phi_L, cl),
                np.einsum("eqi,ei->eq", self.phi_R, cr))

    def edge_grads(self, c):
        cl = c[self.mesh.left]
        cr = c[np.where(self.has_right, self.mesh.right, 0)]
        return (np.einsum("eqia,ei->eqa", self.dphi_L, cl),
                np.einsum("eqia,ei->eqa", self.dphi_R, cr))

    def scatter_edges(self, rl, rr):
        """Accumulate per-edge test-function integrals (E, m) into (K, m)."""
        out = np.zeros((self.n_elements, self.m))
        np.add.at(out, self.mesh.left, rl)
        hr = self.has_right
        np.add.at(out, self.mesh.right[hr], rr[hr])
        return out

    def project_reference(self, samples):
        """Unweighted elementwise L2 projection of samples (K, Qv, ...) on the volume rule."""
        rhs = np.einsum("q,qi,kq...->ki...", self.vrule.weights, self.phi, samples)
        return np.einsum("ij,kj...->ki...", self.ref_mass_inv, rhs)

    def interpolate(self, func):
        """Nodal interpolant of func(x (N, 2)) -> (N,) at the Lagrange nodes."""
        return func(self.node_coordinates().reshape(-1, 2)).reshape(self.n_elements, self.m)

    def node_coordinates(self):
        return self.origin[:, None, :] + np.einsum("kab,ib->kia", self.B, self.basis.nodes)

    @cached_property
    def element_of_volume_point(self):
        return np.repeat(np.arange(self.n_elements), self.n_qv)
