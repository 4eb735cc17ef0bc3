"""Time-dependent DG forms on the reference mesh.

Everything is evaluated matrix-free from samples at quadrature points; the
result of ``apply_*(u)`` is the vector of integrals against every basis test
function, shape (n_elements, m). Only the mass blocks are materialized.

Jumps use the left element's normal: for an edge with left element L and
right element R, ``[[v]] = (v_L - v_R) n`` and ``v_R = 0`` on the boundary.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .flowmap import geometric_factors
from .mesh import DIRICHLET, NEUMANN


class NonSPDError(np.linalg.LinAlgError):
    pass


@dataclass
class Frame:
    """Geometric factors split into volume (K, Qv, ...) and edge (E, Qe, ...) parts."""

    t: float
    xv: np.ndarray
    Jv: np.ndarray
    Finv_v: np.ndarray
    wv: np.ndarray
    divw_v: np.ndarray
    xe: np.ndarray
    Je: np.ndarray
    Finv_e: np.ndarray
    we: np.ndarray
    divw_e: np.ndarray
    av: np.ndarray
    ae: np.ndarray

    @property
    def FinvT_v(self):
        return np.swapaxes(self.Finv_v, -1, -2)

    @property
    def FinvT_e(self):
        return np.swapaxes(self.Finv_e, -1, -2)


def make_frame(space, state, vel):
    g = geometric_factors(state, vel)
    sv = space.split_points
    (xv, xe), (Jv, Je), (Fv, Fe) = sv(g.x), sv(g.J), sv(g.Finv)
    (wv, we), (dv, de), (av, ae) = sv(g.w), sv(g.divw), sv(g.a)
    return Frame(t=g.t, xv=xv, Jv=Jv, Finv_v=Fv, wv=wv, divw_v=dv, xe=xe, Je=Je,
                 Finv_e=Fe, we=we, divw_e=de, av=av, ae=ae)


def _mv(A, x):
    return np.einsum("...ab,...b->...a", A, x)


def _dot(a, b):
    return np.einsum("...a,...a->...", a, b)


def _metric_normal(space, fr):
    """m = F^{-T} n at edge points (E, Qe, 2)."""
    return _mv(fr.FinvT_e, np.broadcast_to(space.normals[:, None, :], fr.xe.shape))


def _edge_to_elements(space, vl, vr):
    """Integrate edge samples against left/right traces and scatter to elements."""
    rl = np.einsum("eq,eq,eqi->ei", space.we, vl, space.phi_L)
    rr = np.einsum("eq,eq,eqi->ei", space.we, vr, space.phi_R)
    return space.scatter_edges(rl, rr)


def _penalized(space):
    return space.mesh.tags != NEUMANN


def projected_flux(space, c, fr):
    """Coefficients (K, m, 2) of Pi(J^{1/2} F^{-T} grad u), unweighted L2 in X."""
    g = np.sqrt(fr.Jv)[..., None] * _mv(fr.FinvT_v, space.grads(c))
    return space.project_reference(g)


def _flux_terms(space, c, fr, eps, theta):
    """Contribution of -p~_h(u, .): the averaged-flux and symmetrization terms."""
    if eps == 0.0:
        return np.zeros_like(c)
    mesh = space.mesh
    pen = _penalized(space)[:, None]
    m = _metric_normal(space, fr)
    sJ = np.sqrt(fr.Je)
    P = projected_flux(space, c, fr)
    PL = np.einsum("eqi,eia->eqa", space.phi_L, P[mesh.left])
    PR = np.einsum("eqi,eia->eqa", space.phi_R, P[np.where(space.has_right, mesh.right, 0)])
    inner = space.has_right[:, None, None]
    avg = np.where(inner, 0.5 * (PL + PR), PL)
    t1 = -eps * sJ * _dot(avg, m) * pen
    out = _edge_to_elements(space, t1, -t1)

    if theta != 0:
        uL, uR = space.edge_values(c)
        side = np.where(space.has_right, 0.5, 1.0)[:, None]
        T = (-eps * theta * sJ * (uL - uR) * pen * side)[..., None] * m
        DL = np.einsum("eq,eqj,eqa->eja", space.we, space.phi_L, T)
        DR = np.einsum("eq,eqj,eqa->eja", space.we, space.phi_R, T)
        D = np.zeros((space.n_elements, space.m, 2))
        np.add.at(D, mesh.left, DL)
        hr = space.has_right
        np.add.at(D, mesh.right[hr], DR[hr])
        # lift the edge functional through the (self-adjoint) projection
        lift = np.einsum("qi,ij,kja->kqa", space.phi, space.ref_mass_inv, D)
        vec = np.sqrt(fr.Jv)[..., None] * _mv(fr.Finv_v, lift)
        out += np.einsum("q,kqa,kqia->ki", space.vrule.weights, vec, space.dphi)
    return out


def apply_jh(space, c, fr, alpha):
    """j_h(u, .) = sum over interior and Dirichlet edges of (alpha/h_E) int J F^{-T}[[u]].F^{-T}[[v]]."""
    uL, uR = space.edge_values(c)
    m = _metric_normal(space, fr)
    coef = (alpha / space.h_edge)[:, None] * fr.Je * _dot(m, m) * _penalized(space)[:, None]
    val = coef * (uL - uR)
    return _edge_to_elements(space, val, -val)


def _volume_diffusion(space, c, fr, eps):
    if eps == 0.0:
        return np.zeros_like(c)
    gx = _mv(fr.FinvT_v, space.grads(c))
    q = eps * fr.Jv[..., None] * _mv(fr.Finv_v, gx)
    return np.einsum("kq,kqa,kqia->ki", space.wv, q, space.dphi)


def _volume_scalar(space, s):
    return np.einsum("kq,kq,qi->ki", space.wv, s, space.phi)


def _upwind(space, c, fr):
    uL, uR = space.edge_values(c)
    wdm = _dot(fr.we, _metric_normal(space, fr))
    val = -fr.Je * wdm * (uL - uR)
    vl = np.where(wdm < 0, val, 0.0)
    vr = np.where(wdm > 0, val, 0.0)
    return _edge_to_elements(space, vl, vr)


def apply_ah(space, c, fr, eps, theta, alpha, gamma0=0.0):
    """Vector of a_h(u, phi_i) for coefficient array c (K, m)."""
    if alpha <= 0:
        raise ValueError(f"penalty alpha must be positive, got {alpha}")
    if c.shape != (space.n_elements, space.m):
        raise ValueError(f"coefficient shape {c.shape} does not match the space")
    uq = space.values(c)
    gx = _mv(fr.FinvT_v, space.grads(c))
    out = _volume_diffusion(space, c, fr, eps)
    out += _volume_scalar(space, fr.Jv * _dot(fr.wv, gx) + gamma0 * fr.Jv * uq)
    out += _flux_terms(space, c, fr, eps, theta)
    out += eps * apply_jh(space, c, fr, alpha)
    out += _upwind(space, c, fr)
    return out


def apply_dh(space, c, fr, eps, gamma0=0.0):
    uq = space.values(c)
    out = _volume_diffusion(space, c, fr, eps)
    out += _volume_scalar(space, fr.Jv * uq * (gamma0 - fr.divw_v))
    return out


def apply_fh(space, c, fr):
    """-int J u w.F^{-T} grad v plus outflow terms int_{dK_out} J w.F^{-T}[[v]] u_K."""
    uq = space.values(c)
    vec = fr.Jv[..., None] * uq[..., None] * _mv(fr.Finv_v, fr.wv)
    out = -np.einsum("kq,kqa,kqia->ki", space.wv, vec, space.dphi)
    uL, uR = space.edge_values(c)
    wdm = _dot(fr.we, _metric_normal(space, fr))
    val = fr.Je * wdm * np.where(wdm > 0, uL, uR)
    return out + _edge_to_elements(space, val, -val)


def apply_atilde(space, c, fr, eps, alpha, gamma0=0.0):
    return apply_dh(space, c, fr, eps, gamma0) + apply_fh(space, c, fr) \
        + eps * apply_jh(space, c, fr, alpha)


def apply_ptilde(space, c, fr, eps, theta):
    return -_flux_terms(space, c, fr, eps, theta)


def form_value(apply_fn, space, u, v, *args, **kw):
    """Bilinear form value b(u, v) from its operator form apply_fn(space, u, ...)."""
    return float(np.sum(apply_fn(space, u, *args, **kw) * v))


def assemble_mass(space, fr):
    """Per-element blocks int J phi_i phi_j, shape (K, m, m)."""
    if np.any(fr.Jv <= 0):
        raise NonSPDError("J <= 0 at a volume quadrature point")
    return np.einsum("kq,kq,qi,qj->kij", space.wv, fr.Jv, space.phi, space.phi)


def solve_mass(M, r):
    """Solve the block-diagonal system M x = r by per-element Cholesky."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NonSPDError("mass block is not positive definite") from exc
    y = np.linalg.solve(L, r[..., None])
    return np.linalg.solve(np.swapaxes(L, 1, 2), y)[..., 0]


@dataclass(frozen=True)
class BoundaryData:
    """Source f(t, x), Neumann data u_N(t, x) and initial value u0(x); u_D = 0."""

    source: object = None
    neumann: object = None
    initial: object = None


def assemble_lh(space, fr, data):
    out = np.zeros((space.n_elements, space.m))
    if data.source is not None:
        f = data.source(fr.t, fr.xv.reshape(-1, 2)).reshape(fr.Jv.shape)
        out += _volume_scalar(space, fr.Jv * f)
    neu = space.mesh.tags == NEUMANN
    if data.neumann is not None and np.any(neu):
        gN = data.neumann(fr.t, fr.xe.reshape(-1, 2)).reshape(fr.Je.shape)
        scale = np.linalg.norm(_metric_normal(space, fr), axis=-1)
        val = np.where(neu[:, None], fr.Je * gN * scale, 0.0)
        out += _edge_to_elements(space, val, np.zeros_like(val))
    return out


def semidiscrete_residual(space, c, fr, data, eps, theta, alpha, gamma0=0.0):
    """r = l_h - a_h(u, .), the right-hand side of M du/dt = r."""
    return assemble_lh(space, fr, data) - apply_ah(space, c, fr, eps, theta, alpha, gamma0)


def project_l2(space, samples):
    """Elementwise L2 projection of volume-point samples (K, Qv[, d])."""
    return space.project_reference(samples)


def weighted_projection(space, samples, fr):
    """J-weighted projection: int_K J (v - P v) phi_i = 0 for all i."""
    M = assemble_mass(space, fr)
    rhs = np.einsum("kq,kq,kq,qi->ki", space.wv, fr.Jv, samples, space.phi)
    return solve_mass(M, rhs)


def node_groups(space, decimals=10):
    """Group index of every (element, local node) by reference position."""
    X = space.node_coordinates().reshape(-1, 2)
    _, inv = np.unique(np.round(X, decimals), axis=0, return_inverse=True)
    return inv.reshape(space.n_elements, space.m)


def dirichlet_groups(space, groups):
    p = space.p
    mesh = space.mesh
    hit = np.zeros(groups.max() + 1, dtype=bool)
    for e in np.flatnonzero(mesh.tags == DIRICHLET):
        k, loc = mesh.left[e], mesh.left_local[e]
        local = [loc, (loc + 1) % 3] + [3 + loc * (p - 1) + i for i in range(p - 1)]
        hit[groups[k, local]] = True
    return hit


def averaging_operator(space, c):
    """Nodal average onto the continuous subspace with zero Dirichlet trace."""
    groups = node_groups(space)
    g = groups.ravel()
    n = g.max() + 1
    mean = np.bincount(g, weights=c.ravel(), minlength=n) / np.bincount(g, minlength=n)
    mean[dirichlet_groups(space, groups)] = 0.0
    return mean[groups]


def energy_norm_sq(space, c, fr, eps, alpha, beta_min=0.0, gamma0=0.0):
    """|||v|||^2 = sum_K [eps |v|_U^2 + int beta J v^2] + eps j_h(v, v), beta floored."""
    gx = _mv(fr.FinvT_v, space.grads(c))
    vq = space.values(c)
    beta = np.maximum(gamma0 - 0.5 * fr.divw_v, beta_min)
    vol = np.sum(space.wv * fr.Jv * (eps * _dot(gx, gx) + beta * vq * vq))
    return float(vol + eps * np.sum(apply_jh(space, c, fr, alpha) * c))


def h_norm_sq(space, c, fr):
    vq = space.values(c)
    return float(np.sum(space.wv * fr.Jv * vq * vq))


def u_seminorm_sq(space, c, fr):
    gx = _mv(fr.FinvT_v, space.grads(c))
    return float(np.sum(space.wv * fr.Jv * _dot(gx, gx)))


def energy_matrix(space, fr, eps, alpha, beta_min=0.0, gamma0=0.0):
    """Sparse SPD matrix of |||.|||^2 over the global dof numbering k*m + i."""
    m, K = space.m, space.n_elements
    S = np.einsum("kqab,kqib->kqia", fr.FinvT_v, space.dphi)
    beta = np.maximum(gamma0 - 0.5 * fr.divw_v, beta_min)
    blocks = np.einsum("kq,kq,kqia,kqja->kij", space.wv, eps * fr.Jv, S, S)
    blocks += np.einsum("kq,kq,qi,qj->kij", space.wv, beta * fr.Jv, space.phi, space.phi)
    dof = np.arange(K * m).reshape(K, m)
    rows = [np.repeat(dof, m, axis=1).ravel()]
    cols = [np.tile(dof, (1, m)).ravel()]
    vals = [blocks.ravel()]

    mvec = _metric_normal(space, fr)
    coef = eps * (alpha / space.h_edge)[:, None] * fr.Je * _dot(mvec, mvec) \
        * _penalized(space)[:, None] * space.we
    mesh = space.mesh
    right = np.where(space.has_right, mesh.right, 0)
    sides = [(space.phi_L, mesh.left, 1.0), (space.phi_R, right, -1.0)]
    for pa, ka, sa in sides:
        for pb, kb, sb in sides:
            blk = sa * sb * np.einsum("eq,eqi,eqj->eij", coef, pa, pb)
            rows.append(np.repeat(dof[ka], m, axis=1).ravel())
            cols.append(np.tile(dof[kb], (1, m)).ravel())
            vals.append(blk.ravel())
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(K * m, K * m)).tocsr()


def dual_norm(N, d):
    """sqrt(d^T N^{-1} d): norm of a functional d in the dual of (V_h, N)."""
    d = d.ravel()
    x = spla.spsolve(N.tocsc(), d)
    return float(np.sqrt(max(d @ x, 0.0)))
