"""Weighted residual indicators, space-time criteria and error norms."""
from dataclasses import dataclass, field
import io
import math

import numpy as np

from .forms import _dot, _metric_normal, _mv, energy_norm_sq, h_norm_sq
from .mesh import NEUMANN


@dataclass
class PatchWeights:
    """Normalized L1 / Linf patch norms of J, a, delta, M and the patch beta.

    ``*_e`` arrays are per edge (patch = its one or two elements), ``*_k``
    arrays per element (patch = elements sharing a vertex with it).
    """

    J1_e: np.ndarray
    Jinf_e: np.ndarray
    a1_e: np.ndarray
    ainf_e: np.ndarray
    dinf_e: np.ndarray
    Minf_e: np.ndarray
    beta_e: np.ndarray
    rho_e: np.ndarray
    J1_k: np.ndarray
    Jinf_k: np.ndarray
    a1_k: np.ndarray
    ainf_k: np.ndarray
    dinf_k: np.ndarray
    Minf_k: np.ndarray
    beta_k: np.ndarray
    rho_k: np.ndarray


def _patch_norms(g, space, indptr, members, area):
    """(L1 norm / |omega|, Linf norm) of |g| over each patch; g at volume points (K, Qv)."""
    elem_int = np.sum(space.wv * np.abs(g), axis=1)
    elem_max = np.max(np.abs(g), axis=1)
    starts = indptr[:-1]
    l1 = np.add.reduceat(elem_int[members], starts) / area
    linf = np.maximum.reduceat(elem_max[members], starts)
    return l1, linf


def _rho(ainf, h, Minf, beta, eps):
    first = ainf * h / math.sqrt(eps) if eps > 0 else np.full_like(h, np.inf)
    with np.errstate(divide="ignore"):
        second = np.where(beta > 0, Minf / np.where(beta > 0, beta, 1.0), np.inf)
    return np.minimum(first, second)


def compute_patch_weights(space, fr, patches, eps, gamma0=0.0, beta_min=0.0):
    mesh = space.mesh
    g_a, g_J = fr.av, fr.Jv
    g_d = _dot(fr.wv, fr.wv)
    g_M = 1.0 / fr.Jv
    beta_pt = np.maximum(gamma0 - 0.5 * fr.divw_v, beta_min)
    beta_el = np.min(beta_pt, axis=1)
    out = {}
    for tag, indptr, members, area, h in (
            ("e", patches.edge_indptr, patches.edge_members, patches.edge_area, mesh.lengths),
            ("k", patches.element_indptr, patches.element_members, patches.element_area,
             mesh.diameters)):
        out[f"J1_{tag}"], out[f"Jinf_{tag}"] = _patch_norms(g_J, space, indptr, members, area)
        out[f"a1_{tag}"], out[f"ainf_{tag}"] = _patch_norms(g_a, space, indptr, members, area)
        out[f"dinf_{tag}"] = _patch_norms(g_d, space, indptr, members, area)[1]
        out[f"Minf_{tag}"] = _patch_norms(g_M, space, indptr, members, area)[1]
        beta = np.minimum.reduceat(beta_el[members], indptr[:-1])
        out[f"beta_{tag}"] = beta
        out[f"rho_{tag}"] = _rho(out[f"ainf_{tag}"], h, out[f"Minf_{tag}"], beta, eps)
    return PatchWeights(**out)


@dataclass
class IndicatorReport:
    t: float
    eta_J2: np.ndarray
    eta_E2: np.ndarray
    eta_R2: np.ndarray
    eta1_sq: float = 0.0
    eta2_sq: float = 0.0
    eta3_sq: float = 0.0
    norms: dict = field(default_factory=dict)
    local_error: np.ndarray = None

    @property
    def eta_K2(self):
        return self.eta_J2 + self.eta_E2 + self.eta_R2

    @property
    def eta_total(self):
        return float(np.sum(self.eta_K2))


def _to_elements(space, per_edge):
    """Split per-edge values: half to each side on interior edges, all to the owner on the boundary."""
    mesh = space.mesh
    out = np.zeros(space.n_elements)
    inner = space.has_right
    np.add.at(out, mesh.left, np.where(inner, 0.5, 1.0) * per_edge)
    np.add.at(out, mesh.right[inner], 0.5 * per_edge[inner])
    return out


def jump_indicator(space, c, fr, weights, eps, alpha):
    uL, uR = space.edge_values(c)
    jump2 = (uL - uR) ** 2
    m = _metric_normal(space, fr)
    plain = np.sum(space.we * jump2, axis=1)
    metric = np.sum(space.we * fr.Je * _dot(m, m) * jump2, axis=1)
    h = space.h_edge
    w = weights
    with np.errstate(divide="ignore", invalid="ignore"):
        adv = np.where(w.dinf_e > 0, w.dinf_e / eps * h * w.Jinf_e, 0.0) if eps > 0 \
            else np.where(w.dinf_e > 0, np.inf, 0.0)
    per_edge = w.beta_e * h * w.J1_e * plain + (adv + w.a1_e * eps * alpha / h) * w.ainf_e * metric
    per_edge = np.where(space.mesh.tags == NEUMANN, 0.0, per_edge)
    return _to_elements(space, per_edge)


def _diffusion_tensor(fr_Finv, J):
    return J[..., None, None] * (fr_Finv @ np.swapaxes(fr_Finv, -1, -2))


def flux_indicator(space, c, fr, weights, eps, neumann=None):
    mesh = space.mesh
    A = _diffusion_tensor(fr.Finv_e, fr.Je)
    gL, gR = space.edge_grads(c)
    n = np.broadcast_to(space.normals[:, None, :], gL.shape)
    coef = weights.rho_e * np.sqrt(weights.ainf_e / eps) if eps > 0 else np.zeros(mesh.n_edges)
    jump = eps * _dot(_mv(A, gL - gR), n)
    per_edge = np.where(space.has_right, np.sum(space.we * jump ** 2, axis=1), 0.0)
    neu = mesh.tags == NEUMANN
    if np.any(neu):
        gN = np.zeros_like(fr.Je) if neumann is None else \
            neumann(fr.t, fr.xe.reshape(-1, 2)).reshape(fr.Je.shape)
        mis = gN - eps * _dot(_mv(A, gL), n)
        per_edge = np.where(neu, np.sum(space.we * mis ** 2, axis=1), per_edge)
    return _to_elements(space, coef * per_edge)


def divergence_of_flux(space, c, fr, dFv):
    """div_X (J F^{-1} F^{-T} grad_X u) at volume points, using integrated dF."""
    G = fr.Finv_v
    J = fr.Jv
    gX = space.grads(c)
    H = space.hessians(c)
    A = _diffusion_tensor(G, J)
    out = np.einsum("kqij,kqij->kq", A, H)
    GT = np.swapaxes(G, -1, -2)
    for i in range(2):
        dF = dFv[:, :, i]
        dG = -G @ dF @ G
        dJ = J * np.trace(G @ dF, axis1=-2, axis2=-1)
        dA = dJ[..., None, None] * (G @ GT) + J[..., None, None] * (dG @ GT + G @ np.swapaxes(dG, -1, -2))
        out += np.einsum("kqj,kqj->kq", dA[:, :, i, :], gX)
    return out


def residual_indicator(space, c, du, fr, state, data, weights, eps):
    dFv, _ = space.split_points(state.dF)
    J = fr.Jv
    f = np.zeros_like(J) if data.source is None else \
        data.source(fr.t, fr.xv.reshape(-1, 2)).reshape(J.shape)
    gx = _mv(fr.FinvT_v, space.grads(c))
    R = J * f - J * space.values(du) + eps * divergence_of_flux(space, c, fr, dFv) \
        - J * _dot(fr.wv, gx)
    return weights.rho_k ** 2 * np.sum(space.wv * R * R, axis=1)


def element_indicators(space, c, du, fr, state, data, weights, alpha, eps):
    return IndicatorReport(
        t=fr.t,
        eta_J2=jump_indicator(space, c, fr, weights, eps, alpha),
        eta_E2=flux_indicator(space, c, fr, weights, eps, data.neumann),
        eta_R2=residual_indicator(space, c, du, fr, state, data, weights, eps),
    )


def _weighted_jump_sq(space, c, weights):
    uL, uR = space.edge_values(c)
    per_edge = space.h_edge * weights.J1_e * np.sum(space.we * (uL - uR) ** 2, axis=1)
    return float(np.sum(np.where(space.mesh.tags == NEUMANN, 0.0, per_edge)))


def space_time_indicators(space, c, du, report, weights, alpha):
    """(eta1^2, eta2^2, eta3^2); eta2 uses the jump of du/dt = M^{-1} r."""
    eta1 = (1.0 + 1.0 / alpha) * float(np.sum(report.eta_K2))
    return eta1, _weighted_jump_sq(space, du, weights), _weighted_jump_sq(space, c, weights)


def mesh_velocity_c0(vel, t, grid):
    """C0(t) = 1/2 int_0^t sup |div Vt| for a steady mesh velocity."""
    d = vel.mesh.derivatives(grid, 1)[1]
    return 0.5 * t * float(np.max(np.abs(np.trace(d, axis1=1, axis2=2))))


@dataclass
class SharpNormAccumulator:
    """Running max of ||e||^2 and trapezoid integrals for the reliability bound."""

    times: list = field(default_factory=list)
    l2_sq: list = field(default_factory=list)
    energy_sq: list = field(default_factory=list)
    eta1: list = field(default_factory=list)
    eta2: list = field(default_factory=list)
    eta3: list = field(default_factory=list)

    def add(self, t, l2_sq, energy_sq, eta1, eta2, eta3):
        for name, v in (("times", t), ("l2_sq", l2_sq), ("energy_sq", energy_sq),
                        ("eta1", eta1), ("eta2", eta2), ("eta3", eta3)):
            getattr(self, name).append(float(v))

    @staticmethod
    def _trap(t, v):
        return float(np.trapezoid(v, t)) if len(t) > 1 else 0.0

    def sharp_sq(self):
        return max(self.l2_sq) + self._trap(self.times, self.energy_sq)

    def estimator_sq(self, e0_sq, s0):
        T = self.times[-1] - self.times[0]
        return s0 * (e0_sq + self._trap(self.times, self.eta1)
                     + T * self._trap(self.times, self.eta2) + max(self.eta3))

    def effectivity(self, e0_sq, s0):
        est = self.estimator_sq(e0_sq, s0)
        return math.sqrt(self.sharp_sq()) / math.sqrt(est) if est > 0 else math.inf


def norms(space, c, fr, eps, alpha, gamma0=0.0, beta_min=0.0):
    return {
        "l2": math.sqrt(h_norm_sq(space, c, fr)),
        "energy": math.sqrt(max(energy_norm_sq(space, c, fr, eps, alpha, beta_min, gamma0), 0.0)),
        "dual_star": float("nan"),
    }


def write_indicator_csv(space, report, step, fh=None, centroids=None):
    """Per-element indicators: step, t, element, centroid, eta_J2, eta_R2, eta_E2, eta_K2, local_error."""
    out = fh if fh is not None else io.StringIO()
    if centroids is None:
        centroids = space.mesh.vertices[space.mesh.elements].mean(axis=1)
    err = report.local_error
    for k in range(space.n_elements):
        vals = [centroids[k, 0], centroids[k, 1], report.eta_J2[k], report.eta_R2[k],
                report.eta_E2[k], report.eta_K2[k], np.nan if err is None else err[k]]
        out.write(f"{step},{report.t:.17g},{k}," + ",".join(f"{v:.17g}" for v in vals) + "\n")
    if fh is None:
        return out.getvalue()


INDICATOR_HEADER = "step,t,element,cx,cy,eta_J2,eta_R2,eta_E2,eta_K2,local_error\n"
