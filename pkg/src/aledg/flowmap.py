"""ALE kinematics integrated pointwise along mesh-velocity trajectories.

For each tracked reference point X we integrate

    x' = Vt(x),  F' = (grad Vt) F,  (d_k F)' = d_k(grad Vt) F + (grad Vt) d_k F,
    J' = J div Vt,

with classical RK4. ``J`` is integrated on its own so that ``J - det F`` is a
usable consistency diagnostic. Second reference derivatives of F are carried
only when requested (they need third derivatives of Vt).
"""
from dataclasses import dataclass, replace
import io

import numpy as np

# (k, l) index pairs of the stored second derivatives d_k d_l F.
SECOND_PAIRS = ((0, 0), (0, 1), (1, 1))


class EntanglementError(RuntimeError):
    """The flow map lost injectivity (J <= 0 somewhere)."""

    def __init__(self, t, min_j, index):
        super().__init__(f"entanglement at t={t:.6g}: min J = {min_j:.3e} at point {index}")
        self.t, self.min_j, self.index = t, min_j, index


@dataclass(frozen=True)
class FlowState:
    t: float
    x: np.ndarray
    F: np.ndarray
    dF: np.ndarray
    J: np.ndarray
    n_volume: int
    ddF: np.ndarray = None

    @property
    def n_points(self):
        return len(self.x)

    def volume(self, arr):
        return arr[: self.n_volume]

    def edge(self, arr):
        return arr[self.n_volume:]


def initial_state(points, n_volume, second_order=False, t0=0.0):
    points = np.asarray(points, dtype=float)
    n = len(points)
    F = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    ddF = np.zeros((n, 3, 2, 2)) if second_order else None
    return FlowState(t=float(t0), x=points.copy(), F=F, dF=np.zeros((n, 2, 2, 2)),
                     J=np.ones(n), n_volume=int(n_volume), ddF=ddF)


def init_flowstate(space, second_order=False):
    """Identity flow state on the volume and edge quadrature points of ``space``."""
    return initial_state(space.all_points(), space.n_volume_points, second_order)


def _rhs(vel, t, y, second_order):
    x, F, dF, J = y[0], y[1], y[2], y[3]
    order = 3 if second_order else 2
    derivs = vel.mesh_velocity(t, x, order=order)
    v, G, H = derivs[0], derivs[1], derivs[2]
    # dG[:, k, i, j] = d_{X_k} (grad Vt)_{ij}
    dG = np.einsum("nija,nak->nkij", H, F)
    dx = v
    dFdt = G @ F
    ddFdt = dG @ F[:, None] + G[:, None] @ dF
    dJ = J * np.trace(G, axis1=1, axis2=2)
    out = [dx, dFdt, ddFdt, dJ]
    if second_order:
        T = derivs[3]
        ddF = y[4]
        rows = []
        for s, (k, l) in enumerate(SECOND_PAIRS):
            # d_{X_l} d_{X_k} grad Vt, with columns k, l of F and dF picked explicitly
            d2G = (np.einsum("nijab,nb,na->nij", T, F[:, :, l], F[:, :, k])
                   + np.einsum("nija,na->nij", H, dF[:, l, :, k]))
            rows.append(d2G @ F + dG[:, k] @ dF[:, l] + dG[:, l] @ dF[:, k] + G @ ddF[:, s])
        out.append(np.stack(rows, axis=1))
    return out


def _axpy(y, k, h):
    return [a + h * b for a, b in zip(y, k)]


def _rk4(vel, t, y, h, second_order):
    k1 = _rhs(vel, t, y, second_order)
    k2 = _rhs(vel, t + 0.5 * h, _axpy(y, k1, 0.5 * h), second_order)
    k3 = _rhs(vel, t + 0.5 * h, _axpy(y, k2, 0.5 * h), second_order)
    k4 = _rhs(vel, t + h, _axpy(y, k3, h), second_order)
    return [a + (h / 6.0) * (b + 2 * c + 2 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]


def advance_flowmap(state, vel, dt, substeps=1):
    """Advance by ``dt`` using ``substeps`` RK4 steps of size dt / substeps."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    second = state.ddF is not None
    y = [state.x, state.F, state.dF, state.J]
    if second:
        y.append(state.ddF)
    h = dt / substeps
    t = state.t
    for _ in range(substeps):
        y = _rk4(vel, t, y, h, second)
        t += h
        detF = np.linalg.det(y[1])
        bad = min(float(np.min(y[3])), float(np.min(detF)))
        if not np.isfinite(bad) or bad <= 0.0:
            idx = int(np.argmin(np.minimum(y[3], detF)))
            raise EntanglementError(t, bad, idx)
    return replace(state, t=state.t + dt, x=y[0], F=y[1], dF=y[2], J=y[3],
                   ddF=y[4] if second else None)


def max_eigenvalue_sym2(S):
    """Largest eigenvalue of symmetric 2x2 matrices, closed form."""
    a, b, d = S[..., 0, 0], 0.5 * (S[..., 0, 1] + S[..., 1, 0]), S[..., 1, 1]
    half_tr = 0.5 * (a + d)
    disc = np.sqrt(np.maximum(0.25 * (a - d) ** 2 + b * b, 0.0))
    return half_tr + disc


@dataclass(frozen=True)
class GeometricFactors:
    """Per-point geometry and velocity data at one time level."""

    t: float
    x: np.ndarray
    J: np.ndarray
    Finv: np.ndarray
    FinvT: np.ndarray
    a: np.ndarray
    M: np.ndarray
    w: np.ndarray
    divw: np.ndarray
    delta: np.ndarray
    beta: np.ndarray
    n_volume: int


def geometric_factors(state, vel):
    J = state.J
    if np.any(~np.isfinite(state.F)) or np.any(~np.isfinite(J)):
        raise FloatingPointError("non-finite flow state")
    if np.any(J <= 0):
        raise EntanglementError(state.t, float(J.min()), int(np.argmin(J)))
    Finv = np.linalg.inv(state.F)
    FinvT = np.swapaxes(Finv, 1, 2)
    S = J[:, None, None] * (Finv @ FinvT)
    a = max_eigenvalue_sym2(S)
    w, divw = vel.remaining(state.t, state.x)
    return GeometricFactors(
        t=state.t, x=state.x, J=J, Finv=Finv, FinvT=FinvT, a=a, M=1.0 / J,
        w=w, divw=divw, delta=np.einsum("ni,ni->n", w, w),
        beta=vel.gamma0 - 0.5 * divw, n_volume=state.n_volume,
    )


@dataclass
class KinematicResiduals:
    max_j_detf: float
    min_j: float
    max_mixed_partial: float
    max_j_minus_one: float


def kinematic_residuals(state):
    detF = np.linalg.det(state.F)
    # d_1 F[:, 1] and d_2 F[:, 0] both equal d^2 x / dX_1 dX_2
    mixed = np.abs(state.dF[:, 0, :, 1] - state.dF[:, 1, :, 0])
    return KinematicResiduals(
        max_j_detf=float(np.max(np.abs(state.J - detF))),
        min_j=float(np.min(state.J)),
        max_mixed_partial=float(np.max(mixed)) if len(mixed) else 0.0,
        max_j_minus_one=float(np.max(np.abs(state.J - 1.0))),
    )


def y_field_derivatives(state, q):
    """Y = J^(1/2) F^(-T) q and its first/second reference derivatives.

    Uses J = det F so the derivatives are consistent with the carried F jets.
    ``q`` has shape (N, 2). Returns (Y (N,2), dY (N,2,2), d2Y (N,2,2,2)) with
    dY[:, k] = d_k Y and d2Y[:, k, l] = d_k d_l Y.
    """
    if state.ddF is None:
        raise ValueError("second derivatives of F were not integrated")
    F, dF = state.F, state.dF
    d2F = np.empty(F.shape[:1] + (2, 2, 2, 2))
    for s, (k, l) in enumerate(SECOND_PAIRS):
        d2F[:, k, l] = state.ddF[:, s]
        d2F[:, l, k] = state.ddF[:, s]
    G = np.linalg.inv(F)
    J = np.linalg.det(F)
    dG = np.stack([-G @ dF[:, k] @ G for k in range(2)], axis=1)
    trk = np.stack([np.trace(G @ dF[:, k], axis1=1, axis2=2) for k in range(2)], axis=1)
    dJ = J[:, None] * trk
    d2G = np.empty_like(d2F)
    d2J = np.empty((len(J), 2, 2))
    for k in range(2):
        for l in range(2):
            d2G[:, k, l] = -(dG[:, l] @ dF[:, k] @ G + G @ d2F[:, k, l] @ G
                             + G @ dF[:, k] @ dG[:, l])
            d2J[:, k, l] = dJ[:, l] * trk[:, k] + J * np.trace(
                dG[:, l] @ dF[:, k] + G @ d2F[:, k, l], axis1=1, axis2=2)
    s = np.sqrt(J)
    ds = 0.5 * dJ / s[:, None]
    d2s = -0.25 * dJ[:, :, None] * dJ[:, None, :] / (J ** 1.5)[:, None, None] \
        + 0.5 * d2J / s[:, None, None]
    GTq = np.einsum("nji,nj->ni", G, q)
    dGTq = np.einsum("nkji,nj->nki", dG, q)
    d2GTq = np.einsum("nklji,nj->nkli", d2G, q)
    Y = s[:, None] * GTq
    dY = ds[:, :, None] * GTq[:, None, :] + s[:, None, None] * dGTq
    d2Y = (d2s[:, :, :, None] * GTq[:, None, None, :]
           + ds[:, :, None, None] * dGTq[:, None, :, :]
           + ds[:, None, :, None] * dGTq[:, :, None, :]
           + s[:, None, None, None] * d2GTq)
    return Y, dY, d2Y


def write_flowstate_csv(state, fh=None):
    """CSV snapshot: point id, t, x, y, F11, F12, F21, F22, J."""
    out = fh if fh is not None else io.StringIO()
    out.write("point,t,x,y,F11,F12,F21,F22,J\n")
    for i in range(state.n_points):
        F = state.F[i]
        vals = [state.t, *state.x[i], F[0, 0], F[0, 1], F[1, 0], F[1, 1], state.J[i]]
        out.write(f"{i}," + ",".join(f"{v:.17g}" for v in vals) + "\n")
    if fh is None:
        return out.getvalue()
