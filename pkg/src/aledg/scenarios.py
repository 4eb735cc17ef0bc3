"""Test problems with exact solutions, source terms and error measurement."""
from dataclasses import dataclass, field
import math

import numpy as np

from .forms import BoundaryData, _dot, _mv, apply_jh, make_frame
from .velocity import VelocityModel, ZERO, constant_field, layer_mesh_velocity

LAYER_EPS = 0.01
LAYER_DT = 2.0 ** -16


@dataclass
class Scenario:
    """Problem u_t + V.grad u - eps lap u + gamma0 u = f on the unit square, u = 0 on
    the boundary.

    ``exact(t, x)``, ``exact_grad``, ``exact_dt`` and ``exact_lap`` are
    vectorized over points x (N, 2).
    """

    name: str
    eps: float
    vel: VelocityModel
    exact: object
    exact_grad: object
    exact_dt: object
    exact_lap: object
    dt: float = LAYER_DT
    steps: int = 12
    substeps: int = 2
    info: dict = field(default_factory=dict)

    def source(self, t, x):
        V, _ = self.vel.flow_velocity(t, x)
        return (self.exact_dt(t, x) + _dot(V, self.exact_grad(t, x))
                - self.eps * self.exact_lap(t, x) + self.vel.gamma0 * self.exact(t, x))

    def data(self):
        return BoundaryData(source=self.source, neumann=None,
                            initial=lambda x: self.exact(0.0, x))

    def with_mesh_velocity(self, mesh_field, name=None):
        vel = VelocityModel(flow=self.vel.flow, mesh=mesh_field, gamma0=self.vel.gamma0)
        return Scenario(name or self.name, self.eps, vel, self.exact, self.exact_grad,
                        self.exact_dt, self.exact_lap, self.dt, self.steps, self.substeps,
                        dict(self.info))

    def with_gamma0(self, gamma0):
        vel = VelocityModel(flow=self.vel.flow, mesh=self.vel.mesh, gamma0=gamma0)
        return Scenario(self.name, self.eps, vel, self.exact, self.exact_grad, self.exact_dt,
                        self.exact_lap, self.dt, self.steps, self.substeps, dict(self.info))

    def static(self):
        return self.with_mesh_velocity(ZERO, name=self.name + "-static")


class LayerProfile:
    """g(s) = (e^{(s-1)/eps} - 1)/(e^{-1/eps} - 1) + s - 1 via expm1."""

    def __init__(self, eps):
        self.eps = eps
        self.den = math.expm1(-1.0 / eps)

    def __call__(self, s):
        return np.expm1((s - 1.0) / self.eps) / self.den + s - 1.0

    def d1(self, s):
        return np.exp((s - 1.0) / self.eps) / (self.eps * self.den) + 1.0

    def d2(self, s):
        return np.exp((s - 1.0) / self.eps) / (self.eps ** 2 * self.den)


def _product_solution(g, dg, d2g, T, dT):
    def u(t, x):
        return T(t) * g(x[:, 0]) * g(x[:, 1])

    def grad(t, x):
        gx, gy = g(x[:, 0]), g(x[:, 1])
        return T(t) * np.stack([dg(x[:, 0]) * gy, gx * dg(x[:, 1])], axis=1)

    def dt(t, x):
        return dT(t) * g(x[:, 0]) * g(x[:, 1])

    def lap(t, x):
        gx, gy = g(x[:, 0]), g(x[:, 1])
        return T(t) * (d2g(x[:, 0]) * gy + gx * d2g(x[:, 1]))

    return u, grad, dt, lap


def boundary_layer_scenario(variant="literal", eps=LAYER_EPS, amplitude=2.0 ** 16,
                            moving=True):
    """Outflow boundary layers at x = 1 and y = 1, flow (1, 1) + mesh velocity."""
    mesh_v = layer_mesh_velocity(amplitude, variant)
    flow = constant_field(1.0, 1.0) + mesh_v
    vel = VelocityModel(flow=flow, mesh=mesh_v if moving else ZERO)
    g = LayerProfile(eps)
    u, grad, dt, lap = _product_solution(
        g, g.d1, g.d2, lambda t: -math.expm1(-t), lambda t: math.exp(-t))
    return Scenario(f"boundary_layer-{variant}", eps, vel, u, grad, dt, lap,
                    info={"variant": variant, "amplitude": amplitude})


def smooth_scenario(mesh_mode="absorbed", eps=1e-4, amplitude=16.0, dt=1.0 / 64,
                    steps=16, decay=1.0):
    """u = e^{-decay t} sin(pi x) sin(pi y) advected by a stream-function flow.

    ``mesh_mode``: ``static`` (Vt = 0), ``absorbed`` (Vt = V, no remaining
    advection) or ``layer`` (flow (1, 1) + layer field, Vt = layer field).
    """
    if mesh_mode == "layer":
        mesh_v = layer_mesh_velocity(amplitude, "stream_function")
        flow = constant_field(1.0, 1.0) + mesh_v
    else:
        flow = layer_mesh_velocity(amplitude, "stream_function")
        mesh_v = {"static": ZERO, "absorbed": flow}.get(mesh_mode)
        if mesh_v is None:
            raise ValueError(f"unknown mesh mode {mesh_mode!r}")
    vel = VelocityModel(flow=flow, mesh=mesh_v)
    pi = math.pi
    u, grad, du, lap = _product_solution(
        lambda s: np.sin(pi * s), lambda s: pi * np.cos(pi * s), lambda s: -pi * pi * np.sin(pi * s),
        lambda t: math.exp(-decay * t), lambda t: -decay * math.exp(-decay * t))
    return Scenario(f"smooth-{mesh_mode}", eps, vel, u, grad, du, lap, dt=dt, steps=steps,
                    substeps=2, info={"mesh_mode": mesh_mode, "amplitude": amplitude,
                          "length_scale": 1.0})


# --- finite-difference residual oracle ---------------------------------------

_C1 = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
_C2 = np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0


def fd_residual_check(scn, n_samples=1000, seed=0, h=None, t_range=(0.0, 1.0)):
    """Max relative residual of f - (u_t + V.grad u - eps lap u + gamma0 u) with u derivatives
    taken by 6th-order central differences of ``scn.exact`` only."""
    rng = np.random.default_rng(seed)
    h = 1e-2 * scn.info.get("length_scale", min(scn.eps, 1.0)) if h is None else h
    x = rng.uniform(0.05, 0.95, size=(n_samples, 2))
    t = rng.uniform(*t_range, size=n_samples)
    offs = np.arange(-3, 4)
    worst = 0.0
    for ti in np.unique(t):
        sel = t == ti
        xs = x[sel]
        ux = [scn.exact(ti, xs + [o * h, 0.0]) for o in offs]
        uy = [scn.exact(ti, xs + [0.0, o * h]) for o in offs]
        gx = np.tensordot(_C1, ux, 1) / h
        gy = np.tensordot(_C1, uy, 1) / h
        lap = (np.tensordot(_C2, ux, 1) + np.tensordot(_C2, uy, 1)) / h ** 2
        ht = 1e-3
        ut = np.tensordot(_C1, [scn.exact(ti + o * ht, xs) for o in offs], 1) / ht
        V, _ = scn.vel.flow_velocity(ti, xs)
        adv = V[:, 0] * gx + V[:, 1] * gy
        react = scn.vel.gamma0 * scn.exact(ti, xs)
        res = scn.source(ti, xs) - (ut + adv - scn.eps * lap + react)
        scale = np.maximum.reduce([np.abs(ut), np.abs(adv), np.abs(scn.eps * lap), np.abs(react),
                                   np.full(len(xs), 1e-300)])
        worst = max(worst, float(np.max(np.abs(res) / scale)))
    return worst


# --- errors --------------------------------------------------------------------

@dataclass
class ErrorNorms:
    l2: float
    energy: float
    nodal_max: float
    element_l2: np.ndarray


def error_norms(space, c, scn, state, alpha, beta_min=0.0):
    """Reference-frame errors of u_h against the pulled-back exact solution."""
    fr = make_frame(space, state, scn.vel)
    t = state.t
    uq = space.values(c)
    ex = scn.exact(t, fr.xv.reshape(-1, 2)).reshape(uq.shape)
    e = uq - ex
    el = np.sum(space.wv * fr.Jv * e * e, axis=1)
    gx = _mv(fr.FinvT_v, space.grads(c))
    ge = gx - scn.exact_grad(t, fr.xv.reshape(-1, 2)).reshape(gx.shape)
    beta = np.maximum(scn.vel.gamma0 - 0.5 * fr.divw_v, beta_min)
    en = np.sum(space.wv * fr.Jv * (scn.eps * _dot(ge, ge) + beta * e * e))
    # the exact solution is continuous and vanishes on the boundary: jumps are u_h's
    en += scn.eps * np.sum(apply_jh(space, c, fr, alpha) * c)
    xn = space.node_part(state.x).reshape(-1, 2)
    nodal = np.max(np.abs(c.ravel() - scn.exact(t, xn)))
    return ErrorNorms(l2=float(np.sqrt(el.sum())), energy=float(np.sqrt(max(en, 0.0))),
                      nodal_max=float(nodal), element_l2=np.sqrt(el))

