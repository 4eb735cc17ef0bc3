import io
import math

import numpy as np
import pytest

from aledg.estimators import (INDICATOR_HEADER, SharpNormAccumulator, _rho,
                              compute_patch_weights, divergence_of_flux, element_indicators,
                              flux_indicator, jump_indicator, mesh_velocity_c0,
                              residual_indicator, space_time_indicators, write_indicator_csv)
from aledg.flowmap import init_flowstate
from aledg.forms import BoundaryData, averaging_operator, make_frame
from aledg.mesh import build_connectivity, build_structured_unit_square
from aledg.scenarios import (LayerProfile, boundary_layer_scenario, error_norms,
                             fd_residual_check, smooth_scenario)
from aledg.space import DGSpace
from aledg.velocity import ZERO, VelocityModel, constant_field, sup_grid
from conftest import identity_frame, moved_frame

SCENARIOS = [boundary_layer_scenario("literal"), boundary_layer_scenario("stream_function"),
             smooth_scenario("absorbed"), smooth_scenario("static"), smooth_scenario("layer")]


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 0.2])
def test_layer_profile(eps):
    g = LayerProfile(eps)
    assert g(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)
    assert g(np.array([1.0]))[0] == 0.0
    s = np.linspace(0.05, 0.95, 7)
    h = 1e-6 * eps
    np.testing.assert_allclose(g.d1(s), (g(s + h) - g(s - h)) / (2 * h), rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(g.d2(s), (g.d1(s + h) - g.d1(s - h)) / (2 * h),
                               rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("scn", SCENARIOS, ids=lambda s: s.name)
def test_manufactured_source_matches_finite_differences(scn):
    # independent oracle: 6th-order differences of the exact solution only
    assert fd_residual_check(scn, n_samples=300) <= 1e-7


def test_reaction_term_in_source():
    scn = smooth_scenario("layer", eps=1e-2).with_gamma0(1.5)
    assert scn.vel.gamma0 == 1.5
    assert fd_residual_check(scn, n_samples=200) <= 1e-7


@pytest.mark.parametrize("scn", SCENARIOS, ids=lambda s: s.name)
def test_exact_solution_vanishes_on_boundary(scn):
    s = np.linspace(0, 1, 11)
    pts = np.concatenate([np.stack([s, 0 * s], 1), np.stack([s, 0 * s + 1], 1),
                          np.stack([0 * s, s], 1), np.stack([0 * s + 1, s], 1)])
    assert np.max(np.abs(scn.exact(0.7, pts))) <= 1e-14


def test_static_counterpart_and_bad_mode():
    scn = boundary_layer_scenario()
    st = scn.static()
    assert st.vel.mesh is ZERO and st.vel.flow is scn.vel.flow
    assert st.name.endswith("-static")
    with pytest.raises(ValueError):
        smooth_scenario("spinning")


def test_error_norms_zero_for_exact_initial_state():
    scn = boundary_layer_scenario()  # u(0, .) = 0
    space = DGSpace(build_structured_unit_square(3), 2)
    state = init_flowstate(space)
    en = error_norms(space, np.zeros((space.n_elements, space.m)), scn, state, 40.0)
    assert en.l2 == en.energy == en.nodal_max == 0.0


def test_error_norms_nodal_interpolant():
    scn = smooth_scenario("static")
    space = DGSpace(build_structured_unit_square(4), 2)
    state = init_flowstate(space)
    c = space.interpolate(lambda x: scn.exact(0.0, x))
    en = error_norms(space, c, scn, state, 40.0)
    assert en.nodal_max == 0.0
    assert 0 < en.l2 < 1e-2
    assert en.element_l2.shape == (space.n_elements,)


# --- estimators ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def setup():
    space = DGSpace(build_structured_unit_square(4), 2)
    return space, build_connectivity(space.mesh)


def test_patch_weights_on_identity(setup):
    space, patches = setup
    fr, _, _ = identity_frame(space, w=(0.3, 0.4), gamma0=2.0)
    w = compute_patch_weights(space, fr, patches, 0.01, gamma0=2.0)
    for name in ("J1_e", "Jinf_e", "a1_e", "ainf_e", "Minf_e", "J1_k", "ainf_k"):
        np.testing.assert_allclose(getattr(w, name), 1.0, rtol=1e-13)
    np.testing.assert_allclose(w.dinf_e, 0.25, rtol=1e-13)
    np.testing.assert_allclose(w.beta_k, 2.0)
    # rho = min(h / sqrt(eps), M / beta)
    np.testing.assert_allclose(w.rho_e, np.minimum(space.h_edge / 0.1, 0.5))


def test_rho_without_reaction_uses_diffusion_branch():
    h = np.array([0.1, 0.2])
    r = _rho(np.ones(2), h, np.ones(2), np.zeros(2), 0.04)
    np.testing.assert_allclose(r, h / 0.2)


def test_continuous_fields_have_zero_jump_indicators(setup):
    space, patches = setup
    fr, _, _ = moved_frame(space)
    w = compute_patch_weights(space, fr, patches, 0.01)
    rng = np.random.default_rng(3)
    c = averaging_operator(space, rng.standard_normal((space.n_elements, space.m)))
    du = averaging_operator(space, rng.standard_normal((space.n_elements, space.m)))
    assert np.max(np.abs(jump_indicator(space, c, fr, w, 0.01, 40.0))) <= 1e-24
    rep = element_indicators(space, c, du, fr, fr_state(space), BoundaryData(), w, 40.0, 0.01)
    _, eta2, eta3 = space_time_indicators(space, c, du, rep, w, 40.0)
    assert eta2 <= 1e-24 and eta3 <= 1e-24


def fr_state(space):
    _, state, _ = moved_frame(space)
    return state


def test_flux_and_residual_vanish_for_exact_polynomial(setup):
    space, patches = setup
    # u = x + 2y, no flow, no source: steady exact solution of the PDE interior
    vel = VelocityModel(flow=ZERO, mesh=ZERO)
    state = init_flowstate(space)
    fr = make_frame(space, state, vel)
    w = compute_patch_weights(space, fr, patches, 0.01)
    c = space.interpolate(lambda x: x[:, 0] + 2 * x[:, 1])
    du = np.zeros_like(c)
    assert np.max(flux_indicator(space, c, fr, w, 0.01)) <= 1e-26
    assert np.max(residual_indicator(space, c, du, fr, state, BoundaryData(), w, 0.01)) <= 1e-26


def test_divergence_of_flux_is_laplacian_on_identity(setup):
    space, _ = setup
    vel = VelocityModel(flow=ZERO, mesh=ZERO)
    state = init_flowstate(space)
    fr = make_frame(space, state, vel)
    c = space.interpolate(lambda x: x[:, 0] ** 2 + 3 * x[:, 1] ** 2 - x[:, 0] * x[:, 1])
    dFv, _ = space.split_points(state.dF)
    np.testing.assert_allclose(divergence_of_flux(space, c, fr, dFv), 8.0, rtol=1e-10)


def test_residual_indicator_picks_up_advection(setup):
    space, patches = setup
    vel = VelocityModel(flow=constant_field(1.0, 0.0), mesh=ZERO, gamma0=1.0)
    state = init_flowstate(space)
    fr = make_frame(space, state, vel)
    w = compute_patch_weights(space, fr, patches, 0.01, gamma0=1.0)
    c = space.interpolate(lambda x: x[:, 0])
    eta = residual_indicator(space, c, np.zeros_like(c), fr, state, BoundaryData(), w, 0.01)
    # R = -w.grad u = -1, so eta_R^2 = rho^2 |K|
    np.testing.assert_allclose(eta, w.rho_k ** 2 * space.mesh.areas, rtol=1e-12)


def test_mesh_velocity_c0():
    scn = boundary_layer_scenario("literal")
    assert mesh_velocity_c0(scn.vel, 0.5, sup_grid()) == pytest.approx(0.25 * 8192)
    assert mesh_velocity_c0(boundary_layer_scenario("stream_function").vel, 0.5,
                            sup_grid()) == 0.0


def test_sharp_norm_accumulator():
    acc = SharpNormAccumulator()
    for t in (0.0, 0.5, 1.0):
        acc.add(t, l2_sq=t, energy_sq=2 * t, eta1=1.0, eta2=t, eta3=3 * t)
    assert acc.sharp_sq() == pytest.approx(1.0 + 1.0)
    # s0 (e0 + int eta1 + T int eta2 + max eta3)
    assert acc.estimator_sq(0.5, 2.0) == pytest.approx(2.0 * (0.5 + 1.0 + 0.5 + 3.0))
    assert acc.effectivity(0.5, 2.0) == pytest.approx(math.sqrt(2.0 / 10.0))


def test_indicator_csv_format(setup):
    space, patches = setup
    fr, state, _ = moved_frame(space)
    w = compute_patch_weights(space, fr, patches, 0.01)
    c = np.ones((space.n_elements, space.m))
    rep = element_indicators(space, c, c, fr, state, BoundaryData(), w, 40.0, 0.01)
    text = write_indicator_csv(space, rep, 3)
    lines = text.splitlines()
    assert len(lines) == space.n_elements
    assert len(lines[0].split(",")) == len(INDICATOR_HEADER.strip().split(","))
    assert lines[0].startswith("3,")
    buf = io.StringIO()
    write_indicator_csv(space, rep, 3, buf)
    assert buf.getvalue() == text
    np.testing.assert_allclose(rep.eta_K2, rep.eta_J2 + rep.eta_E2 + rep.eta_R2)


def test_physical_hessians_on_skewed_mesh(rng):
    from aledg.mesh import perturb_vertices
    mesh = perturb_vertices(build_structured_unit_square(3), 0.08, rng)
    space = DGSpace(mesh, 2)
    c = space.interpolate(lambda x: x[:, 0] ** 2 + 3 * x[:, 1] ** 2 - x[:, 0] * x[:, 1])
    H = np.array([[2.0, -1.0], [-1.0, 6.0]])
    np.testing.assert_allclose(space.hessians(c), np.broadcast_to(H, space.hessians(c).shape),
                               atol=1e-10)
    cl = c[mesh.left]
    HL = np.einsum("eqiab,ei->eqab", space.hphi_L, cl)
    np.testing.assert_allclose(HL, np.broadcast_to(H, HL.shape), atol=1e-10)
