import numpy as np
import pytest

from aledg.mesh import build_structured_unit_square


@pytest.fixture(scope="session")
def mesh9():
    return build_structured_unit_square(9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def moved_frame(space, w=(0.3, -0.2), amplitude=16.0, steps=5, dt=0.01, gamma0=0.0,
                variant="literal"):
    """Frame after a few flow-map steps with a constant remaining advection w."""
    from aledg.flowmap import advance_flowmap, init_flowstate
    from aledg.forms import make_frame
    from aledg.velocity import VelocityModel, constant_field, layer_mesh_velocity

    mesh_v = layer_mesh_velocity(amplitude, variant)
    vel = VelocityModel(flow=mesh_v + constant_field(*w), mesh=mesh_v, gamma0=gamma0)
    state = init_flowstate(space)
    for _ in range(steps):
        state = advance_flowmap(state, vel, dt, 2)
    return make_frame(space, state, vel), state, vel


def identity_frame(space, w=(0.0, 0.0), gamma0=0.0):
    return moved_frame(space, w=w, steps=0, gamma0=gamma0)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[k])
