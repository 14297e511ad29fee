import numpy as np
import pytest

from torusot.action import BvpOptions, cost_matrix, minimize_bvp
from torusot.dynamics import PhasePoint, flow, make_spec


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Shared cost-matrix cache so expensive matrices compute once per session."""
    return str(tmp_path_factory.mktemp("cost_cache"))


@pytest.fixture(scope="session")
def free_spec():
    return make_spec([[1.0]], "zero", time_period=1.0)


@pytest.fixture(scope="session")
def pendulum():
    return make_spec([[1.0]], "cosine", amplitude=1.0, time_period=1.0)


@pytest.fixture(scope="session")
def two_well():
    return make_spec([[1.0]], "cosine", amplitude=1.0, wavenumber=2,
                     time_period=1.0)


@pytest.fixture(scope="session")
def traveling():
    return make_spec([[1.0]], "traveling", amplitude=0.2, speed=1.0,
                     time_period=1.0)


@pytest.fixture(scope="session", autouse=True)
def _warmup_kernels(free_spec, pendulum):
    """Trigger jit compilation before any timed assertion runs."""
    minimize_bvp(free_spec, [0.1], [0.4], 0.0, 1.0)
    minimize_bvp(pendulum, [0.1], [0.4], 0.0, 1.0,
                 BvpOptions(knots_per_unit=16))
    cost_matrix(pendulum, [[0.0], [0.5]], [[0.25]], 0.0, 0.5,
                BvpOptions(knots_per_unit=16))
    flow(pendulum, PhasePoint(np.array([0.1]), np.array([0.3]), 0.0),
         0.0, 0.01, steps=4)


@pytest.fixture(scope="session")
def two_atom_run(free_spec, cache_dir):
    """Free-particle transport of (0, 0.5) to (0.1, 0.6) on a 64-grid."""
    from torusot.kantorovich import DiscreteMeasure
    from torusot.manifold import GridSpec
    from torusot.pipeline import run_transport

    mu0 = DiscreteMeasure(np.array([[0.0], [0.5]]), np.array([0.5, 0.5]))
    muT = DiscreteMeasure(np.array([[0.1], [0.6]]), np.array([0.5, 0.5]))
    return run_transport(free_spec, mu0, muT, 1.0, GridSpec(64, 1),
                         mask_tol=1e-3, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def pushforward_run(free_spec, cache_dir):
    """Uniform 64-grid to its pushforward under x + 0.1 sin(2 pi x)."""
    from torusot.kantorovich import uniform_measure
    from torusot.manifold import GridSpec, wrap
    from torusot.pipeline import run_transport

    grid = GridSpec(64, 1)
    x = grid.points()[:, 0]
    targets = wrap((x + 0.1 * np.sin(2 * np.pi * x))[:, None])
    return run_transport(free_spec, uniform_measure(grid.points()),
                         uniform_measure(targets), 1.0, grid,
                         mask_tol=1e-3, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def pendulum_run(pendulum, cache_dir):
    """Pendulum transport, uniform 64-grid source to a sine pushforward."""
    from torusot.kantorovich import uniform_measure
    from torusot.manifold import GridSpec, wrap
    from torusot.pipeline import run_transport

    grid = GridSpec(64, 1)
    x = grid.points()[:, 0]
    targets = wrap((x + 0.1 * np.sin(2 * np.pi * x))[:, None])
    return run_transport(pendulum, uniform_measure(grid.points()),
                         uniform_measure(targets), 1.0, grid,
                         mask_tol=1e-3, cost_accuracy=1e-4,
                         cache_dir=cache_dir)
