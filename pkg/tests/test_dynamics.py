import numpy as np
import pytest
from scipy.integrate import solve_ivp

from torusot.dynamics import (DivergenceError, LagrangianSpec, PhasePoint,
                              eval_H, eval_L, flow, flow_many,
                              legendre_p_to_v, legendre_v_to_p, make_spec)
from torusot.manifold import wrap
from torusot.potentials import make_potential


def test_eval_L_examples(free_spec, pendulum):
    assert eval_L(free_spec, [0.3], [1.0], 0.0) == pytest.approx(0.5)
    assert eval_L(pendulum, [0.0], [0.0], 0.0) == pytest.approx(-1.0)
    spec2 = make_spec([[2.0]], "zero")
    assert eval_L(spec2, [0.0], [1.0], 0.0) == pytest.approx(1.0)


def test_eval_H_examples(free_spec, pendulum):
    assert eval_H(free_spec, [0.3], [1.0], 0.0) == pytest.approx(0.5)
    assert eval_H(pendulum, [0.0], [0.0], 0.0) == pytest.approx(1.0)
    spec2 = make_spec([[2.0]], "zero")
    assert eval_H(spec2, [0.0], [2.0], 0.0) == pytest.approx(1.0)


def test_legendre_examples(free_spec):
    assert legendre_v_to_p(free_spec, [0.0], [0.3], 0.0) == pytest.approx([0.3])
    spec2 = make_spec([[2.0]], "zero")
    assert legendre_v_to_p(spec2, [0.0], [1.0], 0.0) == pytest.approx([2.0])


def test_legendre_roundtrip():
    spec = make_spec([[2.0, 0.3], [0.3, 1.0]], "zero")
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=2)
        p = legendre_v_to_p(spec, [0.1, 0.2], v, 0.0)
        back = legendre_p_to_v(spec, [0.1, 0.2], p, 0.0)
        assert np.allclose(back, v, atol=1e-14)


def test_legendre_consistency_L_equals_sup(pendulum):
    # L(x,v,t) = max_p p.v - H(x,p,t); coarse p grid refined near Av
    rng = np.random.default_rng(1)
    for _ in range(10):
        x, v, t = rng.uniform(0, 1, 1), rng.normal(0, 2, 1), rng.uniform(0, 1)
        p_star = pendulum.kinetic @ v
        coarse = np.linspace(p_star[0] - 5, p_star[0] + 5, 2001)
        fine = np.linspace(p_star[0] - 0.01, p_star[0] + 0.01, 2001)
        ps = np.concatenate([coarse, fine])
        vals = ps * v[0] - np.array([eval_H(pendulum, x, [p], t) for p in ps])
        assert eval_L(pendulum, x, v, t) == pytest.approx(vals.max(), abs=1e-6)


def test_spec_construction_checks():
    with pytest.raises(ValueError):
        make_spec([[1.0, 0.5], [0.4, 1.0]], "zero")     # asymmetric
    with pytest.raises(ValueError):
        make_spec([[-1.0]], "zero")                      # not positive definite
    with pytest.raises(ValueError):
        make_spec([[0.0]], "zero")
    with pytest.raises(ValueError):
        # traveling potential has period 1/speed here, not 2/3
        make_spec([[1.0]], "traveling", speed=1.5, time_period=2 / 3 + 1e-3)
    spec = make_spec([[1.0]], "traveling", speed=2.0, time_period=1.0)
    assert spec.time_period == 1.0


def test_flow_free_straight(free_spec):
    p = flow(free_spec, PhasePoint(np.array([0.0]), np.array([1.0]), 0.0),
             0.0, 0.5)
    assert p.x == pytest.approx([0.5], abs=1e-12)
    assert p.v == pytest.approx([1.0], abs=1e-12)


def test_flow_identity_at_equal_times(pendulum):
    start = PhasePoint(np.array([0.3]), np.array([0.7]), 0.0)
    p = flow(pendulum, start, 0.2, 0.2)
    assert p.x == pytest.approx([0.3])
    assert p.v == pytest.approx([0.7])


def test_flow_pendulum_equilibrium(pendulum):
    # V'(0.5) = 0: the state (0.5, 0) is a fixed point of the flow
    p = flow(pendulum, PhasePoint(np.array([0.5]), np.array([0.0]), 0.0),
             0.0, 1.0)
    assert abs(p.x[0] - 0.5) < 1e-10
    assert abs(p.v[0]) < 1e-10


def test_flow_composition(pendulum):
    rng = np.random.default_rng(2)
    for _ in range(25):
        x0 = rng.uniform(0, 1, 1)
        v0 = rng.normal(0, 1.5, 1)
        r, s, t = np.sort(rng.uniform(0, 1, 3))
        if t - r < 1e-3:
            continue
        direct = flow(pendulum, PhasePoint(x0, v0, r), r, t)
        mid = flow(pendulum, PhasePoint(x0, v0, r), r, s)
        two = flow(pendulum, PhasePoint(mid.x, mid.v, s), s, t)
        assert abs(direct.x[0] - two.x[0]) < 1e-8
        assert abs(direct.v[0] - two.v[0]) < 1e-8


def test_flow_backward_inverts(pendulum):
    start = PhasePoint(np.array([0.2]), np.array([1.1]), 0.0)
    fwd = flow(pendulum, start, 0.0, 0.8)
    back = flow(pendulum, PhasePoint(fwd.x, fwd.v, 0.8), 0.8, 0.0)
    assert abs(back.x[0] - 0.2) < 1e-9
    assert abs(back.v[0] - 1.1) < 1e-9


def test_energy_conservation_autonomous(pendulum):
    rng = np.random.default_rng(3)
    for _ in range(10):
        x0 = rng.uniform(0, 1, 1)
        v0 = rng.normal(0, 2, 1)
        H0 = eval_H(pendulum, x0, pendulum.kinetic @ v0, 0.0)
        p1 = flow(pendulum, PhasePoint(x0, v0, 0.0), 0.0, 1.0)
        H1 = eval_H(pendulum, p1.x, pendulum.kinetic @ p1.v, 1.0)
        assert abs(H1 - H0) < 1e-8


def test_flow_against_adaptive_integrator(pendulum):
    # independent route: scipy RK45 at tight tolerance on the same ODE
    # dV/dx for V = cos(2 pi x) is -2 pi sin(2 pi x); pdot = -dV/dx
    def rhs(t, y):
        x, p = y
        return [p, 2.0 * np.pi * np.sin(2.0 * np.pi * x)]

    x0, v0 = 0.15, 0.9
    sol = solve_ivp(rhs, (0.0, 1.0), [x0, v0], rtol=1e-11, atol=1e-12)
    mine = flow(pendulum, PhasePoint(np.array([x0]), np.array([v0]), 0.0),
                0.0, 1.0)
    assert mine.x[0] == pytest.approx(wrap([sol.y[0, -1]])[0], abs=1e-7)
    assert mine.v[0] == pytest.approx(sol.y[1, -1], abs=1e-7)


def test_flow_many_batch_matches_single(pendulum):
    rng = np.random.default_rng(4)
    xs = rng.uniform(0, 1, (5, 1))
    vs = rng.normal(0, 1, (5, 1))
    X, V = flow_many(pendulum, xs, vs, 0.0, 0.7)
    for k in range(5):
        single = flow(pendulum, PhasePoint(xs[k], vs[k], 0.0), 0.0, 0.7)
        assert np.allclose(X[k], single.x, atol=1e-13)
        assert np.allclose(V[k], single.v, atol=1e-13)


def test_traveling_potential_values(traveling):
    pot = traveling.potential
    assert pot.value(np.array([0.3]), 0.0) == pytest.approx(
        0.2 * np.cos(2 * np.pi * 0.3))
    # wave moves with unit speed: V(x, t) = V(x - t, 0)
    assert pot.value(np.array([0.3]), 0.1) == pytest.approx(
        pot.value(np.array([0.2]), 0.0))


def test_two_mode_potential():
    pot = make_potential("two_mode", d=1, amplitude=0.7, amplitude2=0.3)
    x = np.array([0.2])
    expected = 0.7 * np.cos(2 * np.pi * 0.2) + 0.3 * np.cos(4 * np.pi * 0.2)
    assert pot.value(x, 0.0) == pytest.approx(expected)
    g = pot.grad(x, 0.0)
    fd = (pot.value(x + 1e-7, 0.0) - pot.value(x - 1e-7, 0.0)) / 2e-7
    assert g[0] == pytest.approx(fd, rel=1e-6)
