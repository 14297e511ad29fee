import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from torusot.action import cost_matrix
from torusot.kantorovich import (DiscreteMeasure, ImbalanceError,
                                 PotentialPair, TransportPlan,
                                 check_slackness, cost_from_pairs, dirac,
                                 extract_map, lemma_pair, solve_dual,
                                 solve_kantorovich, solve_primal,
                                 uniform_measure, wasserstein1,
                                 wasserstein1_circle)
from torusot.manifold import GridSpec, min_displacement, wrap


def quad_cost(xs, ys, T=1.0):
    """Closed-form free-particle cost matrix min_k (dy - dx + k)^2 / (2T)."""
    xs = np.atleast_2d(xs)
    ys = np.atleast_2d(ys)
    diff = ys[None, :, :] - xs[:, None, :]
    diff -= np.round(diff)
    return np.sum(diff ** 2, axis=2) / (2.0 * T)


def random_measure(rng, n, d=1):
    atoms = rng.uniform(0, 1, (n, d))
    w = rng.uniform(0.1, 1.0, n)
    return DiscreteMeasure(atoms, w / w.sum())


# ------------------------------------------------------------------ types


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([[0.1]]), np.array([0.5]))  # mass != 1
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([[0.1], [0.2]]), np.array([1.5, -0.5]))


def test_plan_validates_marginals():
    mu = uniform_measure([[0.0], [0.5]])
    nu = uniform_measure([[0.1], [0.6]])
    with pytest.raises(ValueError):
        TransportPlan(coupling=np.array([[0.5, 0.5], [0.0, 0.0]]),
                      source=mu, target=nu)


# ------------------------------------------------------------------ primal


def test_dirac_to_dirac():
    mu, nu = dirac([0.2]), dirac([0.9])
    C = quad_cost([[0.2]], [[0.9]])
    plan, value = solve_primal(C, mu, nu)
    assert np.allclose(plan.coupling, [[1.0]])
    assert value == pytest.approx(C[0, 0])


def test_two_atom_diagonal_beats_crossed():
    mu = uniform_measure([[0.0], [0.5]])
    nu = uniform_measure([[0.1], [0.6]])
    C = quad_cost(mu.atoms, nu.atoms)
    plan, value = solve_primal(C, mu, nu)
    # enumeration oracle: the polytope has two extreme plans
    diagonal = 0.5 * (C[0, 0] + C[1, 1])
    crossed = 0.5 * (C[0, 1] + C[1, 0])
    assert value == pytest.approx(min(diagonal, crossed), abs=1e-15)
    assert value == pytest.approx(0.005, abs=1e-12)
    assert crossed == pytest.approx(0.08, abs=1e-12)
    assert plan.coupling[0, 0] == pytest.approx(0.5)
    assert plan.coupling[1, 1] == pytest.approx(0.5)


def test_identity_plan_for_zero_diagonal():
    rng = np.random.default_rng(0)
    mu = random_measure(rng, 6)
    C = quad_cost(mu.atoms, mu.atoms)
    plan, value = solve_primal(C, mu, mu)
    assert value == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(np.diag(plan.coupling), mu.weights, atol=1e-12)


def test_imbalance_rejected():
    mu = uniform_measure([[0.0], [0.5]])
    bad = DiscreteMeasure.__new__(DiscreteMeasure)
    object.__setattr__(bad, "atoms", np.array([[0.1]]))
    object.__setattr__(bad, "weights", np.array([0.7]))
    with pytest.raises(ImbalanceError):
        solve_primal(np.zeros((2, 1)), mu, bad)


def test_brute_force_oracle_small_instances():
    # n <= 8 equal weights: LP value equals the min over all n! assignments
    rng = np.random.default_rng(123)
    for trial in range(50):
        n = int(rng.integers(2, 9))
        mu = uniform_measure(rng.uniform(0, 1, (n, 1)))
        nu = uniform_measure(rng.uniform(0, 1, (n, 1)))
        C = quad_cost(mu.atoms, nu.atoms)
        _, value = solve_primal(C, mu, nu)
        brute = min(sum(C[i, p[i]] for i in range(n)) / n
                    for p in itertools.permutations(range(n)))
        assert value == pytest.approx(brute, rel=1e-12, abs=1e-13)


def test_against_linear_sum_assignment():
    rng = np.random.default_rng(77)
    for n in (8, 23, 40):
        C = rng.uniform(0, 1, (n, n))
        mu = uniform_measure(rng.uniform(0, 1, (n, 1)))
        nu = uniform_measure(rng.uniform(0, 1, (n, 1)))
        _, value = solve_primal(C, mu, nu)
        ri, ci = linear_sum_assignment(C)
        assert value == pytest.approx(C[ri, ci].sum() / n, rel=1e-12)


# ------------------------------------------------------------------ dual


def test_dual_dirac_to_dirac():
    mu, nu = dirac([0.2]), dirac([0.9])
    C = quad_cost([[0.2]], [[0.9]])
    pair, value = solve_dual(C, mu, nu)
    assert value == pytest.approx(C[0, 0], abs=1e-14)


def test_dual_two_atom_matches_primal():
    mu = uniform_measure([[0.0], [0.5]])
    nu = uniform_measure([[0.1], [0.6]])
    C = quad_cost(mu.atoms, nu.atoms)
    pair, dual = solve_dual(C, mu, nu)
    assert dual == pytest.approx(0.005, abs=1e-10)
    assert pair.admissibility_violation(C) <= 1e-12


def test_dual_self_transport_zero():
    mu = uniform_measure(np.linspace(0, 1, 7, endpoint=False)[:, None])
    C = quad_cost(mu.atoms, mu.atoms)
    pair, dual = solve_dual(C, mu, mu)
    assert dual == pytest.approx(0.0, abs=1e-14)
    assert pair.admissibility_violation(C) <= 1e-12


def test_strong_duality_and_slackness_random_instances():
    rng = np.random.default_rng(2024)
    for trial in range(20):
        n = int(rng.integers(2, 65))
        m = int(rng.integers(2, 65))
        mu = random_measure(rng, n)
        nu = random_measure(rng, m)
        C = rng.uniform(0, 2, (n, m))
        plan, pair, primal, dual = solve_kantorovich(C, mu, nu)
        assert abs(primal - dual) <= 1e-9
        assert check_slackness(plan, pair, C).worst <= 1e-9
        row, col = plan.marginal_residuals()
        assert max(row, col) <= 1e-10
        assert pair.admissibility_violation(C) <= 1e-9


def test_weak_duality_any_admissible_pair():
    rng = np.random.default_rng(5)
    mu = random_measure(rng, 12)
    nu = random_measure(rng, 9)
    C = quad_cost(mu.atoms, nu.atoms)
    _, primal = solve_primal(C, mu, nu)
    for _ in range(25):
        phi1 = rng.uniform(-1, 1, nu.n)
        phi0 = (phi1[None, :] - C).max(axis=1)
        value = phi1 @ nu.weights - phi0 @ mu.weights
        assert value <= primal + 1e-9


# ------------------------------------------------------------- slackness


def test_slackness_flags_perturbed_potential():
    mu = uniform_measure([[0.0], [0.5]])
    nu = uniform_measure([[0.1], [0.6]])
    C = quad_cost(mu.atoms, nu.atoms)
    plan, pair, _, _ = solve_kantorovich(C, mu, nu)
    assert check_slackness(plan, pair, C).worst <= 1e-9
    bad_phi0 = pair.phi0.copy()
    bad_phi0[0] += 0.1
    report = check_slackness(plan, PotentialPair(bad_phi0, pair.phi1), C)
    assert report.worst == pytest.approx(0.1, abs=1e-12)


def test_slackness_crossed_plan_violation():
    mu = uniform_measure([[0.0], [0.5]])
    nu = uniform_measure([[0.1], [0.6]])
    C = quad_cost(mu.atoms, nu.atoms)
    _, pair, _, _ = solve_kantorovich(C, mu, nu)
    crossed = TransportPlan(coupling=np.array([[0.0, 0.5], [0.5, 0.0]]),
                            source=mu, target=nu)
    report = check_slackness(crossed, pair, C)
    # enumerated: the crossed plan exceeds the optimum by 0.08 - 0.005;
    # the mass-weighted slack equals that excess whatever dual the
    # (degenerate) LP returned, and some entry carries at least its share
    assert report.mass_weighted_gap == pytest.approx(0.075, abs=1e-10)
    assert not report.ok
    assert report.worst >= 0.075 - 1e-10


# ------------------------------------------------------- cost from pairs


def test_lemma_pair_recovers_cost():
    rng = np.random.default_rng(8)
    pts = rng.uniform(0, 1, (16, 1))
    C = quad_cost(pts, pts)
    for ix0 in (0, 5, 11):
        phi0, phi1 = lemma_pair(C, ix0)
        pair = PotentialPair(phi0, phi1)
        assert pair.admissibility_violation(C) <= 1e-12
        for iy in range(16):
            assert phi1[iy] - phi0[ix0] == pytest.approx(C[ix0, iy], abs=1e-12)


def test_cost_from_pairs_trivial_bound():
    C = quad_cost([[0.0], [0.4]], [[0.1], [0.7]])
    pairs = [(np.zeros(2), np.zeros(2))]
    assert cost_from_pairs(0, 1, pairs) == 0.0   # c >= 0: valid lower bound


def test_cost_from_pairs_recovers_matrix(free_spec):
    grid = GridSpec(16, 1)
    pts = grid.points()
    C = cost_matrix(free_spec, pts, pts, 0.0, 1.0)
    pairs = [lemma_pair(C, ix) for ix in range(16)]
    for ix in range(16):
        for iy in range(0, 16, 3):
            bound = cost_from_pairs(ix, iy, pairs)
            assert bound <= C[ix, iy] + 1e-9
            assert bound == pytest.approx(C[ix, iy], abs=1e-9)


# ------------------------------------------------------------- map


def sine_pushforward_atoms(n):
    x = np.arange(n) / n
    return wrap((x + 0.1 * np.sin(2 * np.pi * x))[:, None])


def monotone_circle_map(grid_pts, targets):
    """Oracle: best cyclic shift of the sorted-to-sorted matching."""
    n = grid_pts.shape[0]
    order = np.argsort(targets[:, 0], kind="stable")
    sorted_targets = targets[order]
    best = None
    best_val = np.inf
    for shift in range(n):
        assign = np.roll(np.arange(n), -shift)
        d = min_displacement(grid_pts, sorted_targets[assign])
        val = float(np.sum(d ** 2) / 2.0)
        if val < best_val:
            best_val = val
            best = sorted_targets[assign]
    return best, best_val


def test_extract_map_uniform_to_pushforward(free_spec):
    grid = GridSpec(64, 1)
    mu = uniform_measure(grid.points())
    targets = sine_pushforward_atoms(64)
    nu = uniform_measure(targets)
    C = quad_cost(mu.atoms, nu.atoms)
    plan, pair, _, _ = solve_kantorovich(C, mu, nu)
    ext = extract_map(plan, pair.phi0, grid, free_spec, 1.0)
    assert ext.is_map
    oracle_targets, _ = monotone_circle_map(grid.points(), targets)
    gap = np.linalg.norm(min_displacement(ext.points, oracle_targets), axis=1)
    assert gap.max() <= grid.spacing
    assert ext.bad_fraction == 0.0


def test_extract_map_identity(free_spec):
    grid = GridSpec(32, 1)
    mu = uniform_measure(grid.points())
    C = quad_cost(mu.atoms, mu.atoms)
    plan, pair, _, _ = solve_kantorovich(C, mu, mu)
    ext = extract_map(plan, pair.phi0, grid, free_spec, 1.0)
    assert ext.is_map
    assert np.allclose(np.diag(plan.coupling), mu.weights, atol=1e-12)
    # admissibility pins the discrete dual only up to slope h/2, so the
    # analytic map can drift that far from the exact identity
    gap = np.linalg.norm(min_displacement(ext.points, grid.points()), axis=1)
    assert gap.max() <= 0.5 * grid.spacing + 1e-12


def test_extract_map_single_target_is_map(free_spec):
    grid = GridSpec(16, 1)
    mu = uniform_measure(grid.points())
    nu = dirac([0.5])
    C = quad_cost(mu.atoms, nu.atoms)
    plan, pair, _, _ = solve_kantorovich(C, mu, nu)
    with pytest.warns(RuntimeWarning):
        # phi0 = -c(., 0.5) has a genuine kink at the antipode
        ext = extract_map(plan, pair.phi0, grid, free_spec, 1.0,
                          max_bad_fraction=0.01)
    assert ext.is_map


def test_extract_map_flags_kink_atoms(free_spec):
    grid = GridSpec(64, 1)
    mu = uniform_measure(grid.points())
    nu = dirac([0.5])
    C = quad_cost(mu.atoms, nu.atoms)
    plan, pair, _, _ = solve_kantorovich(C, mu, nu)
    ext = extract_map(plan, pair.phi0, grid, free_spec, 1.0,
                      max_bad_fraction=0.2)
    # the cut locus of y = 0.5 is x = 0: a few atoms flagged, most smooth
    assert 0.0 < ext.bad_fraction <= 0.1
    assert not ext.smooth_mask[0]


# ------------------------------------------------------------- W1


def test_wasserstein1_circle_known_values():
    mu = dirac([0.1])
    nu = dirac([0.3])
    assert wasserstein1_circle(mu, nu) == pytest.approx(0.2, abs=1e-12)
    nu2 = dirac([0.9])
    assert wasserstein1_circle(mu, nu2) == pytest.approx(0.2, abs=1e-12)


def test_wasserstein1_circle_matches_lp():
    rng = np.random.default_rng(31)
    from torusot.manifold import pairwise_distance
    for _ in range(20):
        n, m = int(rng.integers(2, 12)), int(rng.integers(2, 12))
        mu = random_measure(rng, n)
        nu = random_measure(rng, m)
        cdf_val = wasserstein1_circle(mu, nu)
        C = pairwise_distance(mu.atoms, nu.atoms)
        _, lp_val = solve_primal(C, mu, nu)
        assert cdf_val == pytest.approx(lp_val, abs=1e-10)


def test_wasserstein1_2d_lp():
    mu = uniform_measure([[0.0, 0.0], [0.5, 0.5]])
    nu = uniform_measure([[0.1, 0.0], [0.6, 0.5]])
    assert wasserstein1(mu, nu) == pytest.approx(0.1, abs=1e-12)
