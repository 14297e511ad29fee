"""Discrete Monge-Kantorovich problems: exact LP, dual potentials, maps.

solve_primal runs a network simplex on the bipartite transportation
polytope with Bland-style deterministic pivoting (first negative reduced
cost in row-major order enters, lowest-index tied arc leaves), so repeated
runs produce identical plans.  solve_dual reads the node potentials off
the final basis tree and tightens them with two c-transform sweeps, after
which the pair satisfies both admissibility inequalities exactly.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .dynamics import LagrangianSpec, flow_many
from .manifold import GridSpec, pairwise_distance, wrap


class ImbalanceError(ValueError):
    """Source and target masses differ beyond tolerance."""


class SolverError(RuntimeError):
    pass


MASS_TOL = 1e-10


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: np.ndarray     # (n, d) torus points
    weights: np.ndarray   # (n,) nonnegative, summing to 1

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if atoms.shape[0] != w.shape[0]:
            raise ValueError("atoms and weights must have matching lengths")
        if np.any(w < -1e-12):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "atoms", wrap(atoms))
        object.__setattr__(self, "weights", np.maximum(w, 0.0))

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def d(self) -> int:
        return self.atoms.shape[1]


def uniform_measure(points) -> DiscreteMeasure:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    return DiscreteMeasure(points, np.full(n, 1.0 / n))


def dirac(point) -> DiscreteMeasure:
    return DiscreteMeasure(np.atleast_2d(point), np.array([1.0]))


@dataclass(frozen=True)
class TransportPlan:
    coupling: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure

    def __post_init__(self):
        res = self.marginal_residuals()
        if max(res) > MASS_TOL:
            raise ValueError(f"plan marginals violated by {max(res):.3e}")

    def marginal_residuals(self) -> tuple[float, float]:
        row = np.abs(self.coupling.sum(axis=1) - self.source.weights).max()
        col = np.abs(self.coupling.sum(axis=0) - self.target.weights).max()
        return float(row), float(col)

    def support(self, mass_tol: float = MASS_TOL):
        return np.argwhere(self.coupling > mass_tol)


@dataclass(frozen=True)
class PotentialPair:
    phi0: np.ndarray
    phi1: np.ndarray

    def admissibility_violation(self, cost: np.ndarray) -> float:
        """Worst violation of the two c-transform inequalities."""
        v1 = np.max(self.phi1 - (self.phi0[:, None] + cost).min(axis=0))
        v0 = np.max((self.phi1[None, :] - cost).max(axis=1) - self.phi0)
        return float(max(v1, v0, 0.0))


def _northwest_corner(a, b):
    n, m = len(a), len(b)
    flow = np.zeros((n, m))
    basis = np.zeros((n, m), dtype=bool)
    ra, rb = a.copy(), b.copy()
    i = j = 0
    while True:
        q = min(ra[i], rb[j])
        flow[i, j] = q
        basis[i, j] = True
        ra[i] -= q
        rb[j] -= q
        if i == n - 1 and j == m - 1:
            break
        if ra[i] == 0.0 and i < n - 1:
            i += 1
        elif j < m - 1:
            j += 1
        else:
            i += 1
    return flow, basis


def _tree_duals(cost, basis):
    n, m = cost.shape
    u = np.zeros(n)
    v = np.zeros(m)
    seen_u = np.zeros(n, dtype=bool)
    seen_v = np.zeros(m, dtype=bool)
    rows_of_col = [list(np.flatnonzero(basis[:, j])) for j in range(m)]
    cols_of_row = [list(np.flatnonzero(basis[i, :])) for i in range(n)]
    queue = deque()
    for i in range(n):
        if not seen_u[i]:
            u[i] = 0.0
            seen_u[i] = True
            queue.append(("r", i))
            while queue:
                kind, k = queue.popleft()
                if kind == "r":
                    for j in cols_of_row[k]:
                        if not seen_v[j]:
                            v[j] = cost[k, j] - u[k]
                            seen_v[j] = True
                            queue.append(("c", j))
                else:
                    for i2 in rows_of_col[k]:
                        if not seen_u[i2]:
                            u[i2] = cost[i2, k] - v[k]
                            seen_u[i2] = True
                            queue.append(("r", i2))
    return u, v


def _find_cycle(basis, i0, j0):
    """Path i0 -> j0 through basic arcs; returns the cycle's cells and signs."""
    n, m = basis.shape
    parent = {}
    start = ("r", i0)
    goal = ("c", j0)
    queue = deque([start])
    parent[start] = None
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        kind, k = node
        if kind == "r":
            for j in np.flatnonzero(basis[k, :]):
                nxt = ("c", int(j))
                if nxt not in parent:
                    parent[nxt] = node
                    queue.append(nxt)
        else:
            for i in np.flatnonzero(basis[:, k]):
                nxt = ("r", int(i))
                if nxt not in parent:
                    parent[nxt] = node
                    queue.append(nxt)
    if goal not in parent:
        raise SolverError("basis lost its spanning tree")
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()  # r i0, c jA, r iB, ..., c j0
    cells = [(i0, j0)]
    signs = [1]
    for k in range(len(path) - 1):
        a, b = path[k], path[k + 1]
        cell = (a[1], b[1]) if a[0] == "r" else (b[1], a[1])
        cells.append(cell)
        signs.append(-1 if k % 2 == 0 else 1)
    return cells, signs


def _network_simplex(cost, a, b):
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if abs(a.sum() - b.sum()) > 1e-9:
        raise ImbalanceError(
            f"total masses differ: {a.sum()!r} vs {b.sum()!r}")
    flow, basis = _northwest_corner(a, b)
    eps = 1e-11 * (1.0 + np.abs(cost).max())
    max_pivots = 50 * n * m + 1000
    for _ in range(max_pivots):
        u, v = _tree_duals(cost, basis)
        rc = cost - u[:, None] - v[None, :]
        rc[basis] = 0.0
        neg = (rc < -eps).ravel()
        idx = np.argmax(neg)
        if not neg[idx]:
            return flow, u, v
        i0, j0 = divmod(int(idx), m)
        cells, signs = _find_cycle(basis, i0, j0)
        theta = np.inf
        leave = None
        for cell, sg in zip(cells, signs):
            if sg < 0:
                f = flow[cell]
                if f < theta:
                    theta = f
                    leave = cell
                elif f == theta and cell < leave:
                    leave = cell
        if leave is None:
            raise SolverError("unbounded pivot in a bounded polytope")
        for cell, sg in zip(cells, signs):
            flow[cell] += sg * theta
        flow[leave] = 0.0
        basis[i0, j0] = True
        basis[leave] = False
    raise SolverError("network simplex exceeded the pivot budget")


def solve_kantorovich(cost, mu0: DiscreteMeasure, mu1: DiscreteMeasure):
    """Primal plan, tightened dual pair and both optimal values."""
    cost = np.asarray(cost, dtype=float)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if cost.shape != (mu0.n, mu1.n):
        raise ValueError("cost shape does not match measure sizes")
    flow, u, v = _network_simplex(cost, mu0.weights, mu1.weights)
    plan = TransportPlan(coupling=flow, source=mu0, target=mu1)
    primal = float(np.sum(flow * cost))
    phi0 = -u
    phi1 = (phi0[:, None] + cost).min(axis=0)
    phi0 = (phi1[None, :] - cost).max(axis=1)
    pair = PotentialPair(phi0=phi0, phi1=phi1)
    dual = float(phi1 @ mu1.weights - phi0 @ mu0.weights)
    return plan, pair, primal, dual


def solve_primal(cost, mu0: DiscreteMeasure, mu1: DiscreteMeasure):
    plan, _, primal, _ = solve_kantorovich(cost, mu0, mu1)
    return plan, primal


def solve_dual(cost, mu0: DiscreteMeasure, mu1: DiscreteMeasure):
    _, pair, _, dual = solve_kantorovich(cost, mu0, mu1)
    return pair, dual


@dataclass(frozen=True)
class SlacknessReport:
    worst: float
    worst_entry: tuple[int, int] | None
    n_checked: int
    mass_weighted_gap: float
    ok: bool


def check_slackness(plan: TransportPlan, pair: PotentialPair, cost,
                    tol: float = 1e-9,
                    mass_tol: float = MASS_TOL) -> SlacknessReport:
    """Verify phi1(j) - phi0(i) = c_ij on every cell carrying mass.

    mass_weighted_gap sums eta_ij * (c_ij - (phi1_j - phi0_i)) over the
    support; for an optimal plan and pair it equals the duality gap, and
    for a suboptimal plan it equals its excess cost over the optimum.
    """
    cost = np.asarray(cost, dtype=float)
    worst = 0.0
    entry = None
    count = 0
    weighted = 0.0
    for i, j in plan.support(mass_tol):
        slack = cost[i, j] - (pair.phi1[j] - pair.phi0[i])
        weighted += plan.coupling[i, j] * slack
        gap = abs(slack)
        count += 1
        if gap > worst:
            worst = float(gap)
            entry = (int(i), int(j))
    return SlacknessReport(worst=worst, worst_entry=entry, n_checked=count,
                           mass_weighted_gap=float(weighted), ok=worst <= tol)


def lemma_pair(cost, ix0: int) -> tuple[np.ndarray, np.ndarray]:
    """The admissible pair built from one source row: phi1 = c(x0, .)."""
    cost = np.asarray(cost, dtype=float)
    phi1 = cost[ix0, :].copy()
    phi0 = (phi1[None, :] - cost).max(axis=1)
    return phi0, phi1


def cost_from_pairs(ix: int, iy: int, pairs) -> float:
    """Lower bound on c(x_ix, y_iy): max over admissible pairs of phi1 - phi0."""
    best = -np.inf
    for phi0, phi1 in pairs:
        best = max(best, float(phi1[iy] - phi0[ix]))
    return best


@dataclass(frozen=True)
class MapExtraction:
    points: np.ndarray        # (n0, d) analytic image of each source atom
    velocities: np.ndarray    # (n0, d) initial velocities A^{-1} dphi0
    is_map: bool
    smooth_mask: np.ndarray   # atoms passing the differentiability proxy
    bad_fraction: float
    warned: bool


def grid_gradient(values, grid: GridSpec) -> np.ndarray:
    """Centered periodic differences of a grid field, shape (n_nodes, d)."""
    values = np.asarray(values, dtype=float)
    h = grid.spacing
    out = np.empty((grid.n_nodes, grid.d))
    for axis in range(grid.d):
        plus = values[grid.neighbor_indices(axis, +1)]
        minus = values[grid.neighbor_indices(axis, -1)]
        out[:, axis] = (plus - minus) / (2.0 * h)
    return out


def grid_second_difference(values, grid: GridSpec) -> np.ndarray:
    """Largest per-axis divided second difference at each node."""
    values = np.asarray(values, dtype=float)
    h = grid.spacing
    worst = np.zeros(grid.n_nodes)
    for axis in range(grid.d):
        plus = values[grid.neighbor_indices(axis, +1)]
        minus = values[grid.neighbor_indices(axis, -1)]
        d2 = np.abs(plus - 2.0 * values + minus) / h ** 2
        worst = np.maximum(worst, d2)
    return worst


def extract_map(plan: TransportPlan, phi0, grid: GridSpec,
                spec: LagrangianSpec, T: float,
                mass_tol: float = MASS_TOL, smooth_factor: float = 10.0,
                max_bad_fraction: float = 0.2,
                flow_steps: int | None = None) -> MapExtraction:
    """Monge map from the dual potential on a uniform source grid.

    The analytic map flows each atom with initial momentum dphi0 (centered
    differences) over [0, T].  Atoms whose divided second difference of
    phi0 exceeds smooth_factor * (Lipschitz estimate + 1) are flagged as
    proxies for non-differentiability; too many flags raise a warning.
    """
    phi0 = np.asarray(phi0, dtype=float)
    if phi0.shape[0] != grid.n_nodes or plan.source.n != grid.n_nodes:
        raise ValueError("phi0 and plan source must live on the grid")
    support_counts = (plan.coupling > mass_tol).sum(axis=1)
    is_map = bool(np.all(support_counts <= 1))
    grad = grid_gradient(phi0, grid)
    lip = float(np.abs(grad).max())
    d2 = grid_second_difference(phi0, grid)
    smooth = d2 <= smooth_factor * (lip + 1.0)
    bad_fraction = float(1.0 - smooth.mean())
    warned = bad_fraction > max_bad_fraction
    if warned:
        warnings.warn(
            f"degenerate potential: {bad_fraction:.1%} of atoms fail the "
            "differentiability proxy", RuntimeWarning, stacklevel=2)
    velocities = grad @ spec.kinetic_inv.T
    xs, _ = flow_many(spec, grid.points(), velocities, 0.0, T,
                      steps=flow_steps)
    return MapExtraction(points=xs, velocities=velocities, is_map=is_map,
                         smooth_mask=smooth, bad_fraction=bad_fraction,
                         warned=warned)


def wasserstein1_circle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact W1 on the circle via CDF matching with the optimal rotation."""
    if mu.d != 1 or nu.d != 1:
        raise ValueError("circle W1 requires 1-d measures")
    pos = np.concatenate([mu.atoms[:, 0], nu.atoms[:, 0]])
    sgn = np.concatenate([mu.weights, -nu.weights])
    order = np.argsort(pos, kind="stable")
    pos, sgn = pos[order], sgn[order]
    # merge coincident breakpoints
    uniq, inv = np.unique(pos, return_inverse=True)
    mass = np.zeros(len(uniq))
    np.add.at(mass, inv, sgn)
    G = np.cumsum(mass)
    lengths = np.diff(np.append(uniq, uniq[0] + 1.0))
    # minimize sum len * |G - theta| at the weighted median of G
    order = np.argsort(G, kind="stable")
    cum = np.cumsum(lengths[order])
    half = 0.5 * cum[-1]
    theta = G[order][np.searchsorted(cum, half)]
    return float(np.sum(lengths * np.abs(G - theta)))


def wasserstein1(mu: DiscreteMeasure, nu: DiscreteMeasure,
                 max_lp_atoms: int = 256, seed: int = 0) -> float:
    """W1 with the torus metric: CDF matching in 1-d, exact LP otherwise.

    Atom sets beyond max_lp_atoms are subsampled deterministically from
    the given seed before the LP.
    """
    if mu.d == 1:
        return wasserstein1_circle(mu, nu)
    mu = _subsample(mu, max_lp_atoms, seed)
    nu = _subsample(nu, max_lp_atoms, seed + 1)
    cost = pairwise_distance(mu.atoms, nu.atoms)
    _, value = solve_primal(cost, mu, nu)
    return float(value)


def _subsample(measure: DiscreteMeasure, limit: int, seed: int) -> DiscreteMeasure:
    if measure.n <= limit:
        return measure
    rng = np.random.default_rng(seed)
    idx = rng.choice(measure.n, size=limit, replace=True, p=measure.weights)
    atoms = measure.atoms[idx]
    return uniform_measure(atoms)
