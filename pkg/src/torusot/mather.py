"""Time-periodic mode: minimal average action, invariant measures, graphs.

The minimized functional is linear over the polytope of coupling matrices
with equal marginals and unit total mass.  The extreme points of that
polytope are uniform measures on simple directed cycles of grid nodes, so
the optimum equals the minimum mean cycle of the cost matrix (computed by
Karp's recursion) and an optimal coupling can be assembled from cycles of
the tight-arc graph.  Degenerate optima (symmetric wells) are resolved by
mixing one canonical cycle from every strongly connected tight component,
which keeps the output deterministic and respects model symmetries.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .action import BvpOptions, cost_matrix, curve_end_velocities, minimize_bvp
from .dynamics import LagrangianSpec, flow_many
from .kantorovich import DiscreteMeasure, TransportPlan
from .manifold import GridSpec, pairwise_distance


class PeriodicityError(ValueError):
    pass


def karp_min_mean_cycle(W: np.ndarray) -> float:
    """Minimum mean cycle value of a dense arc-cost matrix (Karp)."""
    n = W.shape[0]
    d = np.full((n + 1, n), np.inf)
    d[0, 0] = 0.0
    for k in range(1, n + 1):
        d[k] = np.min(d[k - 1][:, None] + W, axis=0)
    ratios = np.full(n, -np.inf)
    for v in range(n):
        if not np.isfinite(d[n, v]):
            continue
        ks = np.arange(n)
        finite = np.isfinite(d[ks, v])
        vals = (d[n, v] - d[ks[finite], v]) / (n - ks[finite])
        ratios[v] = np.max(vals)
    return float(np.min(ratios[np.isfinite(ratios)]))


def _bellman_potentials(W: np.ndarray, alpha: float) -> np.ndarray:
    """Shortest-walk potentials for the reduced costs W - alpha."""
    n = W.shape[0]
    red = W - alpha
    p = np.zeros(n)
    for _ in range(n):
        new = np.minimum(p, np.min(p[:, None] + red, axis=0))
        if np.allclose(new, p, rtol=0.0, atol=1e-15):
            p = new
            break
        p = new
    return p


def _strongly_connected(adj_mask: np.ndarray):
    """Tarjan SCCs of a dense boolean adjacency matrix (iterative)."""
    n = adj_mask.shape[0]
    index = np.full(n, -1)
    low = np.zeros(n, dtype=int)
    on_stack = np.zeros(n, dtype=bool)
    stack = []
    comps = []
    counter = [0]
    succ = [list(np.flatnonzero(adj_mask[v])) for v in range(n)]
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter[0]
                counter[0] += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while pi < len(succ[v]):
                w = succ[v][pi]
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
            if work:
                u, _ = work[-1]
                low[u] = min(low[u], low[v])
    return comps


def _shortest_cycle_through(adj_mask: np.ndarray, start: int):
    """BFS shortest cycle through start inside the tight graph (deterministic)."""
    n = adj_mask.shape[0]
    if adj_mask[start, start]:
        return [start]
    parent = np.full(n, -1)
    seen = np.zeros(n, dtype=bool)
    frontier = [start]
    seen[start] = True
    while frontier:
        nxt = []
        for v in frontier:
            for w in np.flatnonzero(adj_mask[v]):
                if w == start:
                    cycle = [int(v)]
                    while cycle[-1] != start:
                        cycle.append(int(parent[cycle[-1]]))
                    cycle.reverse()
                    return cycle
                if not seen[w]:
                    seen[w] = True
                    parent[w] = v
                    nxt.append(int(w))
        frontier = nxt
    return None


def optimal_cycles(W: np.ndarray, alpha: float, tight_tol: float | None = None):
    """One canonical minimum-mean cycle per strongly connected tight component."""
    n = W.shape[0]
    if tight_tol is None:
        tight_tol = 1e-8 * (1.0 + float(np.abs(W).max()))
    p = _bellman_potentials(W, alpha)
    reduced = W - alpha + p[:, None] - p[None, :]
    tight = reduced <= tight_tol
    cycles = []
    comps = sorted(_strongly_connected(tight), key=lambda c: c[0])
    for comp in comps:
        sub = np.zeros_like(tight)
        comp_arr = np.array(comp)
        sub[np.ix_(comp_arr, comp_arr)] = tight[np.ix_(comp_arr, comp_arr)]
        if len(comp) == 1 and not tight[comp[0], comp[0]]:
            continue
        cycle = _shortest_cycle_through(sub, comp[0])
        if cycle is not None:
            cycles.append(cycle)
    if not cycles:
        raise RuntimeError("no tight cycle found; alpha estimate inconsistent")
    return cycles


@dataclass(frozen=True)
class MatherSolution:
    alpha: float
    mu: DiscreteMeasure
    plan: TransportPlan
    cycles: list
    grid: GridSpec
    T: float
    diagnostics: dict = field(default_factory=dict)


def alpha_lp(spec: LagrangianSpec, grid: GridSpec,
             opts: BvpOptions = BvpOptions(), T: float = 1.0,
             cache_dir: str | None = None,
             cost: np.ndarray | None = None) -> MatherSolution:
    """Minimal average action over couplings with equal marginals.

    Solves min sum c_ij eta_ij over eta >= 0 with matching row and column
    sums and unit total mass, for the cost c_0^T on the grid; the reported
    alpha is the optimum divided by T (average action per unit time).
    """
    if spec.time_period is None:
        raise PeriodicityError("alpha_lp needs a time-periodic spec "
                               "(set time_period, 1 for the standard mode)")
    if abs(T - round(T)) > 1e-12 or T < 1:
        raise ValueError("T must be a positive integer multiple of the period")
    pts = grid.points()
    if cost is None:
        cost = cost_matrix(spec, pts, pts, 0.0, float(T), opts, cache_dir)
    value = karp_min_mean_cycle(cost)
    cycles = optimal_cycles(cost, value)
    n = grid.n_nodes
    eta = np.zeros((n, n))
    share = 1.0 / len(cycles)
    for cycle in cycles:
        arc_mass = share / len(cycle)
        for a in range(len(cycle)):
            i = cycle[a]
            j = cycle[(a + 1) % len(cycle)]
            eta[i, j] += arc_mass
    mu_w = eta.sum(axis=1)
    mu = DiscreteMeasure(pts, mu_w)
    plan = TransportPlan(coupling=eta, source=mu, target=mu)
    marg = float(np.abs(eta.sum(axis=1) - eta.sum(axis=0)).max())
    return MatherSolution(alpha=value / T, mu=mu, plan=plan, cycles=cycles,
                          grid=grid, T=float(T),
                          diagnostics={"marginal_gap": marg,
                                       "lp_value": value,
                                       "n_cycles": len(cycles)})


@dataclass(frozen=True)
class PhaseMeasure:
    x: np.ndarray      # (k, d)
    v: np.ndarray      # (k, d)
    mass: np.ndarray   # (k,)

    @property
    def n(self) -> int:
        return self.x.shape[0]


def mather_measure(solution: MatherSolution, spec: LagrangianSpec,
                   opts: BvpOptions = BvpOptions()) -> PhaseMeasure:
    """Initial phase-space measure: velocity of each support atom's extremal."""
    pts = solution.grid.points()
    xs, vs, ms = [], [], []
    for cycle in solution.cycles:
        share = 1.0 / (len(solution.cycles) * len(cycle))
        for a in range(len(cycle)):
            i = cycle[a]
            j = cycle[(a + 1) % len(cycle)]
            res = minimize_bvp(spec, pts[i], pts[j], 0.0, solution.T, opts)
            v0, _ = curve_end_velocities(spec, res.curve)
            xs.append(pts[i])
            vs.append(v0)
            ms.append(share)
    return PhaseMeasure(x=np.array(xs), v=np.array(vs), mass=np.array(ms))


def phase_wasserstein1(m0: PhaseMeasure, m1: PhaseMeasure) -> float:
    """W1 in phase space for the product metric dist(x,x') + |v - v'|."""
    from .kantorovich import _network_simplex

    cost = pairwise_distance(m0.x, m1.x)
    vdiff = np.linalg.norm(m0.v[:, None, :] - m1.v[None, :, :], axis=2)
    cost = cost + vdiff
    flow, _, _ = _network_simplex(cost, m0.mass / m0.mass.sum(),
                                  m1.mass / m1.mass.sum())
    return float(np.sum(flow * cost))


def invariance_check(m0: PhaseMeasure, spec: LagrangianSpec,
                     steps: int | None = None, T: float = 1.0) -> float:
    """W1 defect between m0 and its image under the period-T flow."""
    x1, v1 = flow_many(spec, m0.x, m0.v, 0.0, T, steps)
    m1 = PhaseMeasure(x=x1, v=v1, mass=m0.mass.copy())
    return phase_wasserstein1(m0, m1)


def alpha_T_check(spec: LagrangianSpec, grid: GridSpec, T_values,
                  opts: BvpOptions = BvpOptions(),
                  cache_dir: str | None = None) -> dict:
    """alpha_T for each integer horizon; they agree in the continuum limit."""
    alphas = {}
    for T in T_values:
        sol = alpha_lp(spec, grid, opts, T=float(T), cache_dir=cache_dir)
        alphas[int(T)] = sol.alpha
    base = alphas[min(alphas)]
    max_dev = max(abs(a - base) for a in alphas.values())
    return {"alpha_T": alphas, "max_deviation_from_first": float(max_dev)}


@dataclass(frozen=True)
class GraphReport:
    max_ratio: float
    worst_pair: tuple | None
    k_bound: float
    merge_tol: float
    ok: bool
    n_pairs: int


def graph_check(m0: PhaseMeasure, k_bound: float,
                merge_tol: float = 1e-9) -> GraphReport:
    """Verify |v - v'| <= k_bound * dist(x, x') + merge_tol over support pairs."""
    n = m0.n
    worst = 0.0
    worst_pair = None
    ok = True
    n_pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = float(np.linalg.norm(
                (m0.x[i] - m0.x[j]) - np.round(m0.x[i] - m0.x[j])))
            dv = float(np.linalg.norm(m0.v[i] - m0.v[j]))
            if dv > k_bound * dx + merge_tol:
                ok = False
            if dx > merge_tol:
                n_pairs += 1
                ratio = dv / dx
                if ratio > worst:
                    worst = ratio
                    worst_pair = (i, j)
    return GraphReport(max_ratio=worst, worst_pair=worst_pair,
                       k_bound=k_bound, merge_tol=merge_tol, ok=ok,
                       n_pairs=n_pairs)
