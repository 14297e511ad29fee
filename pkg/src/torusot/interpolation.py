"""Transport interpolations: particle paths, triangle equality, residuals.

The interpolation is built Lagrangian-first: every plan entry with mass
spawns the minimizing extremal between its atoms, and mu_t collects the
particle positions.  The Eulerian description (flowing with the masked
velocity field) and the additivity of costs over sub-intervals are then
verified against this construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .action import BvpOptions, DiscreteCurve, cost_matrix, minimize_bvp
from .dynamics import LagrangianSpec
from .hamilton_jacobi import VectorFieldEstimate
from .kantorovich import (DiscreteMeasure, TransportPlan, solve_primal,
                          wasserstein1)
from .manifold import min_displacement, wrap


@dataclass(frozen=True)
class Particle:
    curve: DiscreteCurve
    mass: float
    i: int
    j: int


@dataclass(frozen=True)
class InterpolationPath:
    times: np.ndarray
    particles: list
    measures: list               # DiscreteMeasure per sampled time

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def measure_at(self, t: float) -> DiscreteMeasure:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise ValueError(f"time {t} was not sampled")
        return self.measures[k]

    def positions_at(self, t: float) -> np.ndarray:
        return np.array([wrap(p.curve.position(t)) for p in self.particles])


def interpolate(plan: TransportPlan, spec: LagrangianSpec, times,
                opts: BvpOptions = BvpOptions(),
                mass_tol: float = 1e-12) -> InterpolationPath:
    """Particle interpolation of an optimal plan over sampled times.

    times must start at 0, end at T and sit on the extremal knot grid
    (multiples of (t-s)/N), so positions are read off knots exactly.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or times[-1] <= 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must increase from 0 to T")
    T = float(times[-1])
    particles = []
    total = 0.0
    for i, j in plan.support(mass_tol):
        res = minimize_bvp(spec, plan.source.atoms[i], plan.target.atoms[j],
                           0.0, T, opts)
        mass = float(plan.coupling[i, j])
        particles.append(Particle(curve=res.curve, mass=mass,
                                  i=int(i), j=int(j)))
        total += mass
    measures = []
    masses = np.array([p.mass for p in particles]) / total
    for t in times:
        atoms = np.array([wrap(p.curve.position(t)) for p in particles])
        measures.append(DiscreteMeasure(atoms, masses))
    return InterpolationPath(times=times, particles=particles,
                             measures=measures)


@dataclass(frozen=True)
class TriangleReport:
    t1: float
    t2: float
    t3: float
    c13: float
    c12: float
    c23: float
    defect: float
    tol: float
    ok: bool


def verify_triangle(path: InterpolationPath, spec: LagrangianSpec, triple,
                    opts: BvpOptions = BvpOptions(),
                    cost_accuracy: float = 1e-9,
                    cache_dir: str | None = None) -> TriangleReport:
    """Check C(t1,t3) = C(t1,t2) + C(t2,t3) on the interpolated measures."""
    t1, t2, t3 = triple
    if not t1 < t2 < t3:
        raise ValueError("need t1 < t2 < t3")
    m1, m2, m3 = (path.measure_at(t) for t in (t1, t2, t3))

    def kanto(ma, mb, s, t):
        C = cost_matrix(spec, ma.atoms, mb.atoms, s, t, opts, cache_dir)
        _, value = solve_primal(C, ma, mb)
        return value

    c13 = kanto(m1, m3, t1, t3)
    c12 = kanto(m1, m2, t1, t2)
    c23 = kanto(m2, m3, t2, t3)
    defect = abs(c13 - c12 - c23)
    tol = cost_accuracy * max(m.n for m in (m1, m2, m3))
    return TriangleReport(t1=t1, t2=t2, t3=t3, c13=c13, c12=c12, c23=c23,
                          defect=defect, tol=tol, ok=defect <= tol)


@dataclass(frozen=True)
class FlowReport:
    s: float
    t: float
    max_deviation: float
    w1: float
    coverage_warnings: int


def flow_consistency(path: InterpolationPath, fld: VectorFieldEstimate,
                     s: float, t: float, substeps_per_slice: int = 16,
                     coverage_radius: float | None = None) -> FlowReport:
    """Push particles from time s to t with the nearest-node field.

    RK4 time stepping; at each stage the velocity is looked up at the
    nearest masked node of the nearest sampled slice.  Reports the worst
    particle deviation from its stored position and the Wasserstein-1
    distance between the pushed measure and mu_t.
    """
    if fld.n == 0:
        raise ValueError("velocity field estimate is empty")
    slice_times = np.unique(fld.times)
    if coverage_radius is None:
        # between slice centers a particle drifts up to v * gap / 2 from
        # the nodes masked at the nearest slice
        vmax = float(np.linalg.norm(fld.velocities, axis=1).max())
        gap = float(np.diff(slice_times).max()) if slice_times.size > 1 else 0.0
        coverage_radius = 2.0 * fld.grid.spacing + 0.5 * vmax * gap
    warnings_count = 0

    def lookup(x, tau):
        nonlocal warnings_count
        k = int(np.argmin(np.abs(slice_times - tau)))
        sel = np.flatnonzero(np.isclose(fld.times, slice_times[k]))
        diff = fld.positions[sel] - x[None, :]
        diff -= np.round(diff)
        dist = np.linalg.norm(diff, axis=1)
        best = int(np.argmin(dist))
        if dist[best] > coverage_radius:
            warnings_count += 1
        return fld.velocities[sel[best]]

    n_slices = max(1, len([u for u in slice_times if s <= u <= t]))
    nsteps = substeps_per_slice * n_slices
    dt = (t - s) / nsteps
    xs = path.positions_at(s)
    for step in range(nsteps):
        tau = s + step * dt
        for p in range(xs.shape[0]):
            x = xs[p]
            k1 = lookup(x, tau)
            k2 = lookup(wrap(x + 0.5 * dt * k1), tau + 0.5 * dt)
            k3 = lookup(wrap(x + 0.5 * dt * k2), tau + 0.5 * dt)
            k4 = lookup(wrap(x + dt * k3), tau + dt)
            xs[p] = wrap(x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
    target = path.positions_at(t)
    dev = np.linalg.norm(min_displacement(xs, target), axis=1)
    masses = np.array([p.mass for p in path.particles])
    masses = masses / masses.sum()
    pushed = DiscreteMeasure(xs, masses)
    w1 = wasserstein1(pushed, path.measure_at(t))
    return FlowReport(s=s, t=t, max_deviation=float(dev.max()),
                      w1=float(w1), coverage_warnings=warnings_count)


def _test_functions(d: int):
    """Products of low-order Fourier modes in x and polynomials in t."""
    fns = []

    def add(name, fx, dfx):
        for p, tp in (("1", lambda t: np.ones_like(t)),
                      ("t", lambda t: t),
                      ("t^2", lambda t: t * t)):
            dtp = {"1": lambda t: np.zeros_like(t),
                   "t": lambda t: np.ones_like(t),
                   "t^2": lambda t: 2.0 * t}[p]
            fns.append((f"{name}*{p}", fx, dfx, tp, dtp))

    ones = lambda x: np.ones(x.shape[0])
    zeros = lambda x: np.zeros(x.shape)
    add("1", ones, zeros)
    for axis in range(d):
        for k in (1, 2):
            w = 2.0 * np.pi * k

            def cos_f(x, axis=axis, w=w):
                return np.cos(w * x[:, axis])

            def cos_g(x, axis=axis, w=w):
                g = np.zeros(x.shape)
                g[:, axis] = -w * np.sin(w * x[:, axis])
                return g

            def sin_f(x, axis=axis, w=w):
                return np.sin(w * x[:, axis])

            def sin_g(x, axis=axis, w=w):
                g = np.zeros(x.shape)
                g[:, axis] = w * np.cos(w * x[:, axis])
                return g

            add(f"cos{k}x{axis}", cos_f, cos_g)
            add(f"sin{k}x{axis}", sin_f, sin_g)
    return fns


@dataclass(frozen=True)
class ContinuityReport:
    residuals: dict
    max_residual: float


def continuity_residual(path: InterpolationPath,
                        test_functions=None) -> ContinuityReport:
    """Weak continuity-equation residual along the particle curves.

    For each test function f the transport pairing
    sum_particles m * int (d_t f + d_x f . gamma_dot) dt is formed by
    midpoint quadrature on the stored extremal knots and compared with the
    boundary term int f_T dmu_T - int f_0 dmu_0.
    """
    d = path.measures[0].d
    fns = test_functions if test_functions is not None else _test_functions(d)
    mu0, muT = path.measures[0], path.measures[-1]
    masses = np.array([p.mass for p in path.particles])
    masses = masses / masses.sum()
    residuals = {}
    worst = 0.0
    for name, fx, dfx, tp, dtp in fns:
        acc = 0.0
        for p, mass in zip(path.particles, masses):
            z = p.curve.points
            h = p.curve.h
            mid = wrap(0.5 * (z[:-1] + z[1:]))
            tau = np.asarray(p.curve.times[:-1]) + 0.5 * h
            v = np.diff(z, axis=0) / h
            ft = dtp(tau) * fx(mid)
            fx_dot_v = tp(tau) * np.einsum("ka,ka->k", dfx(mid), v)
            acc += mass * h * float(np.sum(ft + fx_dot_v))
        T = path.T
        boundary = (float(tp(np.array([T]))[0] * (fx(muT.atoms) @ muT.weights))
                    - float(tp(np.array([0.0]))[0] * (fx(mu0.atoms) @ mu0.weights)))
        res = abs(acc - boundary)
        residuals[name] = res
        worst = max(worst, res)
    return ContinuityReport(residuals=residuals, max_residual=worst)
