"""Boundary-value action minimization: costs c_s^t, extremals, cost matrices.

The cost from x at time s to y at time t is the minimal integrated
Lagrangian over curves joining the two points.  Curves are discretized as
N+1 uniformly spaced knots in the universal cover, the integral by the
midpoint rule, and the minimum taken over winding classes of the lifted
endpoint.  The curve count per unit time is fixed (not the total count),
so costs over different horizons share one discretization scale and
concatenations of discrete curves remain admissible competitors.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .dynamics import LagrangianSpec
from .manifold import winding_offsets, wrap


class ConvergenceError(RuntimeError):
    """BVP descent failed; carries the best attempt found."""

    def __init__(self, message, best=None, entry=None):
        super().__init__(message)
        self.best = best
        self.entry = entry


@dataclass(frozen=True)
class BvpOptions:
    knots_per_unit: int = 64
    min_knots: int = 8
    knots: int | None = None          # explicit override of the knot count
    winding_range: int = 2
    grad_tol: float = 1e-9
    descent_max: int = 500
    newton_max: int = 60
    newton_switch: float = 0.5        # gradient sup-norm handing over to Newton

    def knot_count(self, duration: float) -> int:
        if self.knots is not None:
            return max(1, int(self.knots))
        return max(self.min_knots, int(round(self.knots_per_unit * duration)))

    def to_dict(self) -> dict:
        return {
            "knots_per_unit": self.knots_per_unit,
            "min_knots": self.min_knots,
            "knots": self.knots,
            "winding_range": self.winding_range,
            "grad_tol": self.grad_tol,
            "descent_max": self.descent_max,
            "newton_max": self.newton_max,
            "newton_switch": self.newton_switch,
        }


@dataclass(frozen=True)
class DiscreteCurve:
    """Uniform knots of a lifted curve; endpoints fixed by the BVP."""

    times: np.ndarray          # (N+1,), strictly increasing, uniform
    points: np.ndarray         # (N+1, d) in the universal cover
    winding: np.ndarray        # (d,) integer endpoint class

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0])

    def position(self, t: float) -> np.ndarray:
        """Knot-aligned evaluation; t must sit on a knot up to 1e-9."""
        k = (t - self.times[0]) / self.h
        ki = int(round(k))
        if abs(k - ki) > 1e-9 * max(1.0, abs(k)) + 1e-9:
            raise ValueError(f"time {t} is not aligned with the curve knots")
        return self.points[ki]


@dataclass(frozen=True)
class CostResult:
    value: float
    curve: DiscreteCurve
    converged: bool
    grad_norm: float


def _kernel_args(spec: LagrangianSpec, opts: BvpOptions):
    amps, waves, omegas, phases = spec.pot_arrays()
    lam_min, lam_max = spec.eig_bounds
    vmax = spec.potential.max_abs()
    windings = winding_offsets(opts.winding_range, spec.d)
    return dict(A=spec.kinetic, Ainv=spec.kinetic_inv, amps=amps,
                waves=waves, omegas=omegas, phases=phases,
                windings=windings.astype(float),
                descent_max=opts.descent_max, newton_max=opts.newton_max,
                gtol=opts.grad_tol, newton_switch=opts.newton_switch,
                lam_min=lam_min, lam_max=lam_max, vmax=vmax), windings


def discrete_action(spec: LagrangianSpec, curve: DiscreteCurve) -> float:
    """Midpoint-rule action of a discrete curve."""
    amps, waves, omegas, phases = spec.pot_arrays()
    return backend.active().action_value(
        curve.points, curve.h, float(curve.times[0]), spec.kinetic,
        amps, waves, omegas, phases)


def action_gradient(spec: LagrangianSpec, curve: DiscreteCurve) -> np.ndarray:
    """Gradient of the discrete action w.r.t. interior knots, shape (N-1, d)."""
    amps, waves, omegas, phases = spec.pot_arrays()
    _, g = backend.active().action_value_grad(
        curve.points, curve.h, float(curve.times[0]), spec.kinetic,
        amps, waves, omegas, phases)
    return g


def el_residuals(spec: LagrangianSpec, curve: DiscreteCurve) -> np.ndarray:
    """Euclidean norm of the discrete Euler-Lagrange residual per interior knot."""
    g = action_gradient(spec, curve)
    return np.linalg.norm(g, axis=1)


def minimize_bvp(spec: LagrangianSpec, x, y, s: float, t: float,
                 opts: BvpOptions = BvpOptions()) -> CostResult:
    """Approximate c_s^t(x, y) from above with the minimizing discrete extremal.

    Each winding class in the configured range is solved by backtracking
    gradient descent from the straight-line lift followed by a Newton-type
    polish of the discrete Euler-Lagrange system; the best class wins and
    exact ties break to the lexicographically smallest winding.
    """
    if not s < t:
        raise ValueError("minimize_bvp requires s < t")
    x = wrap(np.atleast_1d(x))
    y = wrap(np.atleast_1d(y))
    N = opts.knot_count(t - s)
    kargs, windings = _kernel_args(spec, opts)
    val, z, wi, gnorm, conv = backend.active().bvp_best(
        x, y, float(s), float(t), N, **kargs)
    if z is None:
        raise ConvergenceError("no winding class produced a finite action")
    times = s + np.arange(N + 1) * (t - s) / N
    curve = DiscreteCurve(times=times, points=np.asarray(z),
                          winding=windings[wi].copy())
    result = CostResult(value=float(val), curve=curve,
                        converged=bool(conv), grad_norm=float(gnorm))
    if not conv:
        raise ConvergenceError(
            f"BVP did not converge (grad_norm={gnorm:.3e})", best=result)
    return result


def curve_end_velocities(spec: LagrangianSpec, curve: DiscreteCurve):
    """Second-order endpoint velocities of a converged extremal.

    The half-step knot velocities are corrected with the Euler-Lagrange
    acceleration A vdot = -dV/dx evaluated at the endpoints.
    """
    z = curve.points
    h = curve.h
    v_first = (z[1] - z[0]) / h
    v_last = (z[-1] - z[-2]) / h
    Ainv = spec.kinetic_inv
    g0 = spec.potential.grad(wrap(z[0]), float(curve.times[0]))
    g1 = spec.potential.grad(wrap(z[-1]), float(curve.times[-1]))
    v0 = v_first + 0.5 * h * (Ainv @ g0)
    v1 = v_last - 0.5 * h * (Ainv @ g1)
    return v0, v1


def _cache_key(spec, sources, targets, s, t, opts: BvpOptions) -> str:
    if spec.autonomous:
        s_key, t_key = 0.0, round(t - s, 12)
    else:
        s_key, t_key = round(s, 12), round(t, 12)
    hasher = hashlib.sha256()
    hasher.update(spec.content_hash().encode())
    hasher.update(json.dumps(opts.to_dict(), sort_keys=True).encode())
    hasher.update(np.ascontiguousarray(sources, dtype=np.float64).tobytes())
    hasher.update(np.ascontiguousarray(targets, dtype=np.float64).tobytes())
    hasher.update(f"{s_key}:{t_key}".encode())
    return hasher.hexdigest()[:24]


def cost_matrix(spec: LagrangianSpec, sources, targets, s: float, t: float,
                opts: BvpOptions = BvpOptions(), cache_dir: str | None = None,
                stats: dict | None = None) -> np.ndarray:
    """Matrix of costs c_s^t(source_i, target_j).

    With cache_dir set, matrices persist as <key>.bin (flat float64) plus a
    JSON sidecar header and are reused across runs; writes go through a
    temp file and atomic rename so concurrent writers are safe.
    """
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if sources.size == 0 or targets.size == 0:
        raise ValueError("cost_matrix needs nonempty point sets")
    if not s < t:
        raise ValueError("cost_matrix requires s < t")
    n, m = sources.shape[0], targets.shape[0]
    key = _cache_key(spec, sources, targets, s, t, opts)
    if cache_dir is not None:
        bin_path = os.path.join(cache_dir, key + ".bin")
        meta_path = os.path.join(cache_dir, key + ".json")
        if os.path.exists(bin_path) and os.path.exists(meta_path):
            values = np.fromfile(bin_path, dtype=np.float64).reshape(n, m)
            if stats is not None:
                stats["cache_hits"] = stats.get("cache_hits", 0) + n * m
            return values
    N = opts.knot_count(t - s)
    kargs, _ = _kernel_args(spec, opts)
    values, conv, gnorms = backend.active().cost_block(
        sources, targets, float(s), float(t), N, **kargs)
    if not np.all(conv == 1):
        bad = np.argwhere(conv == 0)
        i, j = int(bad[0, 0]), int(bad[0, 1])
        raise ConvergenceError(
            f"cost matrix entry ({i}, {j}) did not converge "
            f"(grad_norm={gnorms[i, j]:.3e})", entry=(i, j))
    if stats is not None:
        stats["cache_misses"] = stats.get("cache_misses", 0) + n * m
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        header = {
            "spec_hash": spec.content_hash(),
            "shape": [n, m],
            "d": spec.d,
            "s": s, "t": t,
            "tolerances": {"grad_tol": opts.grad_tol},
            "options": opts.to_dict(),
        }
        fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            values.astype(np.float64).tofile(fh)
        os.replace(tmp, bin_path)
        fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(header, fh, sort_keys=True, indent=1)
        os.replace(tmp, meta_path)
    return values
