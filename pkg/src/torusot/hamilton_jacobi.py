"""Lax-Oleinik operators, transport-set masks and the interpolation field.

The forward/backward value functions are built by semi-discrete min-plus
and max-plus reductions over precomputed cost matrices (no PDE stepping,
so no numerical viscosity and no CFL constraint).  The transport set is
the sublevel set of u - ubreve; its tolerance over-approximates the exact
equality set and is recorded alongside every mask.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .action import BvpOptions, curve_end_velocities, minimize_bvp
from .dynamics import LagrangianSpec, eval_H
from .manifold import GridSpec


class DependencyError(RuntimeError):
    """A required cost matrix or field is missing."""


@dataclass(frozen=True)
class GridField:
    grid: GridSpec
    values: np.ndarray           # (n_nodes,)
    time: float
    argopt: np.ndarray | None = None   # optimizing row index per node

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid field values must be finite")


def lax_oleinik_forward(phi0, cost, grid: GridSpec, time: float) -> GridField:
    """u(x, t) = min_y phi0(y) + c_0^t(y, x) over the rows of the cost matrix."""
    phi0 = np.asarray(phi0, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if cost.shape[0] != phi0.shape[0] or cost.shape[1] != grid.n_nodes:
        raise DependencyError("cost matrix does not match phi0 rows / grid columns")
    total = phi0[:, None] + cost
    arg = np.argmin(total, axis=0)
    vals = total[arg, np.arange(cost.shape[1])]
    return GridField(grid=grid, values=vals, time=time, argopt=arg)


def lax_oleinik_backward(phi1, cost, grid: GridSpec, time: float) -> GridField:
    """ubreve(x, t) = max_y phi1(y) - c_t^T(x, y) over the columns of the cost."""
    phi1 = np.asarray(phi1, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if cost.shape[1] != phi1.shape[0] or cost.shape[0] != grid.n_nodes:
        raise DependencyError("cost matrix does not match grid rows / phi1 columns")
    total = phi1[None, :] - cost
    arg = np.argmax(total, axis=1)
    vals = total[np.arange(cost.shape[0]), arg]
    return GridField(grid=grid, values=vals, time=time, argopt=arg)


@dataclass(frozen=True)
class TransportSetMask:
    grid: GridSpec
    times: np.ndarray            # (k,)
    mask: np.ndarray             # (k, n_nodes) bool
    gaps: np.ndarray             # (k, n_nodes) u - ubreve
    tol: float

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum())


def transport_set(u_fields, ub_fields, tol: float) -> TransportSetMask:
    """Nodes with u - ubreve <= tol, per time slice."""
    if len(u_fields) != len(ub_fields) or not u_fields:
        raise ValueError("need matching nonempty slice lists")
    grid = u_fields[0].grid
    times = []
    gaps = []
    for uf, bf in zip(u_fields, ub_fields):
        if uf.grid != grid or bf.grid != grid or uf.time != bf.time:
            raise ValueError("slices must share grid and times")
        times.append(uf.time)
        gaps.append(uf.values - bf.values)
    gaps = np.array(gaps)
    return TransportSetMask(grid=grid, times=np.array(times),
                            mask=gaps <= tol, gaps=gaps, tol=tol)


@dataclass(frozen=True)
class VectorFieldEstimate:
    grid: GridSpec
    times: np.ndarray            # (M,) slice time per masked node
    node_index: np.ndarray       # (M,) flat grid index
    positions: np.ndarray        # (M, d)
    velocities: np.ndarray       # (M, d) from the minimizing extremal
    velocities_grad: np.ndarray  # (M, d) from dpH(x, D_x u, t)
    deviation: float             # sup distance between the two routes

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def slice_indices(self, t: float) -> np.ndarray:
        return np.flatnonzero(np.isclose(self.times, t))


def _masked_gradient(values, grid: GridSpec, mask_slice) -> np.ndarray:
    """Centered periodic differences of u, used at masked nodes.

    Centered stencils stay second-order on the transport set (u is
    differentiable there); one-sided boundary fallbacks were measured to
    inflate the cross-route deviation and are deliberately not used.
    """
    h = grid.spacing
    out = np.empty((grid.n_nodes, grid.d))
    for axis in range(grid.d):
        ip = grid.neighbor_indices(axis, +1)
        im = grid.neighbor_indices(axis, -1)
        out[:, axis] = (values[ip] - values[im]) / (2.0 * h)
    return out


def velocity_field(mask: TransportSetMask, u_fields, source_atoms,
                   spec: LagrangianSpec,
                   opts: BvpOptions = BvpOptions()) -> VectorFieldEstimate:
    """Interpolation velocity on the transport set.

    At each masked node the velocity is the terminal velocity of the
    minimizing extremal recorded by the forward operator's argmin; the
    Legendre route dpH(x, D_x u, t) with grid differences is computed
    alongside and the sup deviation between the two is reported.
    """
    grid = mask.grid
    pts = grid.points()
    source_atoms = np.atleast_2d(np.asarray(source_atoms, dtype=float))
    times, nodes, pos, vel, velg = [], [], [], [], []
    deviation = 0.0
    for k, uf in enumerate(u_fields):
        mask_slice = mask.mask[k]
        idx = np.flatnonzero(mask_slice)
        if idx.size == 0:
            continue
        grad_u = _masked_gradient(uf.values, grid, mask_slice)
        for node in idx:
            x = pts[node]
            i = int(uf.argopt[node])
            res = minimize_bvp(spec, source_atoms[i], x, 0.0, uf.time, opts)
            _, v_end = curve_end_velocities(spec, res.curve)
            v_grad = spec.kinetic_inv @ grad_u[node]
            deviation = max(deviation, float(np.linalg.norm(v_end - v_grad)))
            times.append(uf.time)
            nodes.append(int(node))
            pos.append(x)
            vel.append(v_end)
            velg.append(v_grad)
    if not times:
        return VectorFieldEstimate(grid=grid, times=np.zeros(0),
                                   node_index=np.zeros(0, dtype=int),
                                   positions=np.zeros((0, grid.d)),
                                   velocities=np.zeros((0, grid.d)),
                                   velocities_grad=np.zeros((0, grid.d)),
                                   deviation=0.0)
    return VectorFieldEstimate(grid=grid, times=np.array(times),
                               node_index=np.array(nodes),
                               positions=np.array(pos),
                               velocities=np.array(vel),
                               velocities_grad=np.array(velg),
                               deviation=deviation)


@dataclass(frozen=True)
class LipschitzEstimate:
    epsilons: np.ndarray
    k_hat: np.ndarray            # NaN where undefined
    defined: np.ndarray          # bool per epsilon


def lipschitz_estimate(fld: VectorFieldEstimate, epsilons, T: float,
                       max_pair_dist: float = 0.25,
                       merge_tol: float = 1e-9) -> LipschitzEstimate:
    """K_hat(eps): max |X - X'| / dist over masked pairs in M x [eps, T-eps].

    The pair distance is the product metric (torus distance plus time gap),
    restricted to pairs closer than max_pair_dist.  A max over supersets,
    so K_hat is non-increasing in eps by construction.
    """
    epsilons = np.asarray(epsilons, dtype=float)
    out = np.full(epsilons.shape, np.nan)
    defined = np.zeros(epsilons.shape, dtype=bool)
    if fld.n >= 2:
        diff = fld.positions[:, None, :] - fld.positions[None, :, :]
        diff -= np.round(diff)
        dist = np.linalg.norm(diff, axis=2) + np.abs(
            fld.times[:, None] - fld.times[None, :])
        vdiff = np.linalg.norm(
            fld.velocities[:, None, :] - fld.velocities[None, :, :], axis=2)
        iu = np.triu_indices(fld.n, k=1)
        dist, vdiff = dist[iu], vdiff[iu]
        ti, tj = fld.times[iu[0]], fld.times[iu[1]]
        usable = (dist > merge_tol) & (dist <= max_pair_dist)
        for e_idx, eps in enumerate(epsilons):
            window = ((ti >= eps - 1e-12) & (ti <= T - eps + 1e-12)
                      & (tj >= eps - 1e-12) & (tj <= T - eps + 1e-12))
            sel = usable & window
            if np.count_nonzero(window) >= 1 and np.any(sel):
                out[e_idx] = float(np.max(vdiff[sel] / dist[sel]))
                defined[e_idx] = True
            elif np.any(window):
                out[e_idx] = 0.0
                defined[e_idx] = True
    return LipschitzEstimate(epsilons=epsilons, k_hat=out, defined=defined)


def subsolution_residual(u_minus: GridField, u_mid: GridField,
                         u_plus: GridField, spec: LagrangianSpec,
                         smooth_factor: float = 10.0) -> dict:
    """Pointwise residual d_t u + H(x, D_x u, t) on one interior slice.

    Time derivative by centered difference across the neighbor slices,
    space gradient by centered grid differences.  Nodes whose divided
    second difference blows up (same proxy as the map extraction) are
    excluded from the smooth-node statistics.
    """
    from .kantorovich import grid_gradient, grid_second_difference

    grid = u_mid.grid
    dt_minus = u_mid.time - u_minus.time
    dt_plus = u_plus.time - u_mid.time
    if abs(dt_minus - dt_plus) > 1e-12:
        raise ValueError("neighbor slices must be symmetric around the middle")
    du_dt = (u_plus.values - u_minus.values) / (dt_minus + dt_plus)
    grad = grid_gradient(u_mid.values, grid)
    pts = grid.points()
    ham = np.array([eval_H(spec, pts[i], grad[i], u_mid.time)
                    for i in range(grid.n_nodes)])
    residual = du_dt + ham
    d2 = grid_second_difference(u_mid.values, grid)
    lip = float(np.abs(grad).max())
    smooth = d2 <= smooth_factor * (lip + 1.0)
    return {
        "residual": residual,
        "smooth": smooth,
        "max_smooth_residual": float(residual[smooth].max()) if smooth.any() else float("nan"),
        "time": u_mid.time,
    }
