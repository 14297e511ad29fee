"""End-to-end transport runs shared by the CLI and the acceptance suite.

run_transport stitches the modules together for one (mu0, muT) instance:
cost matrices, the Kantorovich pair, forward/backward value functions on
the grid, the transport-set mask, the masked velocity field and its
Lipschitz estimates, the particle interpolation, and the certificate
collecting every verifiable quantity of the run.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .action import BvpOptions, cost_matrix
from .dynamics import LagrangianSpec
from .hamilton_jacobi import (LipschitzEstimate, TransportSetMask,
                              VectorFieldEstimate, lax_oleinik_backward,
                              lax_oleinik_forward, lipschitz_estimate,
                              transport_set, velocity_field)
from .interpolation import (InterpolationPath, continuity_residual,
                            flow_consistency, interpolate, verify_triangle)
from .kantorovich import (DiscreteMeasure, MapExtraction, PotentialPair,
                          TransportPlan, check_slackness, extract_map,
                          solve_kantorovich)
from .manifold import GridSpec


@dataclass
class TransportRun:
    spec: LagrangianSpec
    mu0: DiscreteMeasure
    muT: DiscreteMeasure
    T: float
    grid: GridSpec
    plan: TransportPlan
    pair: PotentialPair
    primal: float
    dual: float
    u_fields: list
    ub_fields: list
    mask: TransportSetMask
    field: VectorFieldEstimate
    khat: LipschitzEstimate
    path: InterpolationPath
    triangles: list
    flow_report: object
    continuity: object
    map_extraction: MapExtraction | None
    certificate: dict


def _measure_is_grid(measure: DiscreteMeasure, grid: GridSpec) -> bool:
    if measure.n != grid.n_nodes:
        return False
    return bool(np.allclose(measure.atoms, grid.points(), atol=1e-12)
                and np.allclose(measure.weights, 1.0 / grid.n_nodes,
                                atol=1e-12))


def run_transport(spec: LagrangianSpec, mu0: DiscreteMeasure,
                  muT: DiscreteMeasure, T: float, grid: GridSpec,
                  opts: BvpOptions = BvpOptions(),
                  slice_fractions=(0.25, 0.5, 0.75),
                  epsilons=(0.125, 0.25), mask_tol: float = 1e-3,
                  cost_accuracy: float = 1e-6,
                  cache_dir: str | None = None) -> TransportRun:
    C = cost_matrix(spec, mu0.atoms, muT.atoms, 0.0, T, opts, cache_dir)
    plan, pair, primal, dual = solve_kantorovich(C, mu0, muT)
    slack = check_slackness(plan, pair, C)

    slice_times = [f * T for f in slice_fractions]
    u_fields, ub_fields = [], []
    pts = grid.points()
    for t in slice_times:
        Cu = cost_matrix(spec, mu0.atoms, pts, 0.0, t, opts, cache_dir)
        Cb = cost_matrix(spec, pts, muT.atoms, t, T, opts, cache_dir)
        u_fields.append(lax_oleinik_forward(pair.phi0, Cu, grid, t))
        ub_fields.append(lax_oleinik_backward(pair.phi1, Cb, grid, t))
    mask = transport_set(u_fields, ub_fields, mask_tol)
    field = velocity_field(mask, u_fields, mu0.atoms, spec, opts)
    khat = lipschitz_estimate(field, epsilons, T)

    sample_times = np.array([0.0, *slice_times, T])
    path = interpolate(plan, spec, sample_times, opts)
    triangles = [verify_triangle(path, spec, (0.0, t, T), opts,
                                 cost_accuracy=cost_accuracy,
                                 cache_dir=cache_dir)
                 for t in slice_times]
    if field.n > 0:
        flow_report = flow_consistency(path, field,
                                       slice_times[0], slice_times[-1])
    else:
        flow_report = None
    continuity = continuity_residual(path)

    map_extraction = None
    if _measure_is_grid(mu0, grid):
        map_extraction = extract_map(plan, pair.phi0, grid, spec, T)

    certificate = {
        "primal_value": primal,
        "dual_value": dual,
        "duality_gap": abs(primal - dual),
        "slackness_max": slack.worst,
        "triangle_defects": {repr(tr.t2): tr.defect for tr in triangles},
        "flow_deviation": (flow_report.max_deviation
                           if flow_report is not None else None),
        "flow_w1": flow_report.w1 if flow_report is not None else None,
        "empty_transport_set": field.n == 0,
        "continuity_max_residual": continuity.max_residual,
        "K_hat": {repr(float(e)): (None if not bool(dfn) else float(k))
                  for e, k, dfn in zip(khat.epsilons, khat.k_hat,
                                       khat.defined)},
        "field_route_deviation": field.deviation,
        "mask_tol": mask_tol,
        "mask_size": mask.n_masked,
        "is_map": (map_extraction.is_map
                   if map_extraction is not None else None),
    }
    return TransportRun(spec=spec, mu0=mu0, muT=muT, T=T, grid=grid,
                        plan=plan, pair=pair, primal=primal, dual=dual,
                        u_fields=u_fields, ub_fields=ub_fields, mask=mask,
                        field=field, khat=khat, path=path,
                        triangles=triangles, flow_report=flow_report,
                        continuity=continuity,
                        map_extraction=map_extraction,
                        certificate=certificate)
