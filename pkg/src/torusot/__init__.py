"""Optimal mass transport with Lagrangian action costs on flat tori.

Cost functions are minimal actions of mechanical Lagrangians
L = 1/2 v^T A v - V(x, t) over torus curves; on top of them the package
solves discrete Kantorovich problems exactly, builds forward/backward
value functions and transport-set masks, certifies transport
interpolations, and computes minimal-average-action invariant measures
in the time-periodic mode.
"""
from .action import (BvpOptions, ConvergenceError, CostResult, DiscreteCurve,
                     cost_matrix, discrete_action, minimize_bvp)
from .backend import backend_name, set_backend
from .dynamics import (LagrangianSpec, PhasePoint, eval_H, eval_L, flow,
                       flow_many, legendre_p_to_v, legendre_v_to_p, make_spec)
from .kantorovich import (DiscreteMeasure, PotentialPair, TransportPlan,
                          check_slackness, cost_from_pairs, extract_map,
                          solve_dual, solve_kantorovich, solve_primal,
                          uniform_measure, wasserstein1)
from .manifold import GridSpec, distance, displacement, wrap
from .mather import alpha_T_check, alpha_lp, graph_check, invariance_check, mather_measure
from .pipeline import run_transport
from .potentials import make_potential

__version__ = "0.1.0"
