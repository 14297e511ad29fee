"""Mechanical Lagrangians on the torus and their Hamiltonian flows.

The model family is L(x, v, t) = 1/2 v^T A v - V(x, t) with A symmetric
positive definite and V a built-in cosine potential.  Its Legendre dual is
H(x, p, t) = 1/2 p^T A^{-1} p + V(x, t); the maps v -> Av and p -> A^{-1}p
convert between the two sides.  Flows integrate the Hamiltonian equations
xdot = dH/dp, pdot = -dH/dx with fixed-step classical RK4.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import backend
from .manifold import wrap
from .potentials import Potential, make_potential

FLOW_STEPS_PER_UNIT = 1000


class DivergenceError(RuntimeError):
    """Raised when an integration produces non-finite state."""


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    v: np.ndarray
    t: float


@dataclass(frozen=True)
class LagrangianSpec:
    kinetic: np.ndarray
    potential: Potential
    time_period: float | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.kinetic, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("kinetic matrix must be square")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ValueError("kinetic matrix must be symmetric")
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise ValueError("kinetic matrix must be positive definite") from None
        if self.potential.d != A.shape[0]:
            raise ValueError("potential dimension does not match kinetic matrix")
        object.__setattr__(self, "kinetic", A)
        # sampled boundedness / periodicity checks on the potential
        xs = np.linspace(0.0, 1.0, 17)[:, None] * np.ones((1, A.shape[0]))
        ts = np.linspace(0.0, 2.0, 9)
        vals = np.array([self.potential.value(xs, t) for t in ts])
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential must be bounded on the sampled grid")
        if self.time_period is not None:
            if self.time_period <= 0:
                raise ValueError("time_period must be positive")
            if not self.potential.time_periodic(self.time_period):
                raise ValueError("potential is not periodic with the declared period")

    @property
    def d(self) -> int:
        return self.kinetic.shape[0]

    @property
    def kinetic_inv(self) -> np.ndarray:
        return np.linalg.inv(self.kinetic)

    @property
    def eig_bounds(self) -> tuple[float, float]:
        w = np.linalg.eigvalsh(self.kinetic)
        return float(w[0]), float(w[-1])

    @property
    def autonomous(self) -> bool:
        return self.potential.autonomous

    def pot_arrays(self):
        p = self.potential
        return p.amps, p.waves, p.omegas, p.phases

    def to_dict(self) -> dict:
        return {
            "kinetic": self.kinetic.tolist(),
            "potential": self.potential.to_dict(),
            "time_period": self.time_period,
        }

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def make_spec(kinetic, potential: str | Potential = "zero",
              time_period: float | None = None, **pot_params) -> LagrangianSpec:
    A = np.atleast_2d(np.asarray(kinetic, dtype=float))
    if isinstance(potential, str):
        potential = make_potential(potential, d=A.shape[0], **pot_params)
    return LagrangianSpec(kinetic=A, potential=potential, time_period=time_period)


def eval_L(spec: LagrangianSpec, x, v, t) -> float:
    v = np.asarray(v, dtype=float)
    kin = 0.5 * float(v @ spec.kinetic @ v)
    return kin - float(spec.potential.value(np.asarray(x, dtype=float), t))


def eval_H(spec: LagrangianSpec, x, p, t) -> float:
    p = np.asarray(p, dtype=float)
    kin = 0.5 * float(p @ spec.kinetic_inv @ p)
    return kin + float(spec.potential.value(np.asarray(x, dtype=float), t))


def legendre_v_to_p(spec: LagrangianSpec, x, v, t) -> np.ndarray:
    return spec.kinetic @ np.asarray(v, dtype=float)


def legendre_p_to_v(spec: LagrangianSpec, x, p, t) -> np.ndarray:
    return spec.kinetic_inv @ np.asarray(p, dtype=float)


def flow_many(spec: LagrangianSpec, xs, vs, s: float, t: float,
              steps: int | None = None):
    """Flow a batch of Lagrangian states (xs, vs) from time s to t.

    Integration runs on the Hamiltonian side; positions are returned
    wrapped, velocities converted back.  Backward integration (t < s)
    is allowed.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    vs = np.atleast_2d(np.asarray(vs, dtype=float))
    if steps is None:
        steps = max(1, int(round(FLOW_STEPS_PER_UNIT * abs(t - s))))
    ps = vs @ spec.kinetic.T
    amps, waves, omegas, phases = spec.pot_arrays()
    x1, p1 = backend.active().rk4_flow(xs, ps, s, t, steps,
                                       spec.kinetic_inv, amps, waves,
                                       omegas, phases)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(p1))):
        raise DivergenceError("flow produced non-finite state")
    return wrap(x1), p1 @ spec.kinetic_inv.T


def flow(spec: LagrangianSpec, start: PhasePoint, s: float, t: float,
         steps: int | None = None) -> PhasePoint:
    """Euler-Lagrange flow of one phase point from time s to time t."""
    x0 = np.atleast_1d(np.asarray(start.x, dtype=float))
    v0 = np.atleast_1d(np.asarray(start.v, dtype=float))
    x1, v1 = flow_many(spec, x0[None, :], v0[None, :], s, t, steps)
    return PhasePoint(x=x1[0], v=v1[0], t=t)
