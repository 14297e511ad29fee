"""Built-in scalar potentials V(x, t) on the torus.

Every built-in is a finite sum of traveling cosine modes

    V(x, t) = sum_m  a_m * cos(2*pi*(k_m . x - w_m * t - phase_m))

with integer wave vectors k_m, so V is automatically 1-periodic in every
spatial coordinate, and 1-periodic in time whenever all temporal
frequencies w_m are integers.  The mode arrays are the representation the
numeric kernels consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

BUILTIN_POTENTIALS = ("zero", "cosine", "two_mode", "traveling")


@dataclass(frozen=True)
class Potential:
    name: str
    params: dict = field(default_factory=dict)
    amps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    waves: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    omegas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def d(self) -> int:
        return self.waves.shape[1]

    @property
    def is_zero(self) -> bool:
        return self.amps.size == 0 or bool(np.all(self.amps == 0.0))

    @property
    def autonomous(self) -> bool:
        return bool(np.all(self.omegas == 0.0))

    def time_periodic(self, period: float = 1.0) -> bool:
        """True when every temporal frequency completes whole cycles per period."""
        cycles = self.omegas * period
        return bool(np.allclose(cycles, np.round(cycles), atol=1e-12))

    def max_abs(self) -> float:
        """Upper bound on |V|: sum of mode amplitudes."""
        return float(np.sum(np.abs(self.amps)))

    def value(self, x, t) -> np.ndarray:
        """V at points x (..., d) and times t (scalar or broadcastable)."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.amps.size == 0:
            return np.zeros(np.broadcast_shapes(x.shape[:-1], t.shape))
        phase = x @ self.waves.T - np.multiply.outer(t, self.omegas) - self.phases
        return np.cos(TWO_PI * phase) @ self.amps

    def grad(self, x, t) -> np.ndarray:
        """dV/dx at points x (..., d), shape (..., d)."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.amps.size == 0:
            return np.zeros(x.shape)
        phase = x @ self.waves.T - np.multiply.outer(t, self.omegas) - self.phases
        s = -TWO_PI * self.amps * np.sin(TWO_PI * phase)
        return s @ self.waves

    def hess(self, x, t) -> np.ndarray:
        """d2V/dx2 at points x (..., d), shape (..., d, d)."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.amps.size == 0:
            return np.zeros(x.shape + (x.shape[-1],))
        phase = x @ self.waves.T - np.multiply.outer(t, self.omegas) - self.phases
        c = -TWO_PI ** 2 * self.amps * np.cos(TWO_PI * phase)
        return np.einsum("...m,ma,mb->...ab", c, self.waves, self.waves)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


def _modes(name, params, amps, waves, omegas, phases, d):
    waves = np.asarray(waves, dtype=float).reshape(-1, d)
    return Potential(
        name=name,
        params=params,
        amps=np.asarray(amps, dtype=float),
        waves=waves,
        omegas=np.asarray(omegas, dtype=float),
        phases=np.asarray(phases, dtype=float),
    )


def _axis_wave(d: int, axis: int, k: float) -> np.ndarray:
    w = np.zeros(d)
    w[axis] = k
    return w


def make_potential(name: str, d: int = 1, **params) -> Potential:
    """Build a potential by name.

    zero:       V = 0
    cosine:     V = amplitude * cos(2*pi*wavenumber*x_axis)
    two_mode:   V = amplitude * cos(2*pi*x_axis) + amplitude2 * cos(4*pi*x_axis)
    traveling:  V = amplitude * cos(2*pi*wavenumber*(x_axis - speed*t))
    """
    if name == "zero":
        return _modes("zero", {}, [], np.zeros((0, d)), [], [], d)
    axis = int(params.get("axis", 0))
    if axis >= d:
        raise ValueError("potential axis out of range")
    if name == "cosine":
        a = float(params.get("amplitude", 1.0))
        k = int(params.get("wavenumber", 1))
        p = {"amplitude": a, "wavenumber": k, "axis": axis}
        return _modes("cosine", p, [a], [_axis_wave(d, axis, k)], [0.0], [0.0], d)
    if name == "two_mode":
        a1 = float(params.get("amplitude", 1.0))
        a2 = float(params.get("amplitude2", 0.5))
        p = {"amplitude": a1, "amplitude2": a2, "axis": axis}
        waves = [_axis_wave(d, axis, 1), _axis_wave(d, axis, 2)]
        return _modes("two_mode", p, [a1, a2], waves, [0.0, 0.0], [0.0, 0.0], d)
    if name == "traveling":
        a = float(params.get("amplitude", 0.2))
        c = float(params.get("speed", 1.0))
        k = int(params.get("wavenumber", 1))
        p = {"amplitude": a, "speed": c, "wavenumber": k, "axis": axis}
        return _modes("traveling", p, [a], [_axis_wave(d, axis, k)], [k * c], [0.0], d)
    raise ValueError(f"unknown potential {name!r}; choose from {BUILTIN_POTENTIALS}")
