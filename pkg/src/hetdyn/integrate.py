"""Deterministic ODE integration with dense output and section-crossing detection.

Two schemes: a fixed-step classical RK4 and the adaptive Fehlberg 4(5) pair.
Dense output is a cubic Hermite on every accepted step; crossing times are
refined by bisection on that interpolant, never by re-integration.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .core import Trajectory, VectorField

# Fehlberg 4(5) tableau
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rkf45_adaptive"   # or "rk4_fixed"
    dt: Optional[float] = None       # required for rk4_fixed
    rtol: float = 1e-9
    atol: float = 1e-11
    t_max: float = 200.0
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.method not in ("rkf45_adaptive", "rk4_fixed"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.method == "rk4_fixed" and (self.dt is None or self.dt <= 0):
            raise ValueError("rk4_fixed requires a positive dt")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps <= 0 or self.t_max <= 0:
            raise ValueError("t_max and max_steps must be positive")


@dataclass(frozen=True)
class SectionSpec:
    """Oriented hyperplane section through ``point`` with unit ``normal``."""

    point: np.ndarray
    normal: np.ndarray
    direction: str = "positive_crossing"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        nrm = np.asarray(self.normal, dtype=float)
        length = np.linalg.norm(nrm)
        if not np.isfinite(length) or length == 0:
            raise ValueError("section normal must be nonzero")
        object.__setattr__(self, "normal", nrm / length)
        if self.direction != "positive_crossing":
            raise ValueError("only positive crossings are supported")

    def value(self, x):
        return (np.asarray(x, dtype=float) - self.point) @ self.normal


@dataclass(frozen=True)
class Crossing:
    t: float
    state: np.ndarray
    speed: float          # d/dt of the section function at the crossing
    grazing: bool = False


class IntegrationError(RuntimeError):
    """Typed integration failure carrying the partial trajectory."""

    def __init__(self, reason: str, partial: Trajectory, detail: str = ""):
        super().__init__(f"integration failed: {reason}" + (f" ({detail})" if detail else ""))
        self.reason = reason
        self.partial = partial


def _eval(field, x):
    f = np.asarray(field(x), dtype=float)
    if not np.all(np.isfinite(f)):
        raise FloatingPointError
    return f


def integrate(field: VectorField, x0, config: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Integrate ``field`` from ``x0`` over [0, t_max]."""
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    if config.method == "rk4_fixed":
        return _integrate_rk4(field, x0, config)
    return _integrate_rkf45(field, x0, config)


def _integrate_rk4(field, x0, config):
    dt = config.dt
    nsteps = int(np.ceil(config.t_max / dt))
    if nsteps > config.max_steps:
        raise ValueError("t_max / dt exceeds max_steps")
    times = [0.0]
    states = [x0]
    derivs = [_eval(field, x0)]
    t, x = 0.0, x0
    for k in range(nsteps):
        h = min(dt, config.t_max - t)
        try:
            k1 = derivs[-1]
            k2 = _eval(field, x + 0.5 * h * k1)
            k3 = _eval(field, x + 0.5 * h * k2)
            k4 = _eval(field, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t + h
            if not np.all(np.isfinite(x)):
                raise FloatingPointError
        except FloatingPointError:
            raise IntegrationError("non_finite", Trajectory(times, states, derivs),
                                   f"at t={t:.6g}") from None
        times.append(t)
        states.append(x)
        derivs.append(_eval(field, x))
        if t >= config.t_max:
            break
    return Trajectory(times, states, derivs)


def _integrate_rkf45(field, x0, config):
    t, x = 0.0, x0
    f0 = _eval(field, x0)
    times = [0.0]
    states = [x0]
    derivs = [f0]
    # initial step from the scale of the field
    scale = config.atol + config.rtol * np.max(np.abs(x0))
    rate = np.max(np.abs(f0)) + 1e-16
    h = min(0.1 * config.t_max, max(1e-8, (scale / rate) ** 0.2 * 1e-2 + 1e-6))
    steps = 0
    k = np.empty((6, x0.size))
    while t < config.t_max:
        if steps >= config.max_steps:
            raise IntegrationError("max_steps", Trajectory(times, states, derivs),
                                   f"{steps} steps at t={t:.6g}")
        h = min(h, config.t_max - t)
        if h <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
            raise IntegrationError("step_underflow", Trajectory(times, states, derivs),
                                   f"h={h:.3e} at t={t:.6g}")
        try:
            k[0] = derivs[-1]
            for s in range(1, 6):
                xs = x + h * (k[:s].T @ np.asarray(_A[s]))
                k[s] = _eval(field, xs)
            x4 = x + h * (_B4 @ k)
            x5 = x + h * (_B5 @ k)
        except FloatingPointError:
            h *= 0.5
            steps += 1
            continue
        tol = config.atol + config.rtol * np.maximum(np.abs(x), np.abs(x4))
        err = np.max(np.abs(x4 - x5) / tol)
        steps += 1
        if err <= 1.0:
            t = t + h
            x = x4
            try:
                fx = _eval(field, x)
            except FloatingPointError:
                raise IntegrationError("non_finite", Trajectory(times, states, derivs),
                                       f"at t={t:.6g}") from None
            times.append(t)
            states.append(x)
            derivs.append(fx)
        factor = 0.9 * err ** -0.2 if err > 0 else 5.0
        h = h * min(5.0, max(0.2, factor))
    return Trajectory(times, states, derivs)


def detect_crossings(traj: Trajectory, section: SectionSpec,
                     refine_tol: float = 1e-10, max_bisect: int = 40,
                     grazing_tol: float = 1e-12) -> list[Crossing]:
    """Positive crossings of the section, refined on the dense interpolant.

    Bisection narrows each bracketing step until the section function is
    below ``refine_tol`` in magnitude (at most ``max_bisect`` halvings).
    Crossings with transversal speed below ``grazing_tol`` are flagged as
    grazing rather than dropped.
    """
    svals = section.value(traj.states)
    out: list[Crossing] = []
    for i in range(len(svals) - 1):
        s0, s1 = svals[i], svals[i + 1]
        if not (s0 < 0.0 <= s1):
            continue
        lo, hi = traj.times[i], traj.times[i + 1]
        flo = s0
        for _ in range(max_bisect):
            mid = 0.5 * (lo + hi)
            fm = float(section.value(traj.at(mid)))
            if abs(fm) < refine_tol:
                lo = hi = mid
                break
            if (flo < 0) == (fm < 0):
                lo, flo = mid, fm
            else:
                hi = mid
        tstar = 0.5 * (lo + hi)
        xstar = traj.at(tstar)
        speed = float(traj.deriv_at(tstar) @ section.normal)
        out.append(Crossing(t=float(tstar), state=xstar, speed=speed,
                            grazing=abs(speed) < grazing_tol))
    return out


def trajectory_to_csv(traj: Trajectory, path):
    """Dump (t, x_1..x_n) rows."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i+1}" for i in range(traj.dim)])
        for t, x in zip(traj.times, traj.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x])


def crossings_to_json(crossings: list[Crossing]) -> str:
    import json

    return json.dumps([
        {"t": c.t, "state": c.state.tolist(), "speed": c.speed, "grazing": c.grazing}
        for c in crossings
    ], indent=2)
