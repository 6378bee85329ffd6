"""Shared numeric foundations: activation functions, vector fields, trajectories.

Everything here is immutable after construction and free of hidden state, so
objects can be shared across threads and evaluated in parallel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

ACTIVATION_KINDS = ("tanh", "scaled_logistic")


@dataclass(frozen=True)
class Activation:
    """Sigmoidal nonlinearity with range (-range_low, range_high).

    Normalized so that sigma(0) = 0 and sigma'(0) = 1.  Both provided kinds
    have range (-1, 1), a strictly positive derivative bounded by 1, and a
    closed-form inverse.
    """

    kind: str
    range_low: float = 1.0    # alpha: values stay above -alpha
    range_high: float = 1.0   # beta: values stay below +beta

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "tanh":
            return np.tanh(s)
        # logistic 2/(1+e^(-s)) - 1 with the argument pre-scaled by 2 so the
        # slope at 0 is 1; evaluated via exp(-2|s|) to avoid overflow
        e = np.exp(-2.0 * np.abs(s))
        return np.sign(s) * (1.0 - e) / (1.0 + e)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "tanh":
            t = np.tanh(s)
            return 1.0 - t * t
        e = np.exp(-2.0 * np.abs(s))
        return 4.0 * e / (1.0 + e) ** 2

    def second_deriv(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "tanh":
            t = np.tanh(s)
            return -2.0 * t * (1.0 - t * t)
        e = np.exp(-2.0 * np.abs(s))
        return -np.sign(s) * 8.0 * e * (1.0 - e) / (1.0 + e) ** 3

    def inv(self, y):
        """Inverse on (-range_low, range_high), in closed form."""
        y = np.asarray(y, dtype=float)
        if np.any(y <= -self.range_low) or np.any(y >= self.range_high):
            raise ValueError("activation inverse evaluated outside the open range")
        if self.kind == "tanh":
            return np.arctanh(y)
        # inverse of the rescaled logistic: s = 0.5*log((1+y)/(1-y))
        return 0.5 * (np.log1p(y) - np.log1p(-y))


def make_activation(kind: str) -> Activation:
    return Activation(kind=kind)


@dataclass(frozen=True)
class VectorField:
    """Autonomous vector field on R^dim.

    ``func`` must broadcast over leading axes: input (..., dim) -> (..., dim).
    ``jac``, when given, maps a single point (dim,) to the (dim, dim) Jacobian;
    otherwise central finite differences are used.
    """

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def jacobian(self, x, h: float = 1e-6):
        x = np.asarray(x, dtype=float)
        if self.jac is not None:
            return self.jac(x)
        return finite_diff_jacobian(self, x, h)


def finite_diff_jacobian(field, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with coordinate-relative steps.

    Column j is (F(x + h_j e_j) - F(x - h_j e_j)) / (2 h_j) with
    h_j = h * max(1, |x_j|).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        hj = h * max(1.0, abs(x[j]))
        xp = x.copy(); xp[j] += hj
        xm = x.copy(); xm[j] -= hj
        fp = np.asarray(field(xp), dtype=float)
        fm = np.asarray(field(xm), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise FloatingPointError("vector field returned a non-finite value")
        J[:, j] = (fp - fm) / (2.0 * hj)
    return J


def jacobian_rel_error(field, x, h: float = 1e-6) -> float:
    """Relative Frobenius mismatch between analytic and finite-difference Jacobians."""
    J = field.jacobian(x)
    Jfd = finite_diff_jacobian(field, x, h)
    scale = max(np.linalg.norm(J), 1e-12)
    return float(np.linalg.norm(J - Jfd) / scale)


class Trajectory:
    """Sampled orbit with per-step cubic Hermite dense output.

    times, states and derivs are the accepted integration nodes; the Hermite
    interpolant reproduces the stored states at the nodes exactly (up to
    round-off).  ``events`` collects section crossings when requested.
    """

    def __init__(self, times, states, derivs, events=None):
        times = np.asarray(times, dtype=float)
        states = np.atleast_2d(np.asarray(states, dtype=float))
        derivs = np.atleast_2d(np.asarray(derivs, dtype=float))
        if times.ndim != 1 or len(times) != len(states) or len(states) != len(derivs):
            raise ValueError("times, states and derivs must have matching lengths")
        if len(times) >= 2 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(states)):
            raise ValueError("states contain non-finite values")
        self.times = times
        self.states = states
        self.derivs = derivs
        self.events = list(events) if events else []

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def at(self, t):
        """Dense evaluation at scalar or array times within [t0, t_end]."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tq = np.atleast_1d(t)
        k = np.clip(np.searchsorted(self.times, tq, side="right") - 1, 0, len(self.times) - 2)
        t0 = self.times[k]; t1 = self.times[k + 1]
        h = t1 - t0
        th = (tq - t0) / h
        th2 = th * th
        th3 = th2 * th
        h00 = 2 * th3 - 3 * th2 + 1
        h10 = th3 - 2 * th2 + th
        h01 = -2 * th3 + 3 * th2
        h11 = th3 - th2
        x0 = self.states[k]; x1 = self.states[k + 1]
        f0 = self.derivs[k]; f1 = self.derivs[k + 1]
        out = (h00[:, None] * x0 + (h10 * h)[:, None] * f0
               + h01[:, None] * x1 + (h11 * h)[:, None] * f1)
        return out[0] if scalar else out

    def deriv_at(self, t):
        """Time derivative of the dense interpolant."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tq = np.atleast_1d(t)
        k = np.clip(np.searchsorted(self.times, tq, side="right") - 1, 0, len(self.times) - 2)
        t0 = self.times[k]; t1 = self.times[k + 1]
        h = t1 - t0
        th = (tq - t0) / h
        th2 = th * th
        d00 = (6 * th2 - 6 * th) / h
        d10 = 3 * th2 - 4 * th + 1
        d01 = (-6 * th2 + 6 * th) / h
        d11 = 3 * th2 - 2 * th
        x0 = self.states[k]; x1 = self.states[k + 1]
        f0 = self.derivs[k]; f1 = self.derivs[k + 1]
        out = (d00[:, None] * x0 + d10[:, None] * f0
               + d01[:, None] * x1 + d11[:, None] * f1)
        return out[0] if scalar else out

    def map_states(self, fn, fn_deriv) -> "Trajectory":
        """Push the orbit through a smooth coordinate map y = fn(x).

        fn and fn_deriv act componentwise on (..., dim) arrays; node states and
        node derivatives are exact (chain rule), the Hermite segments between
        nodes are rebuilt in the new coordinates.
        """
        new_states = fn(self.states)
        new_derivs = fn_deriv(self.states) * self.derivs
        return Trajectory(self.times, new_states, new_derivs)
