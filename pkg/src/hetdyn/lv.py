"""Three-species competitive Lotka-Volterra targets with a designed saddle cycle.

The coefficient matrix places one saddle on each coordinate axis, with one
unstable eigenvalue pointing at the next saddle and two stable eigenvalues
equal to -1.  The cycle 1 -> 2 -> 3 -> 1 is asymptotically stable whenever
all unstable rates sit in (0, 1).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import VectorField


@dataclass(frozen=True)
class LotkaVolterraSystem:
    a: np.ndarray          # axis intercepts, shape (3,)
    lambda_u: np.ndarray   # unstable rates, shape (3,)
    rho: np.ndarray        # interaction coefficients, shape (3, 3)

    @property
    def n(self) -> int:
        return 3

    @property
    def saddles(self) -> np.ndarray:
        """Axial equilibria as rows: saddle i is a_i * e_i."""
        return np.diag(self.a)

    def field(self) -> VectorField:
        rho = self.rho

        def g(x):
            return x * (1.0 - x @ rho.T)

        def jac(x):
            s = 1.0 - rho @ x
            return np.diag(s) - x[:, None] * rho

        return VectorField(dim=3, func=g, jac=jac, name="lv")

    def log_field(self) -> VectorField:
        """The same dynamics in log coordinates l = log(x).

        On the positive orthant the coordinate planes are invariant and deep
        saddle passages drive coordinates below the double-precision floor;
        in log coordinates those passages stay at moderate magnitudes, so
        arbitrarily many laps around the cycle remain resolvable.
        """
        rho = self.rho

        def gl(l):
            return 1.0 - np.exp(l) @ rho.T

        def jac(l):
            return -rho * np.exp(l)[None, :]

        return VectorField(dim=3, func=gl, jac=jac, name="lv_log")

    def jacobian_eigenstructure(self, i: int):
        """Eigenvalues at saddle i (0-based) and its unit unstable eigenvector.

        The eigenvector is oriented to have a positive component along the
        next axis in the cycle.
        """
        xbar = self.a[i] * np.eye(3)[i]
        J = self.field().jacobian(xbar)
        ev, V = np.linalg.eig(J)
        order = np.argsort(ev.real)
        ev = ev.real[order]
        k = order[-1]
        vec = np.real(V[:, k])
        vec = vec / np.linalg.norm(vec)
        if vec[(i + 1) % 3] < 0:
            vec = -vec
        return ev, vec

    def saddle_values(self):
        """Per-saddle ratios nu_i = 1/lambda_u_i, their product, and stability."""
        nu = 1.0 / self.lambda_u
        nu_product = float(np.prod(nu))
        return nu, nu_product, nu_product > 1.0

    def heteroclinic_probe(self, delta: float = 1e-3, floor: float = 1e-6) -> np.ndarray:
        """Start point near saddle 1, kicked along its unstable direction.

        Coordinates are floored at a small positive value: the coordinate
        planes are exactly invariant, so a zero coordinate would never
        activate and the orbit could not cycle.
        """
        _, eu = self.jacobian_eigenstructure(0)
        x0 = self.a[0] * np.eye(3)[0] + delta * eu
        return np.maximum(x0, floor)

    def to_json(self) -> str:
        return json.dumps({
            "a": self.a.tolist(),
            "lambda_u": self.lambda_u.tolist(),
            "rho": self.rho.tolist(),
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "LotkaVolterraSystem":
        d = json.loads(text)
        sys = build_lv(d["a"], d["lambda_u"])
        rho = np.asarray(d["rho"], dtype=float)
        if not np.allclose(rho, sys.rho, rtol=0, atol=1e-12):
            raise ValueError("serialized rho is inconsistent with (a, lambda_u)")
        return sys


def build_lv(a, lambda_u) -> LotkaVolterraSystem:
    """Construct the designed competitive system.

    rho has diagonal 1/a_i, entries (j+1, j) equal to (1 - lambda_u_j)/a_j and
    entries (j+2, j) equal to 2/a_j, indices cyclic.  Requires 0 < lambda_u < 1
    (otherwise competitivity and cycle stability both fail) and a > 0.
    """
    a = np.asarray(a, dtype=float)
    lambda_u = np.asarray(lambda_u, dtype=float)
    if a.shape != (3,) or lambda_u.shape != (3,):
        raise ValueError("the designed cycle is three dimensional: a and lambda_u must have length 3")
    if np.any(a <= 0):
        raise ValueError("axis intercepts a must be positive")
    if np.any(lambda_u <= 0) or np.any(lambda_u >= 1):
        raise ValueError("unstable rates lambda_u must lie strictly inside (0, 1)")
    rho = np.zeros((3, 3))
    for j in range(3):
        rho[j, j] = 1.0 / a[j]
        rho[(j + 1) % 3, j] = (1.0 - lambda_u[j]) / a[j]
        rho[(j + 2) % 3, j] = 2.0 / a[j]
    a.setflags(write=False)
    lambda_u.setflags(write=False)
    rho.setflags(write=False)
    return LotkaVolterraSystem(a=a, lambda_u=lambda_u, rho=rho)


def is_competitive(field: VectorField, box=None, grid: int = 8) -> bool:
    """True iff every off-diagonal Jacobian entry is strictly negative on a grid.

    The default box [0.05, 1]^n stays off the coordinate planes, where the
    partial derivatives of a competitive system degenerate to zero.
    """
    n = field.dim
    if box is None:
        box = [(0.05, 1.0)] * n
    axes = [np.linspace(lo, hi, grid) for (lo, hi) in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    off = ~np.eye(n, dtype=bool)
    for x in mesh:
        J = field.jacobian(x)
        if not np.all(J[off] < 0.0):
            return False
    return True
