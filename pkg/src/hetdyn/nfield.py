"""Discrete neural-field systems with prescribed equilibria, and their certificates.

Systems have the form xdot = -x + sigma(W x + b).  Prescribing the equilibria
fixes W: for axial equilibria a_i e_i,

    W = diag(sigma^-1(a_i)/a_i) - b u^T,   u_i = 1/a_i,

and for a perturbed equilibrium matrix X (columns are equilibria),

    W = (sigma^-1(X) - b 1^T) X^-1.

The certificates implemented here:
  * a Lyapunov-like function decreasing along every trajectory of the
    normalized dynamics, which rules out cycles among the equilibria;
  * eigenvalue counts at axial equilibria (at least n-2 unstable, at least
    one stable direction), cross-checked through a secular function obtained
    from the matrix determinant lemma;
  * first-order convergence of the perturbed normalized field to the axial
    one as the perturbation size goes to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import json

import numpy as np

from .core import Activation, Trajectory, VectorField, make_activation
from .integrate import IntegratorConfig, integrate


# ---------------------------------------------------------------------------
# construction


@dataclass(frozen=True)
class NeuralFieldSystem:
    n: int
    W: np.ndarray
    b: np.ndarray
    sigma: Activation
    X: np.ndarray      # equilibria, one per column
    axial: bool

    @property
    def a(self) -> np.ndarray:
        """Axis intercepts; only meaningful for axial systems."""
        return np.diag(self.X)

    def field(self) -> VectorField:
        W, b, sig = self.W, self.b, self.sigma

        def f(x):
            return -x + sig(x @ W.T + b)

        def jac(x):
            return -np.eye(self.n) + sig.deriv(W @ x + b)[:, None] * W

        return VectorField(dim=self.n, func=f, jac=jac, name="nfield")

    def normalized_field(self) -> VectorField:
        """Dynamics of v = X^-1 x; every prescribed equilibrium maps to e_i."""
        Xinv = np.linalg.inv(self.X)
        M = self.sigma.inv(self.X) - np.outer(self.b, np.ones(self.n))
        b, sig = self.b, self.sigma

        def F(v):
            return -v + sig(v @ M.T + b) @ Xinv.T

        def jac(v):
            S = sig.deriv(M @ v + b)
            return -np.eye(self.n) + Xinv @ (S[:, None] * M)

        return VectorField(dim=self.n, func=F, jac=jac, name="nfield_normalized")

    def equilibrium_residuals(self) -> np.ndarray:
        f = self.field()
        return np.linalg.norm(f(self.X.T), axis=1)

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "sigma_kind": self.sigma.kind,
            "X": self.X.tolist(),
            "axial": self.axial,
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "NeuralFieldSystem":
        d = json.loads(text)
        return NeuralFieldSystem(
            n=int(d["n"]),
            W=np.asarray(d["W"], dtype=float),
            b=np.asarray(d["b"], dtype=float),
            sigma=make_activation(d["sigma_kind"]),
            X=np.asarray(d["X"], dtype=float),
            axial=bool(d["axial"]),
        )


def build_axial(a, b, sigma: Activation) -> NeuralFieldSystem:
    """System with equilibria a_i e_i.  Requires 0 < a_i < 1 and b_i > 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    if n < 3:
        raise ValueError("need at least three populations")
    if np.any(a <= 0) or np.any(a >= 1):
        raise ValueError("axial equilibria require a_i in (0, 1): the activation range bounds every equilibrium")
    if np.any(b <= 0):
        raise ValueError("inputs b must be positive")
    A = np.diag(sigma.inv(a) / a)
    W = A - np.outer(b, 1.0 / a)
    X = np.diag(a)
    sys = NeuralFieldSystem(n=n, W=W, b=b, sigma=sigma, X=X, axial=True)
    res = sys.equilibrium_residuals()
    if np.max(res) > 1e-12:
        raise ArithmeticError(f"axial construction left residual {np.max(res):.3e}")
    return sys


def build_perturbed(X_eps, b, sigma: Activation) -> NeuralFieldSystem:
    """System whose equilibria are the columns of X_eps."""
    X_eps = np.asarray(X_eps, dtype=float)
    b = np.asarray(b, dtype=float)
    n = X_eps.shape[0]
    if X_eps.shape != (n, n):
        raise ValueError("X_eps must be square with one equilibrium per column")
    if np.any(np.abs(X_eps) >= 1.0):
        raise ValueError("equilibrium entries must lie strictly inside (-1, 1)")
    cond = np.linalg.cond(X_eps)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError(f"equilibrium matrix is numerically singular (condition number {cond:.3e})")
    W = (sigma.inv(X_eps) - np.outer(b, np.ones(n))) @ np.linalg.inv(X_eps)
    sys = NeuralFieldSystem(n=n, W=W, b=b, sigma=sigma, X=X_eps, axial=False)
    res = sys.equilibrium_residuals()
    if np.max(res) > 1e-12:
        raise ArithmeticError(f"perturbed construction left residual {np.max(res):.3e}")
    return sys


# ---------------------------------------------------------------------------
# Lyapunov certificate


def _adaptive_simpson(f, a, b, tol):
    """Plain adaptive Simpson quadrature (absolute tolerance)."""
    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def rec(x0, x2, f0, f1, f2, whole, tol, depth):
        xm = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl = f(xl)
        fr = f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (rec(x0, xm, f0, fl, f1, left, tol / 2.0, depth - 1)
                + rec(xm, x2, f1, fr, f2, right, tol / 2.0, depth - 1))

    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return rec(a, b, fa, fm, fb, whole, tol, 48)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


class LyapunovEvaluator:
    """Evaluator for V(v) = u(v)^2/2 + sum_i int_0^{v_i} q_i, u(v) = 1 - sum v.

    q_i(r) = (sigma^-1(a_i r) - s_i r)/b_i with s_i = sigma^-1(a_i).  The
    time derivative of V along the normalized dynamics equals
    -sum_i m_i(v) (u(v) - q_i(v_i))^2 with strictly positive weights m_i, so
    V decreases away from equilibria.
    """

    def __init__(self, system: NeuralFieldSystem, quad_tol: float = 1e-10):
        if not system.axial:
            raise ValueError("the Lyapunov construction needs the axial system")
        self.system = system
        self.a = system.a
        self.b = system.b
        self.sigma = system.sigma
        self.s = system.sigma.inv(self.a)
        self.quad_tol = quad_tol
        self._F = system.normalized_field()

    # -- pieces

    def q(self, i: int, r):
        r = np.asarray(r, dtype=float)
        return (self.sigma.inv(self.a[i] * r) - self.s[i] * r) / self.b[i]

    def q_all(self, v):
        v = np.asarray(v, dtype=float)
        return (self.sigma.inv(self.a * v) - self.s * v) / self.b

    def in_domain(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(np.abs(self.a * v) < 1.0))

    def _check_domain(self, v):
        if not self.in_domain(v):
            raise ValueError("point is outside the invertibility cube of the activation")

    # -- values

    def value(self, v) -> float:
        """V(v) by adaptive Simpson on each coordinate integral."""
        v = np.asarray(v, dtype=float)
        self._check_domain(v)
        u = 1.0 - v.sum()
        total = 0.5 * u * u
        for i in range(v.size):
            total += _adaptive_simpson(lambda r, i=i: float(self.q(i, r)),
                                       0.0, float(v[i]), self.quad_tol)
        return float(total)

    def value_batch(self, V) -> np.ndarray:
        """V at many points, with fixed-order Gauss-Legendre coordinate integrals."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if np.any(np.abs(V * self.a) >= 1.0):
            raise ValueError("some points are outside the invertibility cube")
        u = 1.0 - V.sum(axis=1)
        out = 0.5 * u * u
        half = 0.5 * V                       # (m, n)
        # nodes mapped to [0, v_i]: r = half*(xi + 1)
        r = half[:, :, None] * (_GL_NODES[None, None, :] + 1.0)
        qv = (self.sigma.inv(self.a[None, :, None] * r)
              - self.s[None, :, None] * r) / self.b[None, :, None]
        out = out + (half * (qv @ _GL_WEIGHTS)).sum(axis=1)
        return out

    # -- derivatives along the flow

    def derivative(self, v) -> float:
        """dV/dt via the chain rule: grad V . F."""
        v = np.asarray(v, dtype=float)
        self._check_domain(v)
        u = 1.0 - v.sum()
        grad = self.q_all(v) - u
        return float(grad @ self._F(v))

    def derivative_factored(self, v) -> float:
        """dV/dt via the factored form -sum_i m_i (u - q_i)^2.

        The weight m_i = (b_i/a_i) sigma'(theta_i) is evaluated through the
        mean-value difference quotient of sigma, so this path never touches
        the normalized field itself.
        """
        v = np.asarray(v, dtype=float)
        self._check_domain(v)
        u = 1.0 - v.sum()
        beta = self.s * v + self.b * u          # preactivation argument
        alpha = self.sigma.inv(self.a * v)      # comparison argument
        gap = beta - alpha                      # = b_i (u - q_i(v_i))
        num = self.sigma(beta) - self.sigma(alpha)
        slope = np.where(np.abs(gap) > 1e-12,
                         num / np.where(gap == 0.0, 1.0, gap),
                         self.sigma.deriv(0.5 * (beta + alpha)))
        m = (self.b / self.a) * slope
        uq = gap / self.b
        return float(-(m * uq * uq).sum())


def lyapunov_value(evaluator: LyapunovEvaluator, v) -> float:
    return evaluator.value(v)


def lyapunov_derivative(evaluator: LyapunovEvaluator, v) -> float:
    return evaluator.derivative(v)


# ---------------------------------------------------------------------------
# spectral certificate


@dataclass(frozen=True)
class AxialSpectrum:
    eigenvalues: np.ndarray       # real parts, ascending
    max_imag: float
    n_positive: int
    n_negative: int


def axial_spectrum(system: NeuralFieldSystem, i: int) -> AxialSpectrum:
    """Eigenvalues of the Jacobian -I + diag(sigma'(pre)) W at the i-th axial equilibrium."""
    if not system.axial:
        raise ValueError("axial spectrum is defined for axial systems")
    n = system.n
    a = system.a
    pre = np.zeros(n)
    pre[i] = system.sigma.inv(a[i])
    S = system.sigma.deriv(pre)
    J = -np.eye(n) + S[:, None] * system.W
    ev = np.linalg.eigvals(J)
    order = np.argsort(ev.real)
    ev = ev[order]
    return AxialSpectrum(
        eigenvalues=ev.real,
        max_imag=float(np.max(np.abs(ev.imag))),
        n_positive=int(np.sum(ev.real > 0)),
        n_negative=int(np.sum(ev.real < 0)),
    )


def _secular_data(system: NeuralFieldSystem, i: int):
    """Pole positions lambda_j and weights alpha_j of the secular function at saddle i."""
    a, b = system.a, system.b
    n = system.n
    lam = system.sigma.inv(a) / a               # sigma'(0) = 1 off the active index
    sp = system.sigma.deriv(system.sigma.inv(a[i]))
    lam = lam.copy()
    lam[i] = system.sigma.inv(a[i]) * sp / a[i]
    alpha = b / a
    alpha = alpha.copy()
    alpha[i] = b[i] * sp / a[i]
    return lam, alpha


def secular_phi(system: NeuralFieldSystem, i: int, mu: float) -> float:
    """phi(mu) = 1 + sum_j alpha_j / (mu - lambda_j).

    lam is an eigenvalue of the Jacobian at the i-th axial equilibrium iff
    lam + 1 is a repeated lambda_j or phi(lam + 1) = 0.
    """
    lam, alpha = _secular_data(system, i)
    diff = mu - lam
    if np.any(np.abs(diff) < 1e-14 * np.maximum(1.0, np.abs(lam))):
        raise ZeroDivisionError("secular function evaluated at a pole")
    return float(1.0 + np.sum(alpha / diff))


def secular_eigenvalues(system: NeuralFieldSystem, i: int) -> np.ndarray:
    """All Jacobian eigenvalues at the i-th axial equilibrium via the secular function.

    Groups coincident poles, brackets the single root of the strictly
    decreasing branch in every gap plus one below the smallest pole, and adds
    the repeated poles (shifted by -1) with multiplicity reduced by one.
    Serves as the independent cross-oracle for ``axial_spectrum``.
    """
    lam, alpha = _secular_data(system, i)
    order = np.argsort(lam)
    lam_s, alpha_s = lam[order], alpha[order]
    poles, weights, mult = [], [], []
    for l, al in zip(lam_s, alpha_s):
        if poles and abs(l - poles[-1]) < 1e-12 * max(1.0, abs(l)):
            weights[-1] += al
            mult[-1] += 1
        else:
            poles.append(l); weights.append(al); mult.append(1)
    poles = np.asarray(poles); weights = np.asarray(weights)

    def phi(mu):
        return 1.0 + np.sum(weights / (mu - poles))

    k = len(poles)
    roots = []
    lo0 = poles[0] - (1.0 + float(np.sum(weights)))
    brackets = [(lo0, poles[0])] + [(poles[j], poles[j + 1]) for j in range(k - 1)]
    for idx, (lo, hi) in enumerate(brackets):
        nudge_lo = 0.0 if idx == 0 else 1e-13 * max(1.0, abs(lo))
        nudge_hi = 1e-13 * max(1.0, abs(hi))
        a_, b_ = lo + nudge_lo, hi - nudge_hi
        fa = phi(a_)
        if not fa > 0:
            a_ = lo + 1e-15 * max(1.0, abs(lo))
            fa = phi(a_)
        fb = phi(b_)
        if not (fa > 0 > fb):
            raise ArithmeticError("secular bracketing failed; poles too close to resolve")
        for _ in range(200):
            mid = 0.5 * (a_ + b_)
            if phi(mid) > 0:
                a_ = mid
            else:
                b_ = mid
            if b_ - a_ <= 1e-15 * max(1.0, abs(mid)):
                break
        roots.append(0.5 * (a_ + b_))
    eigs = [r - 1.0 for r in roots]
    for l, m in zip(poles, mult):
        eigs.extend([l - 1.0] * (m - 1))
    return np.sort(np.asarray(eigs))


# ---------------------------------------------------------------------------
# perturbation convergence


@dataclass(frozen=True)
class ConvergenceRow:
    eps: float
    sup_value: float
    sup_jacobian: float
    skipped: bool = False
    reason: str = ""


def normalized_eval_box(a, margin: float = 0.95):
    """Box strictly inside the invertibility cube of the normalized coordinates."""
    a = np.asarray(a, dtype=float)
    return [(-margin / ai, margin / ai) for ai in a]


def perturbation_convergence(a, b, sigma: Activation, E_direction, eps_list,
                             grid: int = 21, margin: float = 0.95) -> list[ConvergenceRow]:
    """sup |F_eps - F| and sup ||DF_eps - DF|| over a grid, per perturbation size.

    E_direction is normalized to unit spectral norm, so the equilibrium
    matrix perturbation has norm exactly eps.  Rows where the perturbed
    equilibria leave the admissible region are skipped with a reason.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    E = np.asarray(E_direction, dtype=float)
    E = E / np.linalg.norm(E, 2)
    base = build_axial(a, b, sigma)
    F = base.normalized_field()
    box = normalized_eval_box(a, margin)
    axes = [np.linspace(lo, hi, grid) for (lo, hi) in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    rows: list[ConvergenceRow] = []
    for eps in eps_list:
        X_eps = np.diag(a) + eps * E
        if np.any(np.abs(X_eps) >= 1.0) or np.linalg.cond(X_eps) > 1e12:
            rows.append(ConvergenceRow(eps=float(eps), sup_value=np.nan, sup_jacobian=np.nan,
                                       skipped=True, reason="perturbed equilibria leave (-1,1) or go singular"))
            continue
        pert = build_perturbed(X_eps, b, sigma)
        Fe = pert.normalized_field()
        dval = np.linalg.norm(Fe(mesh) - F(mesh), axis=1)
        djac = 0.0
        for v in mesh:
            djac = max(djac, np.linalg.norm(Fe.jacobian(v) - F.jacobian(v), 2))
        rows.append(ConvergenceRow(eps=float(eps), sup_value=float(dval.max()),
                                   sup_jacobian=float(djac)))
    return rows


def convergence_rows_to_csv(rows, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "sup_value", "sup_jacobian", "skipped", "reason"])
        for r in rows:
            w.writerow([repr(r.eps), repr(r.sup_value), repr(r.sup_jacobian),
                        int(r.skipped), r.reason])


# ---------------------------------------------------------------------------
# property suites (used by the command-line verifier and the test suite)


def draw_axial_system(n: int, rng: np.random.Generator, sigma: Activation) -> NeuralFieldSystem:
    """Random admissible axial system: a ~ U(0.2, 0.9), b ~ U(0.1, 1.0)."""
    a = rng.uniform(0.2, 0.9, size=n)
    b = rng.uniform(0.1, 1.0, size=n)
    return build_axial(a, b, sigma)


def _stacked(field: VectorField, copies: int) -> VectorField:
    """Independent copies of a field as one block system (used to batch orbits)."""
    n = field.dim

    def f(z):
        return field(z.reshape(copies, n)).reshape(-1)

    return VectorField(dim=n * copies, func=f, name=f"{field.name}_x{copies}")


@dataclass
class LyapunovSuiteResult:
    n: int
    draws: int
    seed: int
    points_per_system: int
    trajectories_per_system: int
    max_derivative: float          # most positive dV/dt seen at sampled points
    max_traj_increase: float       # most positive V increment along trajectories
    ball_order_violations: int
    passed: bool


def run_lyapunov_suite(n: int, draws: int, seed: int, sigma_kind: str = "tanh",
                       points: int = 500, trajectories: int = 10,
                       slack: float = 1e-8, t_span: float = 10.0) -> LyapunovSuiteResult:
    """Monotonicity certificate: dV/dt <= slack at sampled points and V
    nonincreasing along integrated trajectories; additionally checks that
    consecutive visits to distinct equilibrium balls happen at decreasing V.
    """
    rng = np.random.default_rng(seed)
    sigma = make_activation(sigma_kind)
    worst_point = -np.inf
    worst_traj = -np.inf
    ball_violations = 0
    for _ in range(draws):
        system = draw_axial_system(n, rng, sigma)
        ev = LyapunovEvaluator(system)
        a = system.a
        # sample inside a safe sub-box of the invertibility cube
        lo = -0.45 / a
        hi = 0.98 / a
        V = rng.uniform(lo, hi, size=(points, n))
        for v in V:
            worst_point = max(worst_point, ev.derivative(v))
        F = ev._F
        starts = rng.uniform(-0.2 / a, 0.9 / a, size=(trajectories, n))
        cfg = IntegratorConfig(rtol=1e-8, atol=1e-10, t_max=t_span)
        traj = integrate(_stacked(F, trajectories), starts.reshape(-1), cfg)
        states = traj.states.reshape(len(traj.times), trajectories, n)
        for j in range(trajectories):
            path = states[:, j, :]
            vals = ev.value_batch(path)
            worst_traj = max(worst_traj, float(np.max(np.diff(vals))))
            ball_violations += _ball_visit_violations(path, vals, r=0.05)
    passed = worst_point <= slack and worst_traj <= slack and ball_violations == 0
    return LyapunovSuiteResult(n=n, draws=draws, seed=seed, points_per_system=points,
                               trajectories_per_system=trajectories,
                               max_derivative=float(worst_point),
                               max_traj_increase=float(worst_traj),
                               ball_order_violations=int(ball_violations),
                               passed=passed)


def _ball_visit_violations(path: np.ndarray, vals: np.ndarray, r: float) -> int:
    """Count visits to an equilibrium ball at a V not below the previous ball's V."""
    n = path.shape[1]
    eye = np.eye(n)
    violations = 0
    last_idx = None
    last_exit_value = None
    inside = None
    for k in range(len(path)):
        d = np.linalg.norm(path[k] - eye, axis=1)
        hits = np.where(d < r)[0]
        cur = int(hits[0]) if hits.size else None
        if cur is not None and cur != inside:
            if last_idx is not None and cur != last_idx and last_exit_value is not None:
                if vals[k] >= last_exit_value + 1e-8:
                    violations += 1
            last_idx = cur
        if cur is None and inside is not None:
            last_exit_value = vals[k - 1]
        inside = cur
    return violations


@dataclass
class SpectralSuiteResult:
    n: int
    draws: int
    seed: int
    max_imag: float
    min_positive_count: int
    min_negative_count: int
    max_secular_mismatch: float
    interlacing_violations: int
    passed: bool


def run_spectral_suite(n: int, draws: int, seed: int, sigma_kind: str = "tanh") -> SpectralSuiteResult:
    """Eigenvalue counting at every axial equilibrium of random systems.

    Checks: realness (imaginary parts below 1e-9), at least n-2 positive and
    at least one negative eigenvalue, agreement with the secular-function
    roots to 1e-8, and the interlacing bounds (largest eigenvalue below the
    largest pole minus one, most negative below the smallest pole minus one).
    """
    rng = np.random.default_rng(seed)
    sigma = make_activation(sigma_kind)
    max_imag = 0.0
    min_pos = n
    min_neg = n
    max_mismatch = 0.0
    interlacing_bad = 0
    for _ in range(draws):
        system = draw_axial_system(n, rng, sigma)
        for i in range(n):
            spec = axial_spectrum(system, i)
            max_imag = max(max_imag, spec.max_imag)
            min_pos = min(min_pos, spec.n_positive)
            min_neg = min(min_neg, spec.n_negative)
            sec = secular_eigenvalues(system, i)
            max_mismatch = max(max_mismatch, float(np.max(np.abs(sec - spec.eigenvalues))))
            lam, _ = _secular_data(system, i)
            if not (spec.eigenvalues[-1] <= lam.max() - 1.0 + 1e-9
                    and spec.eigenvalues[0] <= lam.min() - 1.0 + 1e-9):
                interlacing_bad += 1
    passed = (max_imag < 1e-9 and min_pos >= n - 2 and min_neg >= 1
              and max_mismatch < 1e-8 and interlacing_bad == 0)
    return SpectralSuiteResult(n=n, draws=draws, seed=seed, max_imag=float(max_imag),
                               min_positive_count=int(min_pos), min_negative_count=int(min_neg),
                               max_secular_mismatch=float(max_mismatch),
                               interlacing_violations=int(interlacing_bad), passed=passed)


@dataclass
class PerturbationSuiteResult:
    n: int
    draws: int
    seed: int
    max_residual: float
    monotone_failures: int
    ratio_failures: int
    passed: bool


def run_perturbation_suite(n: int, draws: int, seed: int, sigma_kind: str = "tanh",
                           eps_list=(1e-2, 1e-3, 1e-4), grid: int = 9,
                           ratio_band=(0.05, 0.2)) -> PerturbationSuiteResult:
    """Equilibrium residuals of perturbed systems and first-order shrinkage of
    the normalized-field gap over decreasing perturbation sizes."""
    rng = np.random.default_rng(seed)
    sigma = make_activation(sigma_kind)
    max_res = 0.0
    monotone_bad = 0
    ratio_bad = 0
    for _ in range(draws):
        a = rng.uniform(0.3, 0.8, size=n)
        b = rng.uniform(0.1, 1.0, size=n)
        E = rng.standard_normal((n, n))
        rows = perturbation_convergence(a, b, sigma, E, eps_list, grid=grid)
        sups = [r.sup_value + r.sup_jacobian for r in rows if not r.skipped]
        for r in rows:
            if r.skipped:
                continue
            X_eps = np.diag(a) + r.eps * (E / np.linalg.norm(E, 2))
            pert = build_perturbed(X_eps, b, sigma)
            max_res = max(max_res, float(np.max(pert.equilibrium_residuals())))
        if len(sups) >= 2:
            if not all(s2 < s1 for s1, s2 in zip(sups, sups[1:])):
                monotone_bad += 1
            for s1, s2 in zip(sups, sups[1:]):
                if not (ratio_band[0] <= s2 / s1 <= ratio_band[1]):
                    ratio_bad += 1
    passed = max_res < 1e-12 and monotone_bad == 0 and ratio_bad == 0
    return PerturbationSuiteResult(n=n, draws=draws, seed=seed, max_residual=float(max_res),
                                   monotone_failures=int(monotone_bad),
                                   ratio_failures=int(ratio_bad), passed=passed)
