"""One-hidden-layer approximation of a target vector field.

The model is f(x) = -x + P sigma(W x + b): hidden width N, read-out P that may
carry a block-diagonal structure assigning disjoint hidden groups to each
output coordinate.  Training minimizes the mean squared residual against
sampled field values with Adam, then solves the read-out exactly by least
squares (P enters linearly).  An optional no-outflow hinge keeps the positive
orthant forward-invariant, which is what the periodic-orbit results ask of the
learned field at the saddles of the target.

Lifting: the same parameters define an N-population system
ydot = -y + sigma(W P y + b) whose projection P y follows the learned
low-dimensional dynamics exactly.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field as dc_field, asdict
from typing import Optional, Sequence

import numpy as np

from .core import Activation, VectorField, make_activation


# ---------------------------------------------------------------------------
# network


def _block_mask(n: int, N: int, block_layout) -> np.ndarray:
    mask = np.zeros((n, N))
    if block_layout is None:
        mask[:] = 1.0
        return mask
    layout = list(block_layout)
    if len(layout) != n or any(s <= 0 for s in layout) or sum(layout) != N:
        raise ValueError("block layout must give one positive width per output, summing to the hidden width")
    start = 0
    for i, size in enumerate(layout):
        mask[i, start:start + size] = 1.0
        start += size
    return mask


@dataclass(frozen=True)
class ApproxNetwork:
    n: int
    N: int
    P: np.ndarray                       # (n, N) read-out, structural zeros exact
    W: np.ndarray                       # (N, n)
    b: np.ndarray                       # (N,)
    sigma: Activation
    block_layout: Optional[tuple] = None

    def __post_init__(self):
        mask = _block_mask(self.n, self.N, self.block_layout)
        if np.any(self.P[mask == 0.0] != 0.0):
            raise ValueError("read-out violates its block structure")

    @property
    def mask(self) -> np.ndarray:
        return _block_mask(self.n, self.N, self.block_layout)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return -x + self.sigma(x @ self.W.T + self.b) @ self.P.T

    def field(self) -> VectorField:
        P, W, b, sig = self.P, self.W, self.b, self.sigma

        def jac(x):
            s = sig.deriv(W @ x + b)
            return -np.eye(self.n) + (P * s[None, :]) @ W

        return VectorField(dim=self.n, func=self.__call__, jac=jac, name="approx_net")

    def to_json(self, seed=None, config=None) -> str:
        payload = {
            "n": self.n,
            "N": self.N,
            "block_layout": list(self.block_layout) if self.block_layout else None,
            "P": self.P.tolist(),
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "sigma_kind": self.sigma.kind,
            "seed": seed,
            "config": config,
        }
        return json.dumps(payload, indent=2)

    @staticmethod
    def from_json(text: str) -> tuple["ApproxNetwork", dict]:
        d = json.loads(text)
        net = ApproxNetwork(
            n=int(d["n"]),
            N=int(d["N"]),
            P=np.asarray(d["P"], dtype=float),
            W=np.asarray(d["W"], dtype=float),
            b=np.asarray(d["b"], dtype=float),
            sigma=make_activation(d["sigma_kind"]),
            block_layout=tuple(d["block_layout"]) if d.get("block_layout") else None,
        )
        meta = {"seed": d.get("seed"), "config": d.get("config")}
        return net, meta


def init_network(n: int, N: int, block_layout=None, seed: int = 0,
                 sigma_kind: str = "tanh", w_scale: float = 3.0,
                 b_scale: float = 2.0) -> ApproxNetwork:
    """Seeded initialization.

    W ~ U(+-w_scale*sqrt(6/(n+N))); b ~ U(-b_scale, b_scale) spreads the unit
    kinks across the domain instead of stacking them at the origin; nonzero P
    entries ~ U(-1, 1)/sqrt(block width).
    """
    if N < n:
        raise ValueError("hidden width must be at least the output dimension")
    rng = np.random.default_rng(seed)
    lim = w_scale * np.sqrt(6.0 / (n + N))
    W = rng.uniform(-lim, lim, size=(N, n))
    b = rng.uniform(-b_scale, b_scale, size=N)
    mask = _block_mask(n, N, block_layout)
    P = np.zeros((n, N))
    for i in range(n):
        cols = mask[i] > 0
        width = int(cols.sum())
        P[i, cols] = rng.uniform(-1.0, 1.0, size=width) / np.sqrt(width)
    return ApproxNetwork(n=n, N=N, P=P, W=W, b=b, sigma=make_activation(sigma_kind),
                         block_layout=tuple(block_layout) if block_layout else None)


# ---------------------------------------------------------------------------
# datasets


def sample_dataset(field: VectorField, box, D: int, seed: int):
    """D i.i.d. uniform points on the box and their field values; deterministic per seed."""
    if D < 1:
        raise ValueError("need at least one sample")
    lo = np.asarray([lo for lo, _ in box], dtype=float)
    hi = np.asarray([hi for _, hi in box], dtype=float)
    rng = np.random.default_rng(seed)
    X = rng.uniform(lo, hi, size=(D, len(box)))
    Y = np.asarray(field(X), dtype=float)
    if not np.all(np.isfinite(Y)):
        raise FloatingPointError("target field produced non-finite samples")
    return X, Y


_DATASET_MAGIC = b"VFDS"


def save_dataset(path, X, Y, seed: int):
    """Binary column cache: magic, version, D, n, seed, then X and Y as little-endian f64."""
    X = np.ascontiguousarray(X, dtype="<f8")
    Y = np.ascontiguousarray(Y, dtype="<f8")
    D, n = X.shape
    with open(path, "wb") as fh:
        fh.write(_DATASET_MAGIC)
        fh.write(struct.pack("<IQIQ", 1, D, n, seed))
        fh.write(X.tobytes())
        fh.write(Y.tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DATASET_MAGIC:
            raise ValueError("not a dataset cache file")
        version, D, n, seed = struct.unpack("<IQIQ", fh.read(24))
        if version != 1:
            raise ValueError(f"unsupported dataset cache version {version}")
        X = np.frombuffer(fh.read(8 * D * n), dtype="<f8").reshape(D, n).copy()
        Y = np.frombuffer(fh.read(8 * D * n), dtype="<f8").reshape(D, n).copy()
    return X, Y, int(seed)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    D: int = 100_000
    box: Sequence = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    lr: float = 1e-2
    lr_min_frac: float = 1e-4          # cosine floor as a fraction of lr
    beta1: float = 0.9
    beta2: float = 0.999
    batch: int = 1024
    epochs: int = 600
    seed: int = 0
    val_fraction: float = 0.05
    patience: Optional[int] = None     # epochs without val improvement before stopping
    jacobian_penalty_weight: float = 0.0
    orthant_hinge_weight: float = 0.0  # >0 penalizes outflow through the x_j = 0 faces
    face_margin: float = 0.003
    face_samples: int = 96             # hinge samples per face per batch
    readout_refit: bool = True
    refit_face_iters: int = 4

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("dataset size must be positive")
        if self.batch < 1 or self.batch > self.D:
            raise ValueError("batch size must be in [1, D]")
        if self.jacobian_penalty_weight < 0:
            raise ValueError("jacobian penalty weight must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["box"] = [list(pair) for pair in self.box]
        return d


@dataclass
class TrainResult:
    loss_trace: list          # per-epoch running batch-mean MSE
    val_trace: list
    final_train_mse: float
    stopped_epoch: int
    diverged: bool = False


class _Adam:
    def __init__(self, shapes, beta1, beta2, eps=1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1; m += (1 - self.beta1) * g
            v *= self.beta2; v += (1 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _positive_faces(box):
    """Axes whose lower box edge is at zero: the faces the hinge protects."""
    return [j for j, (lo, _) in enumerate(box) if lo == 0.0]


def train(net: ApproxNetwork, dataset, config: TrainConfig,
          target_field: Optional[VectorField] = None):
    """Train a copy of ``net`` on (X, Y) pairs; returns (trained net, TrainResult).

    ``target_field`` is only needed when the Jacobian penalty is active.
    Deterministic for a fixed seed in single-threaded execution.
    """
    X, Y = dataset
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(X) == 0:
        raise ValueError("dataset is empty")
    if config.jacobian_penalty_weight > 0 and target_field is None:
        raise ValueError("jacobian penalty needs the target field")
    n, N = net.n, net.N
    sig = net.sigma
    mask = net.mask
    P = net.P.copy(); W = net.W.copy(); b = net.b.copy()

    rng = np.random.default_rng(config.seed)
    nval = int(config.val_fraction * len(X))
    Xv, Yv = X[:nval], Y[:nval]
    Xt, Yt = X[nval:], Y[nval:]
    if len(Xt) == 0:
        Xt, Yt = X, Y

    def model(x):
        return -x + sig(x @ W.T + b) @ P.T

    def mse(x, y):
        r = model(x) - y
        return float(np.mean(np.sum(r * r, axis=1)))

    opt = _Adam([P.shape, W.shape, b.shape], config.beta1, config.beta2)
    faces = _positive_faces(config.box) if config.orthant_hinge_weight > 0 else []
    lo = np.asarray([l for l, _ in config.box], dtype=float)
    hi = np.asarray([h for _, h in config.box], dtype=float)

    loss_trace: list = []
    val_trace: list = []
    best_val = np.inf
    since_best = 0
    ntr = len(Xt)
    initial_loss = mse(Xt[:min(4096, ntr)], Yt[:min(4096, ntr)])
    stopped = 0
    diverged = False

    for ep in range(config.epochs):
        frac = ep / max(1, config.epochs - 1)
        lr_ep = config.lr * (config.lr_min_frac
                             + (1.0 - config.lr_min_frac) * 0.5 * (1.0 + np.cos(np.pi * frac)))
        perm = rng.permutation(ntr)
        ep_loss = 0.0
        nb = 0
        for s0 in range(0, ntr, config.batch):
            idx = perm[s0:s0 + config.batch]
            x, y = Xt[idx], Yt[idx]
            B = len(x)
            Z = x @ W.T + b
            H = sig(Z)
            R = -x + H @ P.T - y
            ep_loss += float(np.mean(np.sum(R * R, axis=1)))
            nb += 1
            gP = (2.0 / B) * (R.T @ H) * mask
            Delta = (R @ P) * sig.deriv(Z)
            gW = (2.0 / B) * (Delta.T @ x)
            gb = (2.0 / B) * Delta.sum(axis=0)
            if config.jacobian_penalty_weight > 0:
                w = config.jacobian_penalty_weight
                sub = x[:min(16, B)]                   # penalty on a batch subsample
                for xi in sub:
                    z = W @ xi + b
                    S = sig.deriv(z)
                    RJ = (P * S[None, :]) @ W - (target_field.jacobian(xi) + np.eye(n))
                    M1 = P.T @ RJ                      # (N, n)
                    cw = 2.0 * w / len(sub)
                    gP += cw * (RJ @ W.T) * S[None, :] * mask
                    gW += cw * (S[:, None] * M1)
                    dz = cw * np.sum(W * M1, axis=1) * sig.second_deriv(z)
                    gW += np.outer(dz, xi)
                    gb += dz
            if faces:
                nf = config.face_samples
                xf = rng.uniform(lo, hi, size=(len(faces) * nf, n))
                Rf = np.zeros((len(faces) * nf, n))
                for fi, j in enumerate(faces):
                    xf[fi * nf:(fi + 1) * nf, j] = 0.0
                Zf = xf @ W.T + b
                Hf = sig(Zf)
                Ff = -xf + Hf @ P.T
                for fi, j in enumerate(faces):
                    rowsl = slice(fi * nf, (fi + 1) * nf)
                    Rf[rowsl, j] = np.minimum(Ff[rowsl, j] - config.face_margin, 0.0)
                wf = config.orthant_hinge_weight
                Bf = len(xf)
                gP += (2.0 * wf / Bf) * (Rf.T @ Hf) * mask
                Df = (Rf @ P) * sig.deriv(Zf)
                gW += (2.0 * wf / Bf) * (Df.T @ xf)
                gb += (2.0 * wf / Bf) * Df.sum(axis=0)
            opt.step([P, W, b], [gP, gW, gb], lr_ep)
            P *= mask
        ep_loss /= max(nb, 1)
        loss_trace.append(ep_loss)
        if ep_loss > 1e3 * max(initial_loss, 1e-30):
            diverged = True
            stopped = ep + 1
            break
        if len(Xv):
            val = mse(Xv, Yv)
            val_trace.append(val)
            if val < best_val * (1.0 - 1e-4):
                best_val = val
                since_best = 0
            else:
                since_best += 1
                if config.patience is not None and since_best >= config.patience:
                    stopped = ep + 1
                    break
        stopped = ep + 1

    if diverged:
        trained = ApproxNetwork(n=n, N=N, P=P, W=W, b=b, sigma=sig, block_layout=net.block_layout)
        result = TrainResult(loss_trace=loss_trace, val_trace=val_trace,
                             final_train_mse=loss_trace[-1], stopped_epoch=stopped, diverged=True)
        raise TrainingDiverged(trained, result)

    if config.readout_refit and config.epochs > 0:
        P = _refit_readout(P, W, b, sig, mask, X, Y, config)

    trained = ApproxNetwork(n=n, N=N, P=P, W=W, b=b, sigma=sig, block_layout=net.block_layout)
    final = float(np.mean(np.sum((trained(Xt) - Yt) ** 2, axis=1)))
    return trained, TrainResult(loss_trace=loss_trace, val_trace=val_trace,
                                final_train_mse=final, stopped_epoch=stopped)


class TrainingDiverged(RuntimeError):
    def __init__(self, net, result):
        super().__init__("training diverged: loss exceeded 1e3 x initial")
        self.net = net
        self.result = result


def _refit_readout(P, W, b, sig, mask, X, Y, config: TrainConfig) -> np.ndarray:
    """Exact least-squares read-out per block; P is linear in the model.

    When the orthant hinge is active, face grids are checked for outflow and
    violating points are folded back in as weighted rows until clean (or the
    iteration budget runs out).
    """
    n, N = mask.shape
    H0 = sig(X @ W.T + b)
    T0 = Y + X
    Pc = P.copy()

    def solve(extra):
        start = 0
        for i in range(n):
            cols = mask[i] > 0
            Hs = [H0[:, cols]]
            ts = [T0[:, i]]
            for (Hb, tb, wgt) in extra.get(i, []):
                Hs.append(Hb[:, cols] * wgt)
                ts.append(tb * wgt)
            A = np.vstack(Hs)
            t = np.concatenate(ts)
            sol, *_ = np.linalg.lstsq(A, t, rcond=None)
            row = np.zeros(N)
            row[cols] = sol
            Pc[i] = row

    solve({})
    faces = _positive_faces(config.box) if config.orthant_hinge_weight > 0 else []
    if not faces:
        return Pc * mask
    lo = np.asarray([l for l, _ in config.box], dtype=float)
    hi = np.asarray([h for _, h in config.box], dtype=float)
    rngf = np.random.default_rng(0xFACE)
    grids = {}
    for j in faces:
        gpts = rngf.uniform(lo, hi, size=(4000, n))
        gpts[:, j] = 0.0
        grids[j] = (gpts, sig(gpts @ W.T + b))
    kappa = 50.0
    extra: dict = {}
    for _ in range(config.refit_face_iters):
        nviol = 0
        for j in faces:
            gpts, Hg = grids[j]
            Fj = -gpts[:, j] + Hg @ Pc[j]
            bad = Fj < 0.0
            nviol += int(bad.sum())
            if bad.any():
                tb = np.full(int(bad.sum()), config.face_margin)
                extra.setdefault(j, []).append((Hg[bad], tb, kappa))
        if nviol == 0:
            break
        solve(extra)
    return Pc * mask


# ---------------------------------------------------------------------------
# quality measures and side conditions


def c1_error(net: ApproxNetwork, target: VectorField, box, grid: int = 41):
    """(sup value error, sup Jacobian spectral-norm error) over a regular grid."""
    n = net.n
    axes = [np.linspace(lo, hi, grid) for (lo, hi) in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    dval = np.linalg.norm(net(mesh) - target(mesh), axis=1)
    nf = net.field()
    djac = np.empty(len(mesh))
    for k, x in enumerate(mesh):
        djac[k] = np.linalg.norm(nf.jacobian(x) - target.jacobian(x), 2)
    return float(dval.max()), float(djac.max())


def sup_value_error(net: ApproxNetwork, target: VectorField, box, grid: int = 41) -> float:
    n = net.n
    axes = [np.linspace(lo, hi, grid) for (lo, hi) in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return float(np.linalg.norm(net(mesh) - target(mesh), axis=1).max())


@dataclass(frozen=True)
class SideConditions:
    nonvanishing: tuple          # per saddle: |f(saddle)| > 1e-8
    saddle_norms: tuple
    positivity: tuple            # per saddle: <f(saddle), unstable dir> > 0
    positivity_values: tuple
    competitive_on_tube: bool

    def to_dict(self) -> dict:
        return {
            "nonvanishing": list(self.nonvanishing),
            "saddle_norms": list(self.saddle_norms),
            "positivity": list(self.positivity),
            "positivity_values": list(self.positivity_values),
            "competitive_on_tube": self.competitive_on_tube,
        }


def check_side_conditions(net: ApproxNetwork, lv_system, tube_points=None,
                          tol: float = 1e-8) -> SideConditions:
    """Hypothesis report at the target's saddles and along a tube sample.

    ``tube_points``: states near the cycle at which competitivity of the
    learned field is sampled; when omitted only the saddles are used.
    """
    saddles = lv_system.saddles
    norms = []
    nonvan = []
    posvals = []
    pos = []
    for i in range(3):
        fx = net(saddles[i])
        _, eu = lv_system.jacobian_eigenstructure(i)
        norms.append(float(np.linalg.norm(fx)))
        nonvan.append(bool(norms[-1] > tol))
        posvals.append(float(fx @ eu))
        pos.append(bool(posvals[-1] > 0.0))
    pts = saddles if tube_points is None else np.asarray(tube_points, dtype=float)
    nf = net.field()
    off = ~np.eye(net.n, dtype=bool)
    competitive = True
    for x in pts:
        if not np.all(nf.jacobian(x)[off] < 0.0):
            competitive = False
            break
    return SideConditions(nonvanishing=tuple(nonvan), saddle_norms=tuple(norms),
                          positivity=tuple(pos), positivity_values=tuple(posvals),
                          competitive_on_tube=competitive)


# ---------------------------------------------------------------------------
# lifted system


@dataclass(frozen=True)
class LiftedSystem:
    N: int
    WP: np.ndarray        # (N, N) connectivity
    b: np.ndarray
    P: np.ndarray         # (n, N) projection back to observables
    sigma: Activation
    block_layout: Optional[tuple] = None

    def field(self) -> VectorField:
        WP, b, sig = self.WP, self.b, self.sigma

        def H(y):
            return -y + sig(y @ WP.T + b)

        def jac(y):
            return -np.eye(self.N) + sig.deriv(WP @ y + b)[:, None] * WP

        return VectorField(dim=self.N, func=H, jac=jac, name="lifted")

    def project(self, y):
        return np.asarray(y, dtype=float) @ self.P.T


def lift(net: ApproxNetwork) -> LiftedSystem:
    """N-population system whose projection follows the learned dynamics.

    With y' = -y + sigma(W P y + b) and x = P y one has x' = f(x) exactly:
    P H(y) = f(P y) is an algebraic identity.
    """
    return LiftedSystem(N=net.N, WP=net.W @ net.P, b=net.b.copy(), P=net.P.copy(),
                        sigma=net.sigma, block_layout=net.block_layout)
