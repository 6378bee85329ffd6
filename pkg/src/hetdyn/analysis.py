"""Quantitative post-processing of orbits: returns, periods, residences, tubes.

The same section-crossing record distinguishes the two regimes this package
cares about: strictly growing return intervals (the designed cycle slows down
on every lap) versus intervals settling to a constant (the learned dynamics
runs on a periodic orbit).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .core import Trajectory, VectorField
from .integrate import Crossing, SectionSpec, detect_crossings


# ---------------------------------------------------------------------------
# sections and returns


def pick_section(reference: Trajectory, saddles, field: VectorField,
                 ball_radius: float = 0.1) -> SectionSpec:
    """Section through the point of the first inter-saddle leg farthest from
    all saddles, oriented along the flow there.

    The leg considered runs from the start of the reference orbit (near the
    first saddle) until it first enters the ball of the second saddle.
    """
    saddles = np.asarray(saddles, dtype=float)
    X = reference.states
    d = np.stack([np.linalg.norm(X - s, axis=1) for s in saddles])
    enters = np.where(d[1] < ball_radius)[0]
    stop = enters[0] if enters.size else len(X)
    seg = d.min(axis=0)[:stop]
    if seg.size == 0:
        raise ValueError("reference orbit never approaches the second saddle")
    k = int(np.argmax(seg))
    p = X[k]
    direction = np.asarray(field(p), dtype=float)
    nrm = np.linalg.norm(direction)
    if nrm == 0:
        raise ValueError("flow vanishes at the chosen section point")
    return SectionSpec(point=p, normal=direction / nrm)


def first_return_time(traj: Trajectory, section: SectionSpec,
                      on_section_tol: float = 1e-12) -> Optional[float]:
    """Time from the first section crossing (or t0 when starting on the
    section) to the next positive crossing; None when there is no return."""
    crossings = [c for c in detect_crossings(traj, section) if not c.grazing]
    t_ref = None
    if abs(float(section.value(traj.states[0]))) < on_section_tol:
        t_ref = traj.t0
    if t_ref is None:
        if len(crossings) < 2:
            return None
        return crossings[1].t - crossings[0].t
    for c in crossings:
        if c.t > t_ref + on_section_tol:
            return c.t - t_ref
    return None


@dataclass
class ReturnRecord:
    crossing_times: np.ndarray
    crossing_points: np.ndarray
    intervals: np.ndarray            # after discarding the transient crossings
    converged_period: Optional[float]
    convergence_index: Optional[int]
    point_gaps: np.ndarray           # |x*_{k+1} - x*_k| for the retained crossings
    contracting: bool

    @property
    def heteroclinic_signature(self) -> bool:
        """Strictly growing intervals: the section returns keep slowing down."""
        return (self.converged_period is None and len(self.intervals) >= 2
                and bool(np.all(np.diff(self.intervals) > 0)))


def detect_periodic_orbit(traj: Trajectory, section: SectionSpec,
                          rel_tol: float = 0.01, transient_skip: int = 2,
                          min_crossings: int = 6) -> ReturnRecord:
    """Classify the return sequence of ``traj`` through ``section``.

    The first ``transient_skip`` crossings are discarded.  The period is
    declared converged at the first interval index k with both
    |T_{k+1}-T_k|/T_k and |T_{k+2}-T_{k+1}|/T_{k+1} below ``rel_tol``; the
    record keeps T_k and the index.  Crossing-point gaps measure the
    contraction of the return map.
    """
    crossings = [c for c in detect_crossings(traj, section) if not c.grazing]
    if len(crossings) < min_crossings:
        raise ValueError(f"need at least {min_crossings} section crossings, found {len(crossings)}")
    times = np.array([c.t for c in crossings])
    points = np.array([c.state for c in crossings])
    use_t = times[transient_skip:]
    use_x = points[transient_skip:]
    intervals = np.diff(use_t)
    converged = None
    conv_idx = None
    for k in range(len(intervals) - 2):
        r1 = abs(intervals[k + 1] - intervals[k]) / intervals[k]
        r2 = abs(intervals[k + 2] - intervals[k + 1]) / intervals[k + 1]
        if r1 < rel_tol and r2 < rel_tol:
            converged = float(intervals[k])
            conv_idx = k
            break
    gaps = np.linalg.norm(np.diff(use_x, axis=0), axis=1)
    contracting = False
    if converged is not None and conv_idx + 2 < len(gaps):
        tail = gaps[conv_idx:]
        contracting = bool(np.all(np.diff(tail) < 1e-12))
    elif converged is not None:
        tail = gaps[conv_idx:]
        contracting = bool(np.all(np.diff(tail) < 1e-12)) if len(tail) >= 2 else True
    return ReturnRecord(crossing_times=times, crossing_points=points,
                        intervals=intervals, converged_period=converged,
                        convergence_index=conv_idx, point_gaps=gaps,
                        contracting=contracting)


# ---------------------------------------------------------------------------
# residence times


@dataclass
class ResidenceProfile:
    radius: float
    visits: list                     # per saddle: list of (t_enter, t_exit)
    mean_residence: np.ndarray       # total ball time / lap count, per saddle
    lap_count: int
    visit_order: list                # saddle indices in entry order

    def cyclic_order_ok(self, cycle=(0, 1, 2)) -> bool:
        """Entries follow the designed cycle, up to the starting phase."""
        order = self.visit_order
        if len(order) < 2:
            return True
        m = len(cycle)
        start = cycle.index(order[0]) if order[0] in cycle else -1
        if start < 0:
            return False
        return all(order[k] == cycle[(start + k) % m] for k in range(len(order)))


def residence_times(traj: Trajectory, saddles, r: float = 0.1,
                    t_start: Optional[float] = None, samples: int = 20000) -> ResidenceProfile:
    """Maximal intervals the orbit spends inside each saddle ball.

    ``mean_residence`` divides the total in-ball time per saddle by the lap
    count (the largest per-saddle visit count), so a saddle the orbit skips
    entirely contributes zero rather than an undefined mean.
    """
    saddles = np.asarray(saddles, dtype=float)
    m = len(saddles)
    pair_min = min(np.linalg.norm(saddles[i] - saddles[j])
                   for i in range(m) for j in range(i + 1, m))
    if not (0 < r < 0.5 * pair_min):
        raise ValueError("ball radius must be positive and below half the smallest saddle separation")
    t0 = traj.t0 if t_start is None else max(float(t_start), traj.t0)
    tt = np.linspace(t0, traj.t_end, samples)
    X = traj.at(tt)
    visits: list = [[] for _ in range(m)]
    events = []
    for i in range(m):
        inside = np.linalg.norm(X - saddles[i], axis=1) < r
        edges = np.flatnonzero(np.diff(inside.astype(np.int8)))
        t_in = None
        if inside[0]:
            t_in = tt[0]
        for e in edges:
            t_edge = _refine_ball_crossing(traj, saddles[i], r, tt[e], tt[e + 1])
            if inside[e + 1] and t_in is None:
                t_in = t_edge
            elif not inside[e + 1] and t_in is not None:
                visits[i].append((t_in, t_edge))
                events.append((t_in, i))
                t_in = None
        if t_in is not None and inside[-1]:
            visits[i].append((t_in, tt[-1]))
            events.append((t_in, i))
    events.sort()
    order = [i for (_, i) in events]
    lap_count = max((len(v) for v in visits), default=0)
    totals = np.array([sum(b - a for (a, b) in v) for v in visits])
    mean = totals / lap_count if lap_count else totals
    return ResidenceProfile(radius=r, visits=visits, mean_residence=mean,
                            lap_count=lap_count, visit_order=order)


def _refine_ball_crossing(traj, center, r, t_lo, t_hi, iters: int = 40):
    f_lo = np.linalg.norm(traj.at(t_lo) - center) - r
    for _ in range(iters):
        mid = 0.5 * (t_lo + t_hi)
        fm = np.linalg.norm(traj.at(mid) - center) - r
        if (fm < 0) == (f_lo < 0):
            t_lo, f_lo = mid, fm
        else:
            t_hi = mid
    return 0.5 * (t_lo + t_hi)


# ---------------------------------------------------------------------------
# tube containment


def resample_polyline(points, step: float = 0.01) -> np.ndarray:
    """Insert points so that no segment of the polyline exceeds ``step``."""
    points = np.asarray(points, dtype=float)
    out = [points[0]]
    for k in range(len(points) - 1):
        seg = points[k + 1] - points[k]
        length = np.linalg.norm(seg)
        pieces = max(1, int(np.ceil(length / step)))
        for j in range(1, pieces + 1):
            out.append(points[k] + seg * (j / pieces))
    return np.asarray(out)


def distance_to_polyline(points, polyline, chunk: int = 2048) -> np.ndarray:
    """Distance from each point to the polyline via segment-wise projection."""
    P = np.asarray(points, dtype=float)
    A = np.asarray(polyline[:-1], dtype=float)
    B = np.asarray(polyline[1:], dtype=float)
    AB = B - A
    denom = np.maximum(np.sum(AB * AB, axis=1), 1e-300)
    out = np.empty(len(P))
    for s0 in range(0, len(P), chunk):
        chunk_pts = P[s0:s0 + chunk]                      # (c, n)
        diff = chunk_pts[:, None, :] - A[None, :, :]      # (c, S, n)
        t = np.clip(np.einsum("csn,sn->cs", diff, AB) / denom, 0.0, 1.0)
        proj = A[None, :, :] + t[:, :, None] * AB[None, :, :]
        dist = np.linalg.norm(chunk_pts[:, None, :] - proj, axis=2)
        out[s0:s0 + chunk] = dist.min(axis=1)
    return out


def tube_containment(traj: Trajectory, reference, r: float = 0.15,
                     t_start: Optional[float] = None, samples: int = 4000,
                     resample_step: float = 0.01) -> float:
    """Fraction of trajectory samples within distance r of the reference curve."""
    if isinstance(reference, Trajectory):
        ref_pts = reference.states
    else:
        ref_pts = np.asarray(reference, dtype=float)
    poly = resample_polyline(ref_pts, resample_step)
    t0 = traj.t0 if t_start is None else max(float(t_start), traj.t0)
    tt = np.linspace(t0, traj.t_end, samples)
    X = traj.at(tt)
    d = distance_to_polyline(X, poly)
    return float(np.mean(d < r))


# ---------------------------------------------------------------------------
# connectivity summaries


@dataclass
class ConnectivitySummary:
    block_means: np.ndarray
    block_sizes: tuple

    def to_dict(self) -> dict:
        return {"block_means": self.block_means.tolist(),
                "block_sizes": list(self.block_sizes)}


def block_connectivity_means(lifted) -> ConnectivitySummary:
    """Arithmetic mean of each population-group block of the lifted connectivity."""
    if lifted.block_layout is None:
        raise ValueError("block connectivity means need a block layout")
    sizes = tuple(lifted.block_layout)
    n = len(sizes)
    WP = lifted.WP
    means = np.empty((n, n))
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for i in range(n):
        for j in range(n):
            block = WP[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]]
            means[i, j] = block.mean()
    return ConnectivitySummary(block_means=means, block_sizes=sizes)
