"""End-to-end run orchestration shared by the command line and the test suite.

Builds the target's reference orbit, places the section, runs the learned
dynamics from a point on the cycle, and collects every analysis quantity
into one record.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analysis as ana
from .approx import ApproxNetwork, check_side_conditions, lift
from .core import Trajectory
from .integrate import IntegratorConfig, SectionSpec, integrate
from .lv import LotkaVolterraSystem


def reference_orbit(system: LotkaVolterraSystem, t_max: float = 400.0,
                    rtol: float = 1e-10, atol: float = 1e-12,
                    delta: float = 1e-3, floor: float = 1e-6) -> Trajectory:
    """Near-heteroclinic orbit of the target, integrated in log coordinates.

    The returned trajectory is mapped back to state space; deep saddle
    passages round to exactly zero there, which is harmless for the O(1)
    geometry every downstream consumer reads off this orbit.
    """
    x0 = system.heteroclinic_probe(delta=delta, floor=floor)
    cfg = IntegratorConfig(rtol=rtol, atol=atol, t_max=t_max)
    ltraj = integrate(system.log_field(), np.log(x0), cfg)
    return ltraj.map_states(np.exp, np.exp)


def target_section(system: LotkaVolterraSystem, reference: Trajectory,
                   ball_radius: float = 0.1) -> SectionSpec:
    return ana.pick_section(reference, system.saddles, system.field(), ball_radius)


def cycle_proxy(reference: Trajectory, section: SectionSpec) -> np.ndarray:
    """One late lap of the reference orbit, as a polyline standing in for the cycle."""
    from .integrate import detect_crossings

    crossings = [c for c in detect_crossings(reference, section) if not c.grazing]
    if len(crossings) >= 3:
        t0, t1 = crossings[1].t, crossings[2].t
        sel = (reference.times >= t0) & (reference.times <= t1)
        pts = reference.states[sel]
        if len(pts) >= 2:
            return pts
    return reference.states


def net_orbit(net: ApproxNetwork, start, t_max: float = 400.0,
              rtol: float = 1e-9, atol: float = 1e-11) -> Trajectory:
    cfg = IntegratorConfig(rtol=rtol, atol=atol, t_max=t_max)
    return integrate(net.field(), np.asarray(start, dtype=float), cfg)


@dataclass
class RunAnalysis:
    target_first_return: Optional[float]
    target_intervals: np.ndarray
    record: ana.ReturnRecord
    residence: Optional[ana.ResidenceProfile]
    tube_fraction: float
    side_conditions: object
    block_means: Optional[np.ndarray]
    trajectory: Trajectory
    section: SectionSpec

    @property
    def converged_period(self) -> Optional[float]:
        return self.record.converged_period


def analyze_network(net: ApproxNetwork, system: LotkaVolterraSystem,
                    t_max: float = 400.0, residence_radius: float = 0.25,
                    tube_radius: float = 0.15, ref_t_max: float = 400.0) -> RunAnalysis:
    """Full comparison of the learned dynamics against its target."""
    ref = reference_orbit(system, t_max=ref_t_max)
    section = target_section(system, ref)
    proxy = cycle_proxy(ref, section)

    t_ret = ana.first_return_time(ref, section)
    from .integrate import detect_crossings

    ref_crossings = [c.t for c in detect_crossings(ref, section) if not c.grazing]
    target_intervals = np.diff(ref_crossings)

    traj = net_orbit(net, section.point, t_max=t_max)
    try:
        record = ana.detect_periodic_orbit(traj, section)
    except ValueError:
        record = ana.ReturnRecord(crossing_times=np.array([]), crossing_points=np.empty((0, net.n)),
                                  intervals=np.array([]), converged_period=None,
                                  convergence_index=None, point_gaps=np.array([]),
                                  contracting=False)
    residence = None
    tube_fraction = float("nan")
    if len(record.crossing_times) >= 3:
        t_settle = record.crossing_times[2]
        residence = ana.residence_times(traj, system.saddles, r=residence_radius,
                                        t_start=t_settle)
        tube_fraction = ana.tube_containment(traj, proxy, r=tube_radius, t_start=t_settle)
    tube_pts = ana.resample_polyline(proxy, 0.05)
    side = check_side_conditions(net, system, tube_points=tube_pts)
    blocks = None
    if net.block_layout is not None:
        blocks = ana.block_connectivity_means(lift(net)).block_means
    return RunAnalysis(target_first_return=t_ret, target_intervals=target_intervals,
                       record=record, residence=residence, tube_fraction=tube_fraction,
                       side_conditions=side, block_means=blocks, trajectory=traj,
                       section=section)


def run_report_dict(run: RunAnalysis, max_series_points: int = 1200) -> dict:
    """JSON-ready body of an analysis report (plot series included)."""
    traj = run.trajectory
    stride = max(1, len(traj.times) // max_series_points)
    times = traj.times[::stride]
    states = traj.states[::stride]
    rec = run.record
    return {
        "T_g": run.target_first_return,
        "target_intervals": [float(v) for v in run.target_intervals],
        "return_intervals": [float(v) for v in rec.intervals],
        "converged_period": rec.converged_period,
        "convergence_index": rec.convergence_index,
        "contracting": rec.contracting,
        "residence_means": ([float(v) for v in run.residence.mean_residence]
                            if run.residence is not None else None),
        "residence_radius": (run.residence.radius if run.residence is not None else None),
        "lap_count": (run.residence.lap_count if run.residence is not None else 0),
        "tube_fraction": run.tube_fraction,
        "side_conditions": run.side_conditions.to_dict(),
        "block_means": (run.block_means.tolist() if run.block_means is not None else None),
        "section_point": run.section.point.tolist(),
        "section_normal": run.section.normal.tolist(),
        "series": {
            "t": [float(v) for v in times],
            "x": [[float(v) for v in row] for row in states],
        },
    }
