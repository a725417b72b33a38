"""Experiment orchestration: with/without-topology ablation over seeds on
identical sensor streams, plus duplicate-landmark accounting."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .geometry import from_minimal
from .metrics import TrajectoryPair, ate
from .pipeline import SlamConfig, SlamResult, run_slam
from .simulator import (
    LayoutSpec,
    NoiseSpec,
    ScanPattern,
    SimStep,
    TrajectorySpec,
    WorldModel,
    generate_world,
    simulate_run,
)


def stream_digest(steps: list[SimStep]) -> str:
    """Stable digest of a sensor stream (poses and scans)."""
    h = hashlib.sha256()
    for s in steps:
        h.update(np.float64(s.timestamp).tobytes())
        h.update(s.gt_pose.rotation.tobytes())
        h.update(s.gt_pose.translation.tobytes())
        h.update(s.odom_pose.rotation.tobytes())
        h.update(s.odom_pose.translation.tobytes())
        h.update(s.scan.points.tobytes())
    return h.hexdigest()


def world_infinite_planes(world: WorldModel) -> list[tuple[int, float]]:
    """Distinct (axis, offset) infinite planes among the world rectangles."""
    seen = set()
    out = []
    for w in world.walls:
        key = (w.axis, round(w.offset, 9))
        if key not in seen:
            seen.add(key)
            out.append((w.axis, w.offset))
    return out


def duplicate_plane_count(
    result: SlamResult, world: WorldModel, dist_tol: float = 0.5, angle_tol: float = 0.17
) -> int:
    """Landmarks in excess of one per matched ground-truth plane."""
    gt = world_infinite_planes(world)
    matches = {i: 0 for i in range(len(gt))}
    for lm in result.graph.planes.values():
        hess = from_minimal(lm.params)
        best = None
        best_err = dist_tol
        for i, (axis, offset) in enumerate(gt):
            n_gt = np.zeros(3)
            n_gt[axis] = 1.0 if offset >= 0 else -1.0
            cos = abs(float(hess.normal @ n_gt))
            if cos < np.cos(angle_tol):
                continue
            err = abs(hess.distance - abs(offset))
            if err < best_err:
                best_err = err
                best = i
        if best is not None:
            matches[best] += 1
    return sum(max(0, c - 1) for c in matches.values())


@dataclass
class RunMetrics:
    ate: float
    n_planes: int
    n_duplicates: int
    n_rooms: int
    n_corridors: int
    final_cost: float


@dataclass
class AblationReport:
    seeds: list[int]
    digests: dict[int, str]
    full: dict[int, RunMetrics]
    without_topology: dict[int, RunMetrics]

    def mean_ate(self, which: str) -> float:
        runs = self.full if which == "full" else self.without_topology
        return float(np.mean([m.ate for m in runs.values()]))

    def mean_duplicates(self, which: str) -> float:
        runs = self.full if which == "full" else self.without_topology
        return float(np.mean([m.n_duplicates for m in runs.values()]))

    @property
    def improvement_confirmed(self) -> bool:
        return (
            self.mean_ate("full") < self.mean_ate("without")
            and self.mean_duplicates("full") <= self.mean_duplicates("without")
        )

    def to_dict(self) -> dict:
        def runs_to_dict(runs):
            return {
                str(seed): {
                    "ate": m.ate,
                    "n_planes": m.n_planes,
                    "n_duplicates": m.n_duplicates,
                    "n_rooms": m.n_rooms,
                    "n_corridors": m.n_corridors,
                    "final_cost": m.final_cost,
                }
                for seed, m in runs.items()
            }

        return {
            "seeds": self.seeds,
            "stream_digests": {str(k): v for k, v in self.digests.items()},
            "full": runs_to_dict(self.full),
            "without_topology": runs_to_dict(self.without_topology),
            "mean_ate_full": self.mean_ate("full"),
            "mean_ate_without_topology": self.mean_ate("without"),
            "mean_duplicates_full": self.mean_duplicates("full"),
            "mean_duplicates_without_topology": self.mean_duplicates("without"),
            "improvement_confirmed": self.improvement_confirmed,
        }


def evaluate_run(result: SlamResult, steps: list[SimStep], world: WorldModel) -> RunMetrics:
    reference = [(s.timestamp, s.gt_pose) for s in steps]
    pair = TrajectoryPair(estimated=result.trajectory, reference=reference)
    return RunMetrics(
        ate=ate(pair),
        n_planes=len(result.graph.planes),
        n_duplicates=duplicate_plane_count(result, world),
        n_rooms=len(result.graph.rooms),
        n_corridors=len(result.graph.corridors),
        final_cost=result.reports[-1].final_cost if result.reports else float("nan"),
    )


def run_ablation(
    layout: LayoutSpec,
    traj: TrajectorySpec,
    noise: NoiseSpec,
    seeds: list[int],
    cfg: SlamConfig = SlamConfig(),
    pattern: ScanPattern = ScanPattern(),
) -> AblationReport:
    """Run the full and topology-disabled pipelines on identical streams
    for every seed."""
    world = generate_world(layout)
    report = AblationReport(seeds=list(seeds), digests={}, full={}, without_topology={})
    for seed in seeds:
        steps = simulate_run(world, traj, replace(noise, seed=seed), pattern)
        report.digests[seed] = stream_digest(steps)
        full_cfg = replace(cfg, enable_topology=True)
        off_cfg = replace(cfg, enable_topology=False)
        res_full = run_slam(steps, full_cfg)
        res_off = run_slam(steps, off_cfg)
        report.full[seed] = evaluate_run(res_full, steps, world)
        report.without_topology[seed] = evaluate_run(res_off, steps, world)
    return report
