"""End-to-end mapping pipeline: odometry keyframing, plane extraction and
association, topology updates, optional hard loop closure, batch
re-optimization after every new keyframe."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose3
from .graph import KeyframePolicy, SGraph
from .loops import LoopConfig, close_loops
from .planes import EmptyCloud, FilterConfig, RansacConfig, TooFewPoints, extract_planes, preprocess
from .simulator import SimStep
from .solver import SolverConfig, SolverReport, optimize
from .topology import RoomCriterionConfig, update_topology


@dataclass(frozen=True)
class SlamConfig:
    keyframe: KeyframePolicy = KeyframePolicy(min_translation=1.0, min_rotation=0.5)
    filter: FilterConfig = FilterConfig(voxel_size=0.1, k_sigma=2.0)
    ransac: RansacConfig = RansacConfig(threshold=0.03, min_inliers=100, max_iters=300)
    room: RoomCriterionConfig = RoomCriterionConfig()
    loop: LoopConfig = LoopConfig()
    solver: SolverConfig = SolverConfig(max_iters=25, check_rank=False)
    odom_sigma_t: float = 0.01  # m, per keyframe step
    odom_sigma_r: float = 0.01  # rad, per keyframe step
    plane_sigma_angle: float = 0.02  # rad
    plane_sigma_d: float = 0.02  # m
    topology_sigma: float = 0.1  # m
    association_gate: float = 3.0
    min_plane_inlier_count: int = 100
    enable_topology: bool = True
    enable_loop_closure: bool = False
    optimize_every_keyframe: bool = True

    def odom_information(self) -> np.ndarray:
        return np.diag(
            [1.0 / self.odom_sigma_t**2] * 3 + [1.0 / self.odom_sigma_r**2] * 3
        )

    def plane_information(self) -> np.ndarray:
        return np.diag(
            [
                1.0 / self.plane_sigma_angle**2,
                1.0 / self.plane_sigma_angle**2,
                1.0 / self.plane_sigma_d**2,
            ]
        )

    def topology_information(self) -> float:
        return 1.0 / self.topology_sigma**2


@dataclass
class SlamResult:
    graph: SGraph
    trajectory: list[tuple[float, Pose3]] = field(default_factory=list)
    reports: list[SolverReport] = field(default_factory=list)
    keyframe_steps: list[int] = field(default_factory=list)  # step index per keyframe
    loop_constraints: int = 0


def process_step(
    graph: SGraph, step: SimStep, step_index: int, cfg: SlamConfig, result: SlamResult
) -> int | None:
    """Feed one sensor step into the graph; returns the new keyframe id."""
    kf_id = graph.maybe_add_keyframe(
        step.odom_pose,
        cfg.keyframe,
        timestamp=step.timestamp,
        scan=None,
        odom_information=cfg.odom_information(),
    )
    if kf_id is None:
        return None
    result.keyframe_steps.append(step_index)
    try:
        cloud = preprocess(step.scan, cfg.filter)
    except EmptyCloud:
        cloud = None
    if cloud is not None:
        graph.keyframes[kf_id].scan = cloud  # downsampled copy for loop closure
        try:
            detections = extract_planes(cloud, cfg.ransac)
        except TooFewPoints:
            detections = []
        seen_ids = []
        for det in detections:
            if det.inlier_count < cfg.min_plane_inlier_count:
                continue
            lm_id = graph.add_plane_observation(
                det,
                kf_id,
                cfg.plane_information(),
                gate=cfg.association_gate,
            )
            seen_ids.append(lm_id)
        if cfg.enable_topology and seen_ids:
            update_topology(graph, seen_ids, cfg.room, cfg.topology_information())
    if cfg.enable_loop_closure and kf_id > 0:
        result.loop_constraints += close_loops(graph, kf_id, cfg.loop)
    if cfg.optimize_every_keyframe:
        result.reports.append(optimize(graph, cfg.solver))
    return kf_id


def run_slam(steps: list[SimStep], cfg: SlamConfig = SlamConfig()) -> SlamResult:
    """Run the full pipeline over a sensor stream."""
    graph = SGraph()
    result = SlamResult(graph=graph)
    for i, step in enumerate(steps):
        process_step(graph, step, i, cfg, result)
    if not cfg.optimize_every_keyframe and graph.keyframes:
        result.reports.append(optimize(graph, cfg.solver))
    result.trajectory = [
        (graph.keyframes[k].timestamp, graph.keyframes[k].pose)
        for k in sorted(graph.keyframes)
    ]
    return result


def aggregate_map_points(result: SlamResult, steps: list[SimStep]) -> np.ndarray:
    """All stored keyframe scan points transformed by the optimized poses."""
    chunks = []
    for kf_id in sorted(result.graph.keyframes):
        kf = result.graph.keyframes[kf_id]
        if kf.scan is None or len(kf.scan) == 0:
            continue
        chunks.append(kf.scan.points @ kf.pose.rotation.T + kf.pose.translation)
    if not chunks:
        return np.empty((0, 3))
    return np.vstack(chunks)
