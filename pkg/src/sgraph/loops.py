"""Hard loop closure: translational candidate gating and point-to-point
scan registration producing relative-pose constraints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .factors import Factor, FactorKind
from .geometry import Pose3, inverse_compose
from .graph import SGraph
from .planes import PointCloud


class NoConvergence(RuntimeError):
    """Registration did not reach an acceptable alignment."""


@dataclass(frozen=True)
class LoopConfig:
    gate: float = 3.0  # meters between keyframe estimates
    min_keyframe_gap: int = 10
    max_icp_iters: int = 60
    icp_tol: float = 1e-8  # relative fitness change
    max_corr_dist: float = 1.0
    # coarse-to-fine: the correspondence radius starts wide enough to cover
    # the drift of the initial guess and shrinks geometrically to
    # max_corr_dist, widening the convergence basin
    coarse_corr_dist: float = 3.0
    corr_decay: float = 0.7
    accept_threshold: float = 0.05  # mean squared correspondence distance, m^2
    min_points: int = 50
    info_scale_cap: float = 1e4


@dataclass(frozen=True)
class LoopCandidate:
    query_id: int
    match_id: int
    prior_relative: Pose3  # relative pose of the match frame seen from query
    distance: float


@dataclass(frozen=True)
class LoopConstraint:
    query_id: int
    match_id: int
    relative: Pose3
    fitness: float  # mean squared correspondence distance
    information: np.ndarray


def find_candidates(graph: SGraph, query_id: int, cfg: LoopConfig) -> list[LoopCandidate]:
    """All keyframes far enough in time and close enough in space, nearest
    first."""
    query = graph.keyframes[query_id]
    out: list[LoopCandidate] = []
    for kf_id, kf in graph.keyframes.items():
        if abs(query_id - kf_id) < cfg.min_keyframe_gap:
            continue
        dist = float(np.linalg.norm(query.pose.translation - kf.pose.translation))
        if dist < cfg.gate:
            out.append(
                LoopCandidate(
                    query_id=query_id,
                    match_id=kf_id,
                    prior_relative=inverse_compose(query.pose, kf.pose),
                    distance=dist,
                )
            )
    out.sort(key=lambda c: (c.distance, c.match_id))
    return out


def _best_fit_transform(src: np.ndarray, dst: np.ndarray) -> Pose3:
    """Closed-form rigid transform aligning src onto dst (Kabsch)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    H = (src - mu_s).T @ (dst - mu_d)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    t = mu_d - R @ mu_s
    return Pose3(R, t)


def register_scans(
    query: PointCloud, match: PointCloud, initial_guess: Pose3, cfg: LoopConfig
) -> LoopConstraint:
    """Iterative point-to-point registration of the match scan onto the
    query scan.

    The returned relative pose maps match-frame points into the query
    frame. Raises NoConvergence when the final fitness exceeds the
    acceptance threshold.
    """
    if len(query) < cfg.min_points or len(match) < cfg.min_points:
        raise NoConvergence("too few points for registration")
    target = query.points
    tree = cKDTree(target)
    pose = initial_guess
    prev_fitness = np.inf
    fitness = np.inf
    corr_dist = max(cfg.coarse_corr_dist, cfg.max_corr_dist)
    for _ in range(cfg.max_icp_iters):
        moved = match.points @ pose.rotation.T + pose.translation
        dists, idx = tree.query(moved, k=1)
        mask = dists <= corr_dist
        if int(mask.sum()) < cfg.min_points:
            raise NoConvergence("correspondence set collapsed")
        fitness = float(np.mean(dists[mask] ** 2))
        step = _best_fit_transform(moved[mask], target[idx[mask]])
        pose = step.compose(pose)
        at_final_radius = corr_dist <= cfg.max_corr_dist
        if at_final_radius and abs(prev_fitness - fitness) <= cfg.icp_tol * max(
            prev_fitness, 1e-12
        ):
            break
        prev_fitness = fitness
        corr_dist = max(cfg.max_corr_dist, corr_dist * cfg.corr_decay)
    if fitness > cfg.accept_threshold:
        raise NoConvergence(f"fitness {fitness:.4f} > {cfg.accept_threshold}")
    scale = min(1.0 / max(fitness, 1e-6), cfg.info_scale_cap)
    information = np.eye(6) * scale
    return LoopConstraint(
        query_id=-1, match_id=-1, relative=pose, fitness=fitness, information=information
    )


def add_loop_factor(graph: SGraph, constraint: LoopConstraint) -> None:
    """Append a loop-closure factor; rejects duplicate ordered pairs."""
    key = (("kf", constraint.query_id), ("kf", constraint.match_id))
    for f in graph.factors:
        if f.kind is FactorKind.LOOP_CLOSURE and f.variables == key:
            return
    graph.factors.append(
        Factor(
            kind=FactorKind.LOOP_CLOSURE,
            variables=key,
            measurement=constraint.relative,
            information=constraint.information,
            robust=True,
        )
    )


def close_loops(graph: SGraph, query_id: int, cfg: LoopConfig) -> int:
    """Find, register and insert loop constraints for one keyframe.

    Returns the number of accepted constraints. Candidates whose
    registration does not converge are silently dropped.
    """
    query = graph.keyframes[query_id]
    if query.scan is None:
        return 0
    accepted = 0
    for cand in find_candidates(graph, query_id, cfg):
        match = graph.keyframes[cand.match_id]
        if match.scan is None:
            continue
        try:
            constraint = register_scans(query.scan, match.scan, cand.prior_relative, cfg)
        except NoConvergence:
            continue
        constraint = LoopConstraint(
            query_id=query_id,
            match_id=cand.match_id,
            relative=constraint.relative,
            fitness=constraint.fitness,
            information=constraint.information,
        )
        add_loop_factor(graph, constraint)
        accepted += 1
    return accepted
