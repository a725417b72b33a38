"""Damped Gauss-Newton (Levenberg-Marquardt) solver over the full graph.

The first keyframe is hard-fixed to pin the 6-DoF gauge freedom; all other
variables are updated in their local coordinates.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .factors import LOCAL_DIM, VariableKey, huber_cost_and_weight
from .graph import SGraph


class SingularSystem(RuntimeError):
    def __init__(self, nullity: int):
        super().__init__(f"normal equations rank-deficient, null-space dim {nullity}")
        self.nullity = nullity


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 50
    rel_tol: float = 1e-12
    grad_tol: float = 1e-12
    init_lambda: float = 1e-6
    huber_delta: float = 1.0
    check_rank: bool = True


@dataclass
class SolverReport:
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool


def _variable_order(graph: SGraph) -> tuple[list[VariableKey], dict[VariableKey, int], int]:
    """Deterministic variable ordering; keyframe 0 is excluded (gauge)."""
    keys: list[VariableKey] = []
    for kf_id in sorted(graph.keyframes):
        if kf_id != min(graph.keyframes):
            keys.append(("kf", kf_id))
    for pid in sorted(graph.planes):
        keys.append(("plane", pid))
    for rid in sorted(graph.rooms):
        keys.append(("room", rid))
    for cid in sorted(graph.corridors):
        keys.append(("corridor", cid))
    offsets: dict[VariableKey, int] = {}
    dim = 0
    for k in keys:
        offsets[k] = dim
        dim += LOCAL_DIM[k[0]]
    return keys, offsets, dim


def layer_costs(graph: SGraph, huber_delta: float = 1.0) -> dict[str, float]:
    """Per-layer cost decomposition (odometry+loop, plane, room, corridor)."""
    from .factors import FactorKind

    costs = {"tracking": 0.0, "plane": 0.0, "room": 0.0, "corridor": 0.0}
    layer = {
        FactorKind.ODOMETRY: "tracking",
        FactorKind.LOOP_CLOSURE: "tracking",
        FactorKind.POSE_PLANE: "plane",
        FactorKind.ROOM_PLANE: "room",
        FactorKind.CORRIDOR_PLANE: "corridor",
    }
    for f in graph.factors:
        r, _ = graph.evaluate_factor(f)
        w = f.sqrt_information() @ r
        s = float(w @ w)
        if f.robust:
            s, _ = huber_cost_and_weight(s, huber_delta)
        costs[layer[f.kind]] += s
    return costs


def total_cost(graph: SGraph, huber_delta: float = 1.0) -> float:
    return sum(layer_costs(graph, huber_delta).values())


def _build_normal_equations(
    graph: SGraph,
    offsets: dict[VariableKey, int],
    dim: int,
    huber_delta: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Assemble H = J^T J and g = J^T r over whitened, robust-weighted
    residuals. Returns (H, g, cost)."""
    H = np.zeros((dim, dim))
    g = np.zeros(dim)
    cost = 0.0
    for f in graph.factors:
        r, jacs = graph.evaluate_factor(f)
        L = f.sqrt_information()
        wr = L @ r
        s = float(wr @ wr)
        if f.robust:
            rho, weight = huber_cost_and_weight(s, huber_delta)
            cost += rho
            scale = np.sqrt(weight)
        else:
            cost += s
            scale = 1.0
        wr = wr * scale
        blocks = []
        for key, J in jacs.items():
            if key not in offsets:
                continue  # gauge-fixed variable
            blocks.append((offsets[key], LOCAL_DIM[key[0]], scale * (L @ J)))
        for off_i, dim_i, Ji in blocks:
            g[off_i : off_i + dim_i] += Ji.T @ wr
            for off_j, dim_j, Jj in blocks:
                H[off_i : off_i + dim_i, off_j : off_j + dim_j] += Ji.T @ Jj
    return H, g, cost


def optimize(graph: SGraph, cfg: SolverConfig = SolverConfig()) -> SolverReport:
    """Levenberg-Marquardt over all variables; mutates the graph in place.

    Accepted steps never increase the cost; termination on relative cost
    change, gradient norm, or the iteration cap. After convergence the
    map-to-odometry offset is re-derived from the newest keyframe.
    """
    if not graph.keyframes:
        raise ValueError("graph has no keyframes")
    keys, offsets, dim = _variable_order(graph)
    if dim == 0:
        c = total_cost(graph, cfg.huber_delta)
        return SolverReport(c, c, 0, True)

    H, g, cost = _build_normal_equations(graph, offsets, dim, cfg.huber_delta)
    if cfg.check_rank:
        eigs = np.linalg.eigvalsh(H)
        scale = max(float(eigs[-1]), 1.0)
        nullity = int(np.sum(eigs < 1e-12 * scale))
        if nullity > 0:
            raise SingularSystem(nullity)

    initial_cost = cost
    lam = cfg.init_lambda
    iters = 0
    converged = False
    for _ in range(cfg.max_iters):
        iters += 1
        if float(np.max(np.abs(g))) < cfg.grad_tol:
            converged = True
            break
        accepted = False
        for _try in range(20):
            A = H + lam * np.diag(np.maximum(np.diag(H), 1e-12))
            try:
                delta = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            backup = _snapshot(graph, keys)
            for k in keys:
                off = offsets[k]
                graph.apply_update(k, delta[off : off + LOCAL_DIM[k[0]]])
            H_new, g_new, cost_new = _build_normal_equations(
                graph, offsets, dim, cfg.huber_delta
            )
            if cost_new <= cost:
                accepted = True
                lam = max(lam / 10.0, 1e-12)
                rel_change = (cost - cost_new) / max(cost, 1e-300)
                H, g, cost = H_new, g_new, cost_new
                if rel_change < cfg.rel_tol:
                    converged = True
                break
            _restore(graph, keys, backup)
            lam *= 10.0
        if not accepted:
            converged = cost <= initial_cost  # stalled at a (local) minimum
            break
        if converged:
            break
    graph.update_map_to_odom()
    return SolverReport(initial_cost, cost, iters, converged)


def _snapshot(graph: SGraph, keys: list[VariableKey]):
    state = {}
    for kind, vid in keys:
        if kind == "kf":
            state[(kind, vid)] = graph.keyframes[vid].pose
        elif kind == "plane":
            state[(kind, vid)] = graph.planes[vid].params
        elif kind == "room":
            room = graph.rooms[vid]
            state[(kind, vid)] = (room.center.copy(), room.widths.copy())
        elif kind == "corridor":
            corr = graph.corridors[vid]
            state[(kind, vid)] = (corr.center.copy(), corr.width)
    return state


def _restore(graph: SGraph, keys: list[VariableKey], state) -> None:
    for key in keys:
        kind, vid = key
        if kind == "kf":
            graph.keyframes[vid].pose = state[key]
        elif kind == "plane":
            graph.planes[vid].params = state[key]
        elif kind == "room":
            graph.rooms[vid].center, graph.rooms[vid].widths = state[key]
        elif kind == "corridor":
            graph.corridors[vid].center, graph.corridors[vid].width = state[key]
