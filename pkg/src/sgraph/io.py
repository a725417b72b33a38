"""File formats: TUM trajectories, ASCII PLY clouds, world descriptions and
versioned graph snapshots."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .factors import Factor, FactorKind
from .geometry import PlaneClass, PlaneMinimal, Pose3
from .graph import CorridorNode, Keyframe, PlaneLandmark, RoomNode, SGraph
from .planes import PointCloud
from .simulator import (
    CorridorAnnotation,
    RoomAnnotation,
    SimStep,
    WallRect,
    WorldModel,
)

SNAPSHOT_VERSION = 1


# -- poses ------------------------------------------------------------------


def pose_to_list(pose: Pose3) -> list[float]:
    q = Rotation.from_matrix(pose.rotation).as_quat()  # (x, y, z, w)
    t = pose.translation
    return [t[0], t[1], t[2], q[0], q[1], q[2], q[3]]


def pose_from_list(vals) -> Pose3:
    t = np.array(vals[0:3], dtype=float)
    R = Rotation.from_quat(vals[3:7]).as_matrix()
    return Pose3(R, t)


# -- TUM trajectories -------------------------------------------------------


def write_tum(path, stamped_poses: list[tuple[float, Pose3]]) -> None:
    lines = []
    for t, pose in stamped_poses:
        vals = pose_to_list(pose)
        lines.append(" ".join([repr(float(t))] + [repr(float(v)) for v in vals]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_tum(path) -> list[tuple[float, Pose3]]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = [float(x) for x in line.split()]
        if len(vals) != 8:
            raise ValueError(f"bad TUM line: {line!r}")
        out.append((vals[0], pose_from_list(vals[1:8])))
    return out


# -- PLY point clouds -------------------------------------------------------


def write_ply(path, cloud: PointCloud) -> None:
    pts = cloud.points
    header = [
        "ply",
        "format ascii 1.0",
        f"comment timestamp {cloud.timestamp!r}",
        f"element vertex {pts.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    body = [" ".join(repr(float(c)) for c in p) for p in pts]
    Path(path).write_text("\n".join(header + body) + "\n")


def read_ply(path) -> PointCloud:
    lines = Path(path).read_text().splitlines()
    n = 0
    timestamp = 0.0
    i = 0
    for i, line in enumerate(lines):
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        elif line.startswith("comment timestamp"):
            timestamp = float(line.split()[-1])
        elif line.strip() == "end_header":
            break
    pts = np.array(
        [[float(v) for v in line.split()[:3]] for line in lines[i + 1 : i + 1 + n]]
    ).reshape(-1, 3)
    return PointCloud(pts, timestamp)


# -- world model ------------------------------------------------------------


def world_to_dict(world: WorldModel) -> dict:
    return {
        "wall_height": world.wall_height,
        "walls": [
            {
                "axis": w.axis,
                "offset": w.offset,
                "u_min": w.u_min,
                "u_max": w.u_max,
                "v_min": w.v_min,
                "v_max": w.v_max,
            }
            for w in world.walls
        ],
        "rooms": [
            {"center": list(r.center), "widths": list(r.widths)} for r in world.rooms
        ],
        "corridors": [
            {"axis": c.axis.value, "center": list(c.center), "width": c.width}
            for c in world.corridors
        ],
    }


def world_from_dict(d: dict) -> WorldModel:
    return WorldModel(
        walls=tuple(WallRect(**w) for w in d["walls"]),
        rooms=tuple(
            RoomAnnotation(np.array(r["center"]), np.array(r["widths"]))
            for r in d["rooms"]
        ),
        corridors=tuple(
            CorridorAnnotation(PlaneClass(c["axis"]), np.array(c["center"]), c["width"])
            for c in d["corridors"]
        ),
        wall_height=d["wall_height"],
    )


def save_world(path, world: WorldModel) -> None:
    Path(path).write_text(json.dumps(world_to_dict(world), indent=1))


def load_world(path) -> WorldModel:
    return world_from_dict(json.loads(Path(path).read_text()))


# -- dataset directories ----------------------------------------------------


def export_dataset(out_dir, world: WorldModel, steps: list[SimStep]) -> None:
    out = Path(out_dir)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    save_world(out / "world.json", world)
    write_tum(out / "ground_truth.tum", [(s.timestamp, s.gt_pose) for s in steps])
    write_tum(out / "odometry.tum", [(s.timestamp, s.odom_pose) for s in steps])
    for i, s in enumerate(steps):
        write_ply(out / "scans" / f"{i:06d}.ply", s.scan)


def load_dataset(data_dir) -> tuple[WorldModel, list[SimStep]]:
    data = Path(data_dir)
    world = load_world(data / "world.json")
    gt = read_tum(data / "ground_truth.tum")
    odom = read_tum(data / "odometry.tum")
    scans = sorted((data / "scans").glob("*.ply"))
    steps = []
    for (t, gt_pose), (_, odom_pose), scan_path in zip(gt, odom, scans):
        steps.append(
            SimStep(
                timestamp=t,
                gt_pose=gt_pose,
                odom_pose=odom_pose,
                scan=read_ply(scan_path),
            )
        )
    return world, steps


# -- graph snapshots --------------------------------------------------------


def _measurement_to_json(factor: Factor):
    if factor.kind in (FactorKind.ODOMETRY, FactorKind.LOOP_CLOSURE):
        return pose_to_list(factor.measurement)
    if factor.kind is FactorKind.POSE_PLANE:
        m = factor.measurement
        return [m.azimuth, m.elevation, m.distance]
    return int(factor.measurement)


def _measurement_from_json(kind: FactorKind, m):
    if kind in (FactorKind.ODOMETRY, FactorKind.LOOP_CLOSURE):
        return pose_from_list(m)
    if kind is FactorKind.POSE_PLANE:
        return PlaneMinimal(m[0], m[1], m[2])
    return int(m)


def graph_to_dict(graph: SGraph) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "map_to_odom": pose_to_list(graph.map_to_odom),
        "keyframes": [
            {
                "id": kf.id,
                "t": kf.timestamp,
                "pose": pose_to_list(kf.pose),
                "odom_pose": pose_to_list(kf.odom_pose),
                "odom_cov": kf.odom_cov.tolist(),
            }
            for kf in (graph.keyframes[k] for k in sorted(graph.keyframes))
        ],
        "planes": [
            {
                "id": p.id,
                "class": p.plane_class.value,
                "phi": p.params.azimuth,
                "theta": p.params.elevation,
                "d": p.params.distance,
                "extent": p.extent.tolist(),
                "centroid": p.centroid.tolist(),
                "observations": p.observation_count,
                "side": p.side,
            }
            for p in (graph.planes[k] for k in sorted(graph.planes))
        ],
        "rooms": [
            {
                "id": r.id,
                "center": r.center.tolist(),
                "widths": r.widths.tolist(),
                "planes": list(r.plane_links),
            }
            for r in (graph.rooms[k] for k in sorted(graph.rooms))
        ],
        "corridors": [
            {
                "id": c.id,
                "axis": c.axis.value,
                "center": c.center.tolist(),
                "width": c.width,
                "planes": list(c.plane_links),
            }
            for c in (graph.corridors[k] for k in sorted(graph.corridors))
        ],
        "factors": [
            {
                "kind": f.kind.value,
                "variables": [[k, v] for k, v in f.variables],
                "measurement": _measurement_to_json(f),
                "information": np.atleast_2d(f.information).tolist(),
                "robust": f.robust,
            }
            for f in graph.factors
        ],
    }


def graph_from_dict(d: dict) -> SGraph:
    if d.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {d.get('version')}")
    graph = SGraph()
    graph.map_to_odom = pose_from_list(d["map_to_odom"])
    for kf in d["keyframes"]:
        graph.keyframes[kf["id"]] = Keyframe(
            id=kf["id"],
            timestamp=kf["t"],
            pose=pose_from_list(kf["pose"]),
            odom_pose=pose_from_list(kf["odom_pose"]),
            odom_cov=np.array(kf["odom_cov"]),
        )
    for p in d["planes"]:
        graph.planes[p["id"]] = PlaneLandmark(
            id=p["id"],
            params=PlaneMinimal(p["phi"], p["theta"], p["d"]),
            plane_class=PlaneClass(p["class"]),
            extent=np.array(p["extent"]),
            centroid=np.array(p["centroid"]),
            observation_count=p["observations"],
            side=p.get("side", 1.0),
        )
    for r in d["rooms"]:
        graph.rooms[r["id"]] = RoomNode(
            id=r["id"],
            center=np.array(r["center"]),
            widths=np.array(r["widths"]),
            plane_links=tuple(r["planes"]),
        )
    for c in d["corridors"]:
        graph.corridors[c["id"]] = CorridorNode(
            id=c["id"],
            axis=PlaneClass(c["axis"]),
            center=np.array(c["center"]),
            width=c["width"],
            plane_links=tuple(c["planes"]),
        )
    for f in d["factors"]:
        kind = FactorKind(f["kind"])
        graph.factors.append(
            Factor(
                kind=kind,
                variables=tuple((k, v) for k, v in f["variables"]),
                measurement=_measurement_from_json(kind, f["measurement"]),
                information=np.array(f["information"]),
                robust=f["robust"],
            )
        )
    graph._next_plane_id = max(graph.planes, default=-1) + 1
    graph._next_room_id = max(graph.rooms, default=-1) + 1
    graph._next_corridor_id = max(graph.corridors, default=-1) + 1
    return graph


def save_graph(path, graph: SGraph) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph)))


def load_graph(path) -> SGraph:
    return graph_from_dict(json.loads(Path(path).read_text()))
