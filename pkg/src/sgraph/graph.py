"""The three-layer situational graph: variables, factor bookkeeping and
plane data association."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .factors import (
    Factor,
    FactorKind,
    VariableKey,
    corridor_plane_residual,
    plane_axis_sign,
    pose_between_residual,
    pose_plane_residual,
    room_plane_residual,
)
from .geometry import (
    Pose3,
    PlaneClass,
    PlaneMinimal,
    from_minimal,
    inverse_compose,
    to_minimal,
    transform_plane,
    wrap_angle,
)
from .planes import PlaneDetection


@dataclass(frozen=True)
class KeyframePolicy:
    min_translation: float = 1.0
    min_rotation: float = 0.5


@dataclass
class Keyframe:
    id: int
    timestamp: float
    pose: Pose3  # map frame, optimized
    odom_pose: Pose3  # odometry frame, as reported
    odom_cov: np.ndarray  # 6x6 covariance of the incoming odometry increment
    scan: object = None  # optional PointCloud kept for hard loop closure


@dataclass
class PlaneLandmark:
    id: int
    params: PlaneMinimal  # map frame
    plane_class: PlaneClass
    extent: np.ndarray
    centroid: np.ndarray  # map frame
    observation_count: int = 1
    # which side of the stored plane the observer was on (+1/-1): the d >= 0
    # convention erases the facing direction, but room/corridor detection
    # needs to tell inward-facing wall pairs apart
    side: float = 1.0


@dataclass
class RoomNode:
    id: int
    center: np.ndarray  # (cx, cy) meters
    widths: np.ndarray  # (wx, wy) meters
    plane_links: tuple[int, int, int, int]  # low-x, high-x, low-y, high-y


@dataclass
class CorridorNode:
    id: int
    axis: PlaneClass  # X_VERTICAL or Y_VERTICAL
    center: np.ndarray  # (kx, ky); the cross-axis component is not optimized
    width: float
    plane_links: tuple[int, int]  # low, high along the axis


NEW_LANDMARK = -1


@dataclass
class SGraph:
    keyframes: dict[int, Keyframe] = field(default_factory=dict)
    planes: dict[int, PlaneLandmark] = field(default_factory=dict)
    rooms: dict[int, RoomNode] = field(default_factory=dict)
    corridors: dict[int, CorridorNode] = field(default_factory=dict)
    factors: list[Factor] = field(default_factory=list)
    map_to_odom: Pose3 = field(default_factory=Pose3.identity)
    _next_plane_id: int = 0
    _next_room_id: int = 0
    _next_corridor_id: int = 0

    # -- variable access ---------------------------------------------------

    def last_keyframe(self) -> Keyframe | None:
        if not self.keyframes:
            return None
        return self.keyframes[max(self.keyframes)]

    def linked_plane_ids(self) -> set[int]:
        """Plane ids already claimed by a room or corridor."""
        out: set[int] = set()
        for room in self.rooms.values():
            out.update(room.plane_links)
        for corr in self.corridors.values():
            out.update(corr.plane_links)
        return out

    # -- keyframe creation -------------------------------------------------

    def maybe_add_keyframe(
        self,
        odom_pose: Pose3,
        policy: KeyframePolicy,
        timestamp: float = 0.0,
        scan=None,
        odom_information: np.ndarray | None = None,
    ) -> int | None:
        """Add a keyframe when motion since the last one exceeds the policy.

        The very first call anchors the map frame at the first odometry pose
        (keyframe 0 sits at the map origin). Consecutive keyframes are tied
        by an odometry factor carrying the relative odometry measurement.
        """
        if odom_information is None:
            odom_information = np.eye(6) * 1e4
        last = self.last_keyframe()
        if last is None:
            self.map_to_odom = odom_pose.inverse()
            kf = Keyframe(
                id=0,
                timestamp=timestamp,
                pose=Pose3.identity(),
                odom_pose=odom_pose,
                odom_cov=np.zeros((6, 6)),
                scan=scan,
            )
            self.keyframes[0] = kf
            return 0
        rel = inverse_compose(last.odom_pose, odom_pose)
        trans = float(np.linalg.norm(rel.translation))
        rot = float(np.linalg.norm(rel.log()[3:6]))
        if trans < policy.min_translation and rot < policy.min_rotation:
            return None
        kf_id = last.id + 1
        info = np.asarray(odom_information, dtype=float)
        kf = Keyframe(
            id=kf_id,
            timestamp=timestamp,
            pose=last.pose.compose(rel),
            odom_pose=odom_pose,
            odom_cov=np.linalg.inv(info),
            scan=scan,
        )
        self.keyframes[kf_id] = kf
        self.factors.append(
            Factor(
                kind=FactorKind.ODOMETRY,
                variables=(("kf", last.id), ("kf", kf_id)),
                measurement=rel,
                information=info,
            )
        )
        return kf_id

    # -- plane landmarks ---------------------------------------------------

    def associate_plane(
        self,
        det: PlaneDetection,
        kf_id: int,
        gate: float,
        plane_information: np.ndarray,
    ) -> int:
        """Mahalanobis association of a detection against mapped planes.

        Returns the id of the nearest same-class landmark inside the gate,
        or NEW_LANDMARK. Each mapped plane is predicted into the current
        sensor frame and compared there against the detection, so the
        distance coordinate is not inflated by the robot's position in the
        map. The covariance is the measurement covariance plus the latest
        odometry-increment uncertainty pushed through the prediction.
        """
        kf = self.keyframes[kf_id]
        map_plane = transform_plane(kf.pose, det.plane, to_sensor=False)
        cls = classify_map_plane(map_plane)
        meas = to_minimal(det.plane)
        meas_cov = np.linalg.inv(np.asarray(plane_information, dtype=float))

        best_id = NEW_LANDMARK
        best_dist = gate
        for lm in self.planes.values():
            if lm.plane_class is not cls:
                continue
            diff, Jpose, _ = pose_plane_residual(kf.pose, lm.params, meas)
            cov = meas_cov + Jpose @ kf.odom_cov @ Jpose.T
            dist = math.sqrt(float(diff @ np.linalg.solve(cov, diff)))
            if dist < best_dist:
                best_dist = dist
                best_id = lm.id
        return best_id

    def add_plane_observation(
        self,
        det: PlaneDetection,
        kf_id: int,
        plane_information: np.ndarray,
        gate: float = 3.0,
        robust: bool = True,
    ) -> int:
        """Associate a detection, creating a landmark when needed, and add
        the pose-plane factor. Returns the landmark id."""
        kf = self.keyframes[kf_id]
        lm_id = self.associate_plane(det, kf_id, gate, plane_information)
        meas_minimal = to_minimal(det.plane)
        if lm_id == NEW_LANDMARK:
            map_plane = transform_plane(kf.pose, det.plane, to_sensor=False)
            lm_id = self._next_plane_id
            self._next_plane_id += 1
            gap = float(map_plane.normal @ kf.pose.translation) - map_plane.distance
            self.planes[lm_id] = PlaneLandmark(
                id=lm_id,
                params=to_minimal(map_plane),
                plane_class=classify_map_plane(map_plane),
                extent=np.asarray(det.extent, dtype=float).copy(),
                centroid=kf.pose.transform_point(det.centroid),
                side=1.0 if gap >= 0.0 else -1.0,
            )
        else:
            lm = self.planes[lm_id]
            lm.observation_count += 1
            lm.extent = np.maximum(lm.extent, det.extent)
            new_c = kf.pose.transform_point(det.centroid)
            lm.centroid = lm.centroid + (new_c - lm.centroid) / lm.observation_count
        self.factors.append(
            Factor(
                kind=FactorKind.POSE_PLANE,
                variables=(("kf", kf_id), ("plane", lm_id)),
                measurement=meas_minimal,
                information=np.asarray(plane_information, dtype=float),
                robust=robust,
            )
        )
        return lm_id

    def merge_planes(self, keep_id: int, drop_id: int) -> None:
        """Re-point every factor from drop_id to keep_id and delete it."""
        if keep_id == drop_id or drop_id not in self.planes:
            return
        for f in self.factors:
            f.variables = tuple(
                ("plane", keep_id) if v == ("plane", drop_id) else v for v in f.variables
            )
        keep = self.planes[keep_id]
        drop = self.planes[drop_id]
        keep.extent = np.maximum(keep.extent, drop.extent)
        keep.observation_count += drop.observation_count
        del self.planes[drop_id]
        for room in self.rooms.values():
            room.plane_links = tuple(
                keep_id if p == drop_id else p for p in room.plane_links
            )
        for corr in self.corridors.values():
            corr.plane_links = tuple(
                keep_id if p == drop_id else p for p in corr.plane_links
            )

    # -- topology nodes ----------------------------------------------------

    def add_room(self, node: RoomNode, information: float) -> int:
        node.id = self._next_room_id
        self._next_room_id += 1
        self.rooms[node.id] = node
        for slot, plane_id in enumerate(node.plane_links):
            self.factors.append(
                Factor(
                    kind=FactorKind.ROOM_PLANE,
                    variables=(("room", node.id), ("plane", plane_id)),
                    measurement=slot,
                    information=np.array([[information]]),
                )
            )
        return node.id

    def add_corridor(self, node: CorridorNode, information: float) -> int:
        node.id = self._next_corridor_id
        self._next_corridor_id += 1
        self.corridors[node.id] = node
        for slot, plane_id in enumerate(node.plane_links):
            self.factors.append(
                Factor(
                    kind=FactorKind.CORRIDOR_PLANE,
                    variables=(("corridor", node.id), ("plane", plane_id)),
                    measurement=slot,
                    information=np.array([[information]]),
                )
            )
        return node.id

    def remove_corridor(self, corridor_id: int) -> None:
        self.factors = [
            f
            for f in self.factors
            if not (
                f.kind is FactorKind.CORRIDOR_PLANE
                and f.variables[0] == ("corridor", corridor_id)
            )
        ]
        self.corridors.pop(corridor_id, None)

    # -- factor evaluation -------------------------------------------------

    def evaluate_factor(
        self, factor: Factor
    ) -> tuple[np.ndarray, dict[VariableKey, np.ndarray]]:
        """Raw residual and per-variable Jacobian blocks at the current
        estimates (no whitening, no robust weighting)."""
        kind = factor.kind
        if kind in (FactorKind.ODOMETRY, FactorKind.LOOP_CLOSURE):
            ka, kb = factor.variables
            r, Ja, Jb = pose_between_residual(
                self.keyframes[ka[1]].pose,
                self.keyframes[kb[1]].pose,
                factor.measurement,
            )
            return r, {ka: Ja, kb: Jb}
        if kind is FactorKind.POSE_PLANE:
            kk, kp = factor.variables
            r, Jpose, Jplane = pose_plane_residual(
                self.keyframes[kk[1]].pose,
                self.planes[kp[1]].params,
                factor.measurement,
            )
            return r, {kk: Jpose, kp: Jplane}
        if kind is FactorKind.ROOM_PLANE:
            kr, kp = factor.variables
            room = self.rooms[kr[1]]
            plane = self.planes[kp[1]]
            slot = factor.measurement
            axis = PlaneClass.X_VERTICAL if slot < 2 else PlaneClass.Y_VERTICAL
            sign = plane_axis_sign(plane.params, axis)
            r, Jr, Jp = room_plane_residual(
                room.center, room.widths, plane.params, slot, sign
            )
            return np.array([r]), {kr: Jr.reshape(1, 4), kp: Jp.reshape(1, 3)}
        if kind is FactorKind.CORRIDOR_PLANE:
            kc, kp = factor.variables
            corr = self.corridors[kc[1]]
            plane = self.planes[kp[1]]
            slot = factor.measurement
            sign = plane_axis_sign(plane.params, corr.axis)
            axis_idx = 0 if corr.axis is PlaneClass.X_VERTICAL else 1
            r, Jc, Jp = corridor_plane_residual(
                float(corr.center[axis_idx]), corr.width, plane.params, slot, sign
            )
            return np.array([r]), {kc: Jc.reshape(1, 2), kp: Jp.reshape(1, 3)}
        raise ValueError(f"unknown factor kind {kind}")

    # -- local-coordinate updates -------------------------------------------

    def apply_update(self, key: VariableKey, delta: np.ndarray) -> None:
        kind, vid = key
        if kind == "kf":
            kf = self.keyframes[vid]
            kf.pose = kf.pose.retract(delta)
        elif kind == "plane":
            lm = self.planes[vid]
            p = lm.params
            lm.params = PlaneMinimal(
                wrap_angle(p.azimuth + delta[0]),
                p.elevation + delta[1],
                p.distance + delta[2],
            )
        elif kind == "room":
            room = self.rooms[vid]
            room.center = room.center + delta[0:2]
            room.widths = room.widths + delta[2:4]
        elif kind == "corridor":
            corr = self.corridors[vid]
            axis_idx = 0 if corr.axis is PlaneClass.X_VERTICAL else 1
            center = corr.center.copy()
            center[axis_idx] += delta[0]
            corr.center = center
            corr.width = corr.width + delta[1]
        else:
            raise ValueError(f"unknown variable kind {kind}")

    def update_map_to_odom(self) -> None:
        """Re-derive the map-to-odometry offset from the newest keyframe."""
        last = self.last_keyframe()
        if last is not None:
            self.map_to_odom = last.pose.compose(last.odom_pose.inverse())


def classify_map_plane(plane) -> PlaneClass:
    from .geometry import classify_plane

    return classify_plane(plane)
