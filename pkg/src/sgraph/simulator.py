"""Deterministic synthetic indoor worlds: floorplan generation, ground-truth
trajectories, drifting odometry and ray-cast LiDAR scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PlaneClass, PlaneHessian, Pose3, rot_exp, wrap_angle
from .planes import PointCloud


class InvalidLayout(ValueError):
    """Overlapping rectangles or otherwise inconsistent floorplan."""


@dataclass(frozen=True)
class RectSpec:
    """Axis-aligned floorplan rectangle (a room or a corridor)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    kind: str = "room"  # "room" | "corridor"
    name: str = ""

    @property
    def width_x(self) -> float:
        return self.x_max - self.x_min

    @property
    def width_y(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


@dataclass(frozen=True)
class LayoutSpec:
    rects: tuple[RectSpec, ...]
    wall_height: float = 2.5


@dataclass(frozen=True)
class WallRect:
    """Finite rectangle on an axis-aligned plane.

    axis is the index of the plane-normal axis (0=x, 1=y, 2=z); offset is
    the plane coordinate along that axis; (u, v) bound the two remaining
    axes in ascending index order.
    """

    axis: int
    offset: float
    u_min: float
    u_max: float
    v_min: float
    v_max: float

    def plane(self) -> PlaneHessian:
        n = np.zeros(3)
        n[self.axis] = 1.0 if self.offset >= 0.0 else -1.0
        return PlaneHessian(n, abs(self.offset))


@dataclass(frozen=True)
class RoomAnnotation:
    center: np.ndarray  # (cx, cy)
    widths: np.ndarray  # (wx, wy)


@dataclass(frozen=True)
class CorridorAnnotation:
    axis: PlaneClass  # class of the wall pair
    center: np.ndarray  # (cx, cy)
    width: float


@dataclass(frozen=True)
class WorldModel:
    walls: tuple[WallRect, ...]
    rooms: tuple[RoomAnnotation, ...]
    corridors: tuple[CorridorAnnotation, ...]
    wall_height: float


@dataclass(frozen=True)
class TrajectorySpec:
    waypoints: tuple[tuple[float, float, float], ...]  # (x, y, yaw)
    speed: float = 1.0  # m/s
    scan_rate: float = 2.0  # Hz
    loops: int = 1
    sensor_height: float = 1.0


@dataclass(frozen=True)
class NoiseSpec:
    trans_drift: float = 0.0  # m / sqrt(m) translation random walk
    rot_drift: float = 0.0  # rad / sqrt(rad) rotation random walk
    range_sigma: float = 0.0  # m, per-return range noise
    seed: int = 0


@dataclass(frozen=True)
class ScanPattern:
    n_rings: int = 16
    n_azimuth: int = 360
    elevation_min: float = math.radians(-15.0)
    elevation_max: float = math.radians(15.0)
    max_range: float = 50.0


@dataclass(frozen=True)
class SimStep:
    timestamp: float
    gt_pose: Pose3
    odom_pose: Pose3
    scan: PointCloud


def _edge_openings(rect: RectSpec, others: list[RectSpec], side: str) -> list[tuple[float, float]]:
    """Intervals along one edge shared with a neighbouring rectangle."""
    eps = 1e-9
    openings = []
    for o in others:
        if side == "x_min" and abs(o.x_max - rect.x_min) < eps:
            lo, hi = max(rect.y_min, o.y_min), min(rect.y_max, o.y_max)
        elif side == "x_max" and abs(o.x_min - rect.x_max) < eps:
            lo, hi = max(rect.y_min, o.y_min), min(rect.y_max, o.y_max)
        elif side == "y_min" and abs(o.y_max - rect.y_min) < eps:
            lo, hi = max(rect.x_min, o.x_min), min(rect.x_max, o.x_max)
        elif side == "y_max" and abs(o.y_min - rect.y_max) < eps:
            lo, hi = max(rect.x_min, o.x_min), min(rect.x_max, o.x_max)
        else:
            continue
        if hi - lo > eps:
            openings.append((lo, hi))
    return sorted(openings)


def _subtract_intervals(
    lo: float, hi: float, openings: list[tuple[float, float]]
) -> list[tuple[float, float]]:
    segments = []
    cur = lo
    for a, b in openings:
        if a > cur + 1e-9:
            segments.append((cur, a))
        cur = max(cur, b)
    if hi > cur + 1e-9:
        segments.append((cur, hi))
    return segments


def generate_world(layout: LayoutSpec, seed: int = 0) -> WorldModel:
    """Build walls, floor/ceiling and ground-truth annotations from a
    rectangle floorplan. Shared boundaries become door openings."""
    rects = list(layout.rects)
    if not rects:
        raise InvalidLayout("layout needs at least one rectangle")
    for i, a in enumerate(rects):
        if a.x_max <= a.x_min or a.y_max <= a.y_min:
            raise InvalidLayout(f"degenerate rectangle {a}")
        for b in rects[i + 1 :]:
            if (
                a.x_min < b.x_max - 1e-9
                and b.x_min < a.x_max - 1e-9
                and a.y_min < b.y_max - 1e-9
                and b.y_min < a.y_max - 1e-9
            ):
                raise InvalidLayout(f"overlapping rectangles {a} and {b}")

    h = layout.wall_height
    walls: list[WallRect] = []
    for rect in rects:
        others = [o for o in rects if o is not rect]
        for side in ("x_min", "x_max"):
            openings = _edge_openings(rect, others, side)
            x = rect.x_min if side == "x_min" else rect.x_max
            for lo, hi in _subtract_intervals(rect.y_min, rect.y_max, openings):
                walls.append(WallRect(axis=0, offset=x, u_min=lo, u_max=hi, v_min=0.0, v_max=h))
        for side in ("y_min", "y_max"):
            openings = _edge_openings(rect, others, side)
            y = rect.y_min if side == "y_min" else rect.y_max
            for lo, hi in _subtract_intervals(rect.x_min, rect.x_max, openings):
                walls.append(WallRect(axis=1, offset=y, u_min=lo, u_max=hi, v_min=0.0, v_max=h))

    # floor and ceiling rectangles per floorplan rectangle
    for rect in rects:
        for z in (0.0, h):
            walls.append(
                WallRect(
                    axis=2,
                    offset=z,
                    u_min=rect.x_min,
                    u_max=rect.x_max,
                    v_min=rect.y_min,
                    v_max=rect.y_max,
                )
            )

    rooms = []
    corridors = []
    for rect in rects:
        if rect.kind == "room":
            rooms.append(
                RoomAnnotation(
                    center=np.array(rect.center),
                    widths=np.array([rect.width_x, rect.width_y]),
                )
            )
        else:
            if rect.width_x <= rect.width_y:
                corridors.append(
                    CorridorAnnotation(
                        axis=PlaneClass.X_VERTICAL,
                        center=np.array(rect.center),
                        width=rect.width_x,
                    )
                )
            else:
                corridors.append(
                    CorridorAnnotation(
                        axis=PlaneClass.Y_VERTICAL,
                        center=np.array(rect.center),
                        width=rect.width_y,
                    )
                )
    return WorldModel(
        walls=tuple(walls),
        rooms=tuple(rooms),
        corridors=tuple(corridors),
        wall_height=h,
    )


def ray_directions(pattern: ScanPattern) -> np.ndarray:
    """Unit ray directions in the sensor frame, shape (rings*azimuths, 3)."""
    elevations = np.linspace(pattern.elevation_min, pattern.elevation_max, pattern.n_rings)
    azimuths = np.arange(pattern.n_azimuth) * (2.0 * math.pi / pattern.n_azimuth)
    el, az = np.meshgrid(elevations, azimuths, indexing="ij")
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1).reshape(-1, 3)


def raycast(world: WorldModel, pose: Pose3, pattern: ScanPattern) -> np.ndarray:
    """Cast the scan pattern against all wall rectangles.

    Returns hit points in the sensor frame (pre-noise, exactly on the hit
    planes). Misses are dropped.
    """
    dirs_sensor = ray_directions(pattern)
    dirs = dirs_sensor @ pose.rotation.T
    origin = pose.translation
    n_rays = dirs.shape[0]
    best_t = np.full(n_rays, np.inf)
    other_axes = {0: (1, 2), 1: (0, 2), 2: (0, 1)}
    for wall in world.walls:
        a = wall.axis
        u_ax, v_ax = other_axes[a]
        da = dirs[:, a]
        valid = np.abs(da) > 1e-12
        t = np.full(n_rays, np.inf)
        t[valid] = (wall.offset - origin[a]) / da[valid]
        t[t <= 1e-9] = np.inf
        with np.errstate(invalid="ignore"):
            u = origin[u_ax] + t * dirs[:, u_ax]
            v = origin[v_ax] + t * dirs[:, v_ax]
        inside = (
            (u >= wall.u_min - 1e-12)
            & (u <= wall.u_max + 1e-12)
            & (v >= wall.v_min - 1e-12)
            & (v <= wall.v_max + 1e-12)
        )
        t[~inside] = np.inf
        best_t = np.minimum(best_t, t)
    hit = np.isfinite(best_t) & (best_t <= pattern.max_range)
    return dirs_sensor[hit] * best_t[hit, None]


def _interp_poses(traj: TrajectorySpec) -> tuple[np.ndarray, list[Pose3]]:
    wps = list(traj.waypoints) * traj.loops
    wps.append(traj.waypoints[0])
    pts = np.array([[w[0], w[1]] for w in wps])
    yaws = np.array([w[2] for w in wps])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(cum[-1])
    if total <= 0.0:
        raise ValueError("trajectory has zero length")
    dt = 1.0 / traj.scan_rate
    n_steps = int(math.floor(total / traj.speed / dt)) + 1
    times = np.arange(n_steps) * dt
    poses = []
    for t in times:
        s = min(t * traj.speed, total)
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(i, len(seg) - 1)
        alpha = 0.0 if seg[i] <= 0 else (s - cum[i]) / seg[i]
        xy = pts[i] * (1 - alpha) + pts[i + 1] * alpha
        dyaw = wrap_angle(yaws[i + 1] - yaws[i])
        yaw = yaws[i] + alpha * dyaw
        poses.append(Pose3.from_xyz_yaw(xy[0], xy[1], traj.sensor_height, yaw))
    return times, poses


def simulate_run(
    world: WorldModel,
    traj: TrajectorySpec,
    noise: NoiseSpec,
    pattern: ScanPattern = ScanPattern(),
) -> list[SimStep]:
    """Ground-truth poses, drifting odometry and noisy scans along the
    trajectory. Fully deterministic given the noise seed."""
    rng = np.random.default_rng(noise.seed)
    times, gt_poses = _interp_poses(traj)
    steps: list[SimStep] = []
    odom = gt_poses[0]
    prev_gt = gt_poses[0]
    for i, (t, gt) in enumerate(zip(times, gt_poses)):
        if i > 0:
            rel = prev_gt.inverse().compose(gt)
            length = float(np.linalg.norm(rel.translation))
            angle = float(np.linalg.norm(rel.log()[3:6]))
            sig_t = noise.trans_drift * math.sqrt(max(length, 0.0))
            sig_r = noise.rot_drift * math.sqrt(max(angle, 0.0))
            eps = np.concatenate(
                [rng.normal(0.0, 1.0, 3) * sig_t, rng.normal(0.0, 1.0, 3) * sig_r]
            )
            noisy_rel = rel.compose(Pose3(rot_exp(eps[3:6]), eps[0:3]))
            odom = odom.compose(noisy_rel)
            prev_gt = gt
        pts = raycast(world, gt, pattern)
        if noise.range_sigma > 0.0 and pts.shape[0] > 0:
            ranges = np.linalg.norm(pts, axis=1, keepdims=True)
            noisy_ranges = ranges + rng.normal(0.0, noise.range_sigma, ranges.shape)
            pts = pts / ranges * noisy_ranges
        steps.append(
            SimStep(
                timestamp=float(t),
                gt_pose=gt,
                odom_pose=odom,
                scan=PointCloud(pts, float(t)),
            )
        )
    return steps


def perimeter_waypoints(
    rects: list[RectSpec], margin: float = 1.0
) -> tuple[tuple[float, float, float], ...]:
    """Waypoints visiting the center of each rectangle in order."""
    wps = []
    for r in rects:
        cx, cy = r.center
        wps.append((cx, cy, 0.0))
    return tuple(wps)


def default_multi_room_layout(n_rooms: int = 4, with_corridor: bool = True) -> LayoutSpec:
    """A row of rooms of staggered sizes joined by narrow corridors.

    Staggered depths keep walls of different rooms non-coplanar so each
    room has its own four wall planes.
    """
    rects: list[RectSpec] = []
    x = 0.0

    def _y0(i: int) -> float:
        # alternate rooms up/down by more than a typical door width so
        # walls of neighbouring rooms are clearly non-collinear
        return -1.6 * (i % 2) - 0.9 * (i % 4)

    for i in range(n_rooms):
        w = 5.0 + 0.8 * (i % 3)
        depth = 6.0 + 0.9 * ((i + 1) % 3)
        y0 = _y0(i)
        rects.append(
            RectSpec(x, x + w, y0, y0 + depth, kind="room", name=f"room{i}")
        )
        if i < n_rooms - 1 and with_corridor:
            cy0 = max(y0, _y0(i + 1)) + 1.5
            rects.append(
                RectSpec(x + w, x + w + 2.2, cy0, cy0 + 1.8, kind="corridor", name=f"corr{i}")
            )
            x = x + w + 2.2
        else:
            x = x + w
    return LayoutSpec(rects=tuple(rects))
