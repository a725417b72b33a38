"""Factor definitions: residuals, analytic Jacobians and robust weighting.

Local coordinates per variable type:
  keyframe pose : 6  [dt (body frame), dw (rotation vector, right perturbation)]
  plane         : 3  [d_azimuth, d_elevation, d_distance]
  room          : 4  [d_cx, d_cy, d_wx, d_wy]
  corridor      : 2  [d_center_along_axis, d_width]   (the cross-axis center
                     component is deliberately not optimized)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (
    Pose3,
    PlaneClass,
    PlaneMinimal,
    from_minimal,
    rot_log,
    skew,
    so3_right_jacobian_inv,
    wrap_angle,
)


class FactorKind(Enum):
    ODOMETRY = "odometry"
    POSE_PLANE = "pose_plane"
    ROOM_PLANE = "room_plane"
    CORRIDOR_PLANE = "corridor_plane"
    LOOP_CLOSURE = "loop_closure"


VariableKey = tuple[str, int]  # ("kf" | "plane" | "room" | "corridor", id)

LOCAL_DIM = {"kf": 6, "plane": 3, "room": 4, "corridor": 2}

RESIDUAL_DIM = {
    FactorKind.ODOMETRY: 6,
    FactorKind.POSE_PLANE: 3,
    FactorKind.ROOM_PLANE: 1,
    FactorKind.CORRIDOR_PLANE: 1,
    FactorKind.LOOP_CLOSURE: 6,
}


@dataclass
class Factor:
    kind: FactorKind
    variables: tuple[VariableKey, ...]
    measurement: object  # Pose3 for odometry/loop, PlaneMinimal for pose-plane,
    # slot index (0..3 room / 0..1 corridor) for topology factors
    information: np.ndarray
    robust: bool = False
    _sqrt_info: np.ndarray | None = field(default=None, repr=False, compare=False)

    def sqrt_information(self) -> np.ndarray:
        if self._sqrt_info is None:
            info = np.atleast_2d(np.asarray(self.information, dtype=float))
            self._sqrt_info = np.linalg.cholesky(info).T  # L^T, Lambda = L L^T
        return self._sqrt_info


def huber_cost_and_weight(s: float, delta: float) -> tuple[float, float]:
    """Robust cost and IRLS weight for whitened residual norm-squared s.

    Returns (rho(s), weight) with weight = 1 inside the delta region and
    delta/||r|| outside; residual and Jacobian rows are scaled by sqrt(weight).
    """
    if s <= delta * delta:
        return s, 1.0
    norm = math.sqrt(s)
    return 2.0 * delta * norm - delta * delta, delta / norm


def pose_between_residual(
    x_prev: Pose3, x_curr: Pose3, meas: Pose3
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residual of a relative-pose factor plus Jacobians w.r.t. both poses.

    r = [R_m^T (t_pred - t_m); Log(R_m^T R_pred)] with the prediction the
    relative pose of x_curr in the frame of x_prev.
    """
    Ra, ta = x_prev.rotation, x_prev.translation
    Rb, tb = x_curr.rotation, x_curr.translation
    Rm, tm = meas.rotation, meas.translation

    Rp = Ra.T @ Rb
    tp = Ra.T @ (tb - ta)

    r_t = Rm.T @ (tp - tm)
    E = Rm.T @ Rp
    r_w = rot_log(E)
    r = np.concatenate([r_t, r_w])

    Jinv = so3_right_jacobian_inv(r_w)

    Ja = np.zeros((6, 6))
    Jb = np.zeros((6, 6))
    # translation block
    Jb[0:3, 0:3] = Rm.T @ Rp
    Ja[0:3, 0:3] = -Rm.T
    Ja[0:3, 3:6] = Rm.T @ skew(tp)
    # rotation block
    Jb[3:6, 3:6] = Jinv
    Ja[3:6, 3:6] = -Jinv @ Rp.T
    return r, Ja, Jb


def _minimal_jacobian_wrt_normal(n: np.ndarray) -> np.ndarray:
    """d(azimuth, elevation)/d(unit normal), a 2x3 matrix."""
    nx, ny, nz = n
    rho2 = nx * nx + ny * ny
    rho = math.sqrt(rho2)
    J = np.zeros((2, 3))
    if rho < 1e-3:
        # azimuth is pinned to zero near the pole and elevation sits at an
        # extremum, so horizontal planes are steered through distance only
        return J
    J[0, 0] = -ny / rho2
    J[0, 1] = nx / rho2
    J[1, 0] = -nx * nz / rho
    J[1, 1] = -ny * nz / rho
    J[1, 2] = rho
    return J


def pose_plane_residual(
    pose: Pose3, plane: PlaneMinimal, meas: PlaneMinimal
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residual of a plane observation plus Jacobians (pose 3x6, plane 3x3).

    The map plane is predicted into the sensor frame, converted to minimal
    parameters, and compared against the measured minimal parameters with
    azimuth wrapping.
    """
    R, t = pose.rotation, pose.translation
    ca, sa = math.cos(plane.azimuth), math.sin(plane.azimuth)
    ce, se = math.cos(plane.elevation), math.sin(plane.elevation)
    n_m = np.array([ce * ca, ce * sa, se])
    d_m = plane.distance

    n_l = R.T @ n_m
    d_l = d_m - float(t @ n_m)

    # derivatives of the map-frame normal w.r.t. (azimuth, elevation)
    dn_daz = np.array([-ce * sa, ce * ca, 0.0])
    dn_del = np.array([-se * ca, -se * sa, ce])

    # chain into the sensor frame
    dnl_daz = R.T @ dn_daz
    dnl_del = R.T @ dn_del
    ddl_daz = -float(t @ dn_daz)
    ddl_del = -float(t @ dn_del)

    # pose perturbation: R <- R exp(w^), t <- t + R u
    dnl_dw = skew(n_l)  # 3x3
    ddl_du = -n_l  # 1x3
    # d_l depends on t only through -t.n_m; rotation perturbation leaves d_l
    # unchanged to first order only through n_m (map quantities fixed)

    sign = 1.0
    if d_l < 0.0:
        # closest-point convention at the linearization point
        sign = -1.0
        n_l = -n_l
        d_l = -d_l

    Jmin = _minimal_jacobian_wrt_normal(n_l)

    rho_l = math.hypot(n_l[0], n_l[1])
    # near the pole the predicted azimuth is pinned to zero, matching the
    # minimal-parameter convention used for measurements
    az_l = math.atan2(n_l[1], n_l[0]) if rho_l >= 1e-3 else 0.0
    r = np.array(
        [
            wrap_angle(az_l - meas.azimuth),
            math.atan2(n_l[2], rho_l) - meas.elevation,
            d_l - meas.distance,
        ]
    )

    Jplane = np.zeros((3, 3))
    Jplane[0:2, 0] = Jmin @ (sign * dnl_daz)
    Jplane[0:2, 1] = Jmin @ (sign * dnl_del)
    Jplane[2, 0] = sign * ddl_daz
    Jplane[2, 1] = sign * ddl_del
    Jplane[2, 2] = sign * 1.0

    Jpose = np.zeros((3, 6))
    Jpose[0:2, 3:6] = Jmin @ (sign * dnl_dw)
    Jpose[2, 0:3] = sign * ddl_du
    return r, Jpose, Jplane


def plane_axis_sign(plane: PlaneMinimal, cls: PlaneClass) -> float:
    """Sign of the normal component along the class axis (signed distance)."""
    n = from_minimal(plane).normal
    idx = 0 if cls is PlaneClass.X_VERTICAL else 1
    return 1.0 if n[idx] >= 0.0 else -1.0


def room_plane_residual(
    center: np.ndarray, widths: np.ndarray, plane: PlaneMinimal, slot: int, sign: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Room-plane edge residual plus Jacobians (room 1x4, plane 1x3).

    Slots: 0 low-x, 1 high-x, 2 low-y, 3 high-y. The plane enters through
    its signed distance along the room axis, sign fixed by its normal.
    """
    d_signed = sign * plane.distance
    if slot == 0:
        r = (center[0] - widths[0] / 2.0) - d_signed
        Jr = np.array([1.0, 0.0, -0.5, 0.0])
    elif slot == 1:
        r = (center[0] + widths[0] / 2.0) - d_signed
        Jr = np.array([1.0, 0.0, 0.5, 0.0])
    elif slot == 2:
        r = (center[1] - widths[1] / 2.0) - d_signed
        Jr = np.array([0.0, 1.0, 0.0, -0.5])
    elif slot == 3:
        r = (center[1] + widths[1] / 2.0) - d_signed
        Jr = np.array([0.0, 1.0, 0.0, 0.5])
    else:
        raise ValueError(f"invalid room slot {slot}")
    Jp = np.array([0.0, 0.0, -sign])
    return float(r), Jr, Jp


def corridor_plane_residual(
    center_axis: float, width: float, plane: PlaneMinimal, slot: int, sign: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Corridor-plane edge residual plus Jacobians (corridor 1x2, plane 1x3)."""
    d_signed = sign * plane.distance
    if slot == 0:
        r = (center_axis - width / 2.0) - d_signed
        Jc = np.array([1.0, -0.5])
    elif slot == 1:
        r = (center_axis + width / 2.0) - d_signed
        Jc = np.array([1.0, 0.5])
    else:
        raise ValueError(f"invalid corridor slot {slot}")
    Jp = np.array([0.0, 0.0, -sign])
    return float(r), Jc, Jp
