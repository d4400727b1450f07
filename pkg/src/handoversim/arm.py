"""7-DOF serial arm kinematics and velocity-level control.

Joint geometry uses modified Denavit-Hartenberg rows (Craig convention):
    T_i = RotX(alpha_i) . TransX(a_i) . RotZ(theta_offset_i + q_i) . TransZ(d_i)
which is the convention the default arm's published parameters are given in.
The grasp frame is the flange frame right-composed with a fixed offset pose.

All functions are pure; the same inputs always produce the same outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .se3 import Pose, matrix_to_quat, pose_error, quat_from_axis_angle

NUM_JOINTS = 7


class ModelMismatchError(ValueError):
    """Joint vector length does not match the arm model."""


class SingularityError(RuntimeError):
    """Jacobian is rank-deficient and damping is disabled."""


@dataclass
class ArmModel:
    """Modified-DH description of a 7-joint revolute arm.

    dh rows are (a, d, alpha, theta_offset); limits are per joint.
    """

    dh: np.ndarray
    q_lower: np.ndarray
    q_upper: np.ndarray
    qd_limit: np.ndarray
    flange_offset: Pose
    home: np.ndarray

    def __post_init__(self):
        self.dh = np.asarray(self.dh, dtype=float)
        self.q_lower = np.asarray(self.q_lower, dtype=float)
        self.q_upper = np.asarray(self.q_upper, dtype=float)
        self.qd_limit = np.asarray(self.qd_limit, dtype=float)
        self.home = np.asarray(self.home, dtype=float)
        if self.dh.shape != (NUM_JOINTS, 4):
            raise ModelMismatchError(f"expected {NUM_JOINTS} dh rows, got {self.dh.shape}")
        for arr, name in [
            (self.q_lower, "q_lower"),
            (self.q_upper, "q_upper"),
            (self.qd_limit, "qd_limit"),
            (self.home, "home"),
        ]:
            if arr.shape != (NUM_JOINTS,):
                raise ModelMismatchError(f"{name} must have {NUM_JOINTS} entries")
        if not np.all(np.isfinite(self.q_lower)) or not np.all(np.isfinite(self.q_upper)):
            raise ValueError("joint limits must be finite")
        if not np.all(self.q_lower < self.q_upper):
            raise ValueError("each lower joint limit must be below the upper limit")
        if not np.all(self.qd_limit > 0):
            raise ValueError("velocity limits must be positive")

    def max_reach(self):
        """Conservative workspace radius: sum of all link offsets plus the tool."""
        return float(
            np.sum(np.abs(self.dh[:, 0])) + np.sum(np.abs(self.dh[:, 1]))
            + np.linalg.norm(self.flange_offset.position)
        )

    def clip(self, q):
        return np.clip(q, self.q_lower, self.q_upper)


@dataclass
class JointState:
    positions: np.ndarray
    velocities: np.ndarray = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).copy()
        if self.velocities is None:
            self.velocities = np.zeros(NUM_JOINTS)
        self.velocities = np.asarray(self.velocities, dtype=float).copy()
        if self.positions.shape != (NUM_JOINTS,):
            raise ModelMismatchError(f"expected {NUM_JOINTS} joint positions")
        if self.velocities.shape != (NUM_JOINTS,):
            raise ModelMismatchError(f"expected {NUM_JOINTS} joint velocities")


@dataclass
class Twist:
    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)
        self.angular = np.asarray(self.angular, dtype=float)
        if not (np.all(np.isfinite(self.linear)) and np.all(np.isfinite(self.angular))):
            raise ValueError("twist components must be finite")


@dataclass
class ServoGains:
    """Proportional task-space gains (1/s) and least-squares damping.

    `damping` is the ceiling of a manipulability-adaptive ramp: away from
    singularities the solve is exact (zero bias, so straight-line paths stay
    straight), and the full ceiling applies only as the smallest singular
    value of the Jacobian collapses. 0 disables damping entirely, in which
    case near-singular configurations raise SingularityError.
    """

    linear: float = 2.0
    angular: float = 2.0
    damping: float = 0.05


def _dh_matrix(a, d, alpha, theta):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st, 0.0, a],
            [st * ca, ct * ca, -sa, -d * sa],
            [st * sa, ct * sa, ca, d * ca],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _check_joints(q):
    q = np.asarray(q, dtype=float)
    if q.shape != (NUM_JOINTS,):
        raise ModelMismatchError(f"expected {NUM_JOINTS} joint values, got shape {q.shape}")
    return q


def fk_frames(model: ArmModel, q):
    """Cumulative joint-frame transforms T_0..T_7 plus the grasp-frame matrix."""
    q = _check_joints(q)
    frames = []
    T = np.eye(4)
    for i in range(NUM_JOINTS):
        a, d, alpha, off = model.dh[i]
        T = T @ _dh_matrix(a, d, alpha, off + q[i])
        frames.append(T)
    tool = T @ model.flange_offset.to_matrix()
    return frames, tool


def fk_matrix(model: ArmModel, q):
    return fk_frames(model, q)[1]


def fk(model: ArmModel, joints) -> Pose:
    """Grasp-frame pose in the world frame."""
    q = joints.positions if isinstance(joints, JointState) else joints
    T = fk_matrix(model, q)
    return Pose(T[:3, 3], matrix_to_quat(T[:3, :3]))


def jacobian(model: ArmModel, joints):
    """Geometric Jacobian (6x7): rows 0-2 linear, 3-5 angular, world frame."""
    q = joints.positions if isinstance(joints, JointState) else joints
    frames, tool = fk_frames(model, q)
    p_ee = tool[:3, 3]
    axes = np.stack([f[:3, 2] for f in frames])
    origins = np.stack([f[:3, 3] for f in frames])
    J = np.empty((6, NUM_JOINTS))
    J[:3] = np.cross(axes, p_ee - origins).T
    J[3:] = axes.T
    return J


def ee_twist(model: ArmModel, joints: JointState) -> Twist:
    v = jacobian(model, joints) @ joints.velocities
    return Twist(v[:3], v[3:])


def _solve_rates(J, v, damping, winv=None):
    """Rates for J qd = v. Optional per-joint weights (weighted least norm)
    discourage joints already close to a limit; damping ramps in only as the
    weighted operator degenerates, so healthy solves are exact."""
    if winv is None:
        winv = np.ones(J.shape[1])
    A = (J * winv) @ J.T
    smin = np.sqrt(max(np.linalg.eigvalsh(A)[0], 0.0))
    if damping == 0.0:
        if smin < 1e-6:
            raise SingularityError("jacobian is rank-deficient and damping is disabled")
        lam = 0.0
    else:
        lam = damping * max(0.0, 1.0 - smin / damping)
    if lam > 0.0:
        A = A + (lam ** 2) * np.eye(6)
    return winv * (J.T @ np.linalg.solve(A, v))


def resolved_rate_step(
    model: ArmModel, joints: JointState, target: Pose, dt: float, gains: ServoGains = None
) -> JointState:
    """One velocity-control tick toward `target` along a straight Cartesian path.

    Commands a proportional twist on the pose error, maps it to joint rates by
    damped least squares, uniformly scales into the velocity limits (scaling,
    not per-joint clipping, so the Cartesian direction survives), and
    integrates one step with joint positions clipped to their limits.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not np.all(np.isfinite(target.position)):
        raise ValueError("target pose must be finite")
    gains = gains or ServoGains()
    q = joints.positions
    dp, dr = pose_error(target, fk(model, q))
    v = np.concatenate([gains.linear * dp, gains.angular * dr])
    J = jacobian(model, q)
    winv = _limit_weights(model, q)
    qd = _solve_rates(J, v, gains.damping, winv)
    for _ in range(6):
        # a joint sitting on its limit cannot move further into it: block the
        # offending joints outright and re-solve through the rest
        pushing = ((q <= model.q_lower + 1e-9) & (qd < -1e-12)) | (
            (q >= model.q_upper - 1e-9) & (qd > 1e-12)
        )
        if not np.any(pushing & (winv > 0.0)):
            break
        winv = np.where(pushing, 0.0, winv)
        qd = _solve_rates(J, v, gains.damping, winv)
    peak = np.max(np.abs(qd) / model.qd_limit)
    if peak > 1.0:
        qd = qd / peak
    return JointState(model.clip(q + qd * dt), qd)


def _limit_weights(model, q):
    """Inverse weighted-least-norm weights: 1 mid-range, shrinking toward a
    limit so the solver routes motion through the other joints instead of
    jamming. The achieved twist is unchanged while the task stays feasible."""
    span = model.q_upper - model.q_lower
    zone = 0.12 * span
    low = np.maximum(0.0, zone - (q - model.q_lower)) / zone
    high = np.maximum(0.0, zone - (model.q_upper - q)) / zone
    proximity = np.maximum(low, high)
    return 1.0 / (1.0 + 50.0 * proximity ** 2)


def ik_solve(model: ArmModel, target: Pose, seed, pos_tol=1e-3, ang_tol=np.deg2rad(1.0),
             max_iters=120, damping=0.02, cap_p=0.25, cap_r=0.6):
    """Damped least-squares IK from one seed. Returns joint vector or None.

    The error is capped per step (trust region) so distant seeds take sane
    first steps; a stall counter bails out early when the seed basin is dry.
    """
    q = model.clip(np.asarray(seed, dtype=float))
    best = np.inf
    stale = 0
    for _ in range(max_iters):
        dp, dr = pose_error(target, fk(model, q))
        err_p, err_r = np.linalg.norm(dp), np.linalg.norm(dr)
        if err_p < pos_tol and err_r < ang_tol:
            return q
        score = err_p + 0.1 * err_r
        if score < best - 1e-9:
            best = score
            stale = 0
        else:
            stale += 1
            if stale > 12:
                return None
        if err_p > cap_p:
            dp = dp * (cap_p / err_p)
        if err_r > cap_r:
            dr = dr * (cap_r / err_r)
        step = _solve_rates(jacobian(model, q), np.concatenate([dp, dr]), damping)
        q = model.clip(q + step)
    return None


def ik_seeds(model: ArmModel):
    """Home plus 7 fixed variants: base swung to the sides / behind, elbow
    raised, elbow tucked, wrist rolled. Deterministic by construction."""
    home = model.home
    variants = []
    for dq0 in (np.pi / 2, -np.pi / 2, np.pi, -np.pi):
        s = home.copy()
        s[0] += dq0
        variants.append(s)
    s = home.copy()
    s[1], s[3] = 0.8, -1.2
    variants.append(s)
    s = home.copy()
    s[1], s[3], s[5] = -1.2, -2.6, 2.8
    variants.append(s)
    s = home.copy()
    s[5], s[6] = 0.4, -1.5
    variants.append(s)
    return [model.clip(home)] + [model.clip(v) for v in variants]


def is_reachable(model: ArmModel, target: Pose, pos_tol=1e-3, ang_tol=np.deg2rad(1.0)) -> bool:
    """True iff IK from any of the 8 fixed seeds lands on target within limits."""
    if not np.all(np.isfinite(target.position)):
        raise ValueError("target pose must be finite")
    if np.linalg.norm(target.position) > model.max_reach():
        return False
    for seed in ik_seeds(model):
        if ik_solve(model, target, seed, pos_tol, ang_tol) is not None:
            return True
    return False


def default_arm() -> ArmModel:
    """Stock 7-DOF arm: published Panda modified-DH table, limits, and a
    two-finger gripper whose grasp frame sits 0.2104 m past the last joint."""
    dh = np.array(
        [
            # a, d, alpha, theta_offset
            [0.0, 0.333, 0.0, 0.0],
            [0.0, 0.0, -np.pi / 2, 0.0],
            [0.0, 0.316, np.pi / 2, 0.0],
            [0.0825, 0.0, np.pi / 2, 0.0],
            [-0.0825, 0.384, -np.pi / 2, 0.0],
            [0.0, 0.0, np.pi / 2, 0.0],
            [0.088, 0.0, np.pi / 2, 0.0],
        ]
    )
    q_lower = np.array([-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973])
    q_upper = np.array([2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973])
    qd_limit = np.array([2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61])
    # Flange (0.107 m) plus gripper TCP (0.1034 m), fingers rotated 45 deg.
    flange = Pose([0.0, 0.0, 0.2104], quat_from_axis_angle([0, 0, 1], -np.pi / 4))
    # Grasp frame at (0.35, 0, 0.50) looking 45 deg down-forward.
    home = np.array([0.0, -1.1329, 0.0, -2.8009, 0.0, 2.4534, 0.7854])
    return ArmModel(dh, q_lower, q_upper, qd_limit, flange, home)
