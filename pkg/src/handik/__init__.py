"""Absolute 3D hand pose recovery from 2D keypoint detections.

Fits a 26-DoF kinematic hand skeleton to confidence-weighted 2D joint
detections from one or more calibrated views via Levenberg-Marquardt, with
a synthetic-data and evaluation harness for end-to-end validation.
"""

from .camera import Camera, Projection2D, default_rig, identity_view, project
from .dataio import (
    DatasetFormatError,
    FrameRecord,
    PoseRow,
    read_dataset,
    read_hand_model,
    read_metrics,
    read_poses,
    read_rig,
    write_dataset,
    write_frame,
    write_hand_model,
    write_metrics,
    write_poses,
    write_rig,
)
from .kinematics import (
    HandModel,
    InvalidPoseError,
    JointSet3D,
    PoseParams,
    clamp_to_limits,
    default_model,
    forward_kinematics,
    mirror_model,
    mirror_pose,
)
from .metrics import (
    MetricsReport,
    aligned_error,
    compute_report,
    per_axis_mae,
    threshold_curve,
)
from .objective import (
    Observation,
    ResidualVector,
    SolverConfig,
    UnsolvableFrameError,
    build_residuals,
    joint_residual,
    total_cost,
)
from .pipeline import (
    FrameInput,
    TrackState,
    cold_start,
    estimate_frame,
    route_handedness,
    substitute_occluded,
)
from .solver import (
    SolveResult,
    apply_tangent,
    jacobian,
    solve,
    step_quaternion,
)
from .synth import SynthConfig, generate_sequence, sample_pose

__version__ = "0.1.0"
