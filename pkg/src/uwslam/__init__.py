"""Multi-sensor factor-graph SLAM for underwater vehicles.

Vision (multi-camera rig), preintegrated IMU, DVL and depth measurements are
fused in a sparse nonlinear least-squares smoother. A survey simulator,
trajectory metrics and semantic point-cloud fusion complete the toolkit.
"""

__version__ = "0.1.0"

from .estimators import MultiSensorSLAM, SemanticCloudFuser, TrajectoryAligner
from .exceptions import UwslamError
from .geometry import CameraIntrinsics, Pose, PoseTrajectory, RigCalibration, RigCamera, Rotation
from .semantics import LabeledPointCloud, SemanticClass

__all__ = [
    "CameraIntrinsics",
    "LabeledPointCloud",
    "MultiSensorSLAM",
    "Pose",
    "PoseTrajectory",
    "RigCalibration",
    "RigCamera",
    "Rotation",
    "SemanticClass",
    "SemanticCloudFuser",
    "TrajectoryAligner",
    "UwslamError",
    "__version__",
]
