"""graspforge: synthetic data pipeline for task-oriented grasping."""

from .geom import (
    CameraModel,
    GripperSpec,
    Intrinsics,
    RigidTransform,
    TriMesh,
)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "GripperSpec",
    "Intrinsics",
    "KERNEL_BACKEND",
    "RigidTransform",
    "TriMesh",
    "__version__",
]
