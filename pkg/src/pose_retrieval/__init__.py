"""Pose-then-retrieve: 6-DoF pose from predicted box corners, then 3D model
retrieval by matching image descriptors against depth renderings."""

__version__ = "0.1.0"
