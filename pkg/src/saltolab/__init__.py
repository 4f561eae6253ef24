"""Planar bounding quadruped: kinematics, GRF control, perception and a policy-rate environment."""

__version__ = "0.1.0"
