"""Quadrotor CTBR flight simulation and observation-space benchmarking."""

__version__ = "0.1.0"
