"""Simulator for diffusion-based decentralized multi-task representation learning."""

__version__ = "0.1.0"
