"""Zone-aware on-ramp merging: traffic microsimulation, RSU aggregation and
multi-agent parameterized Double DQN."""

from zmerge._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
