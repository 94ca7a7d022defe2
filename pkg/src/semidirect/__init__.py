"""Loosely-coupled semi-direct monocular SLAM.

A direct module tracks frames and runs windowed photometric bundle adjustment;
marginalized keyframes are handed to a feature-based module that refines poses,
maintains a sparse global map, and closes loops; a selector chooses between the
two resulting trajectories.  A synthetic plane-scene renderer provides ground
truth for testing and evaluation.
"""

__version__ = "0.1.0"
