"""depth2flow - optical-flow training data from monocular depth and stereo disparity."""

__version__ = "0.1.0"

from .cli import main

__all__ = ["main"]
