"""Borel-plane integral-equation solver for the periodic 3-D Navier-Stokes problem."""

from ._accel import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
