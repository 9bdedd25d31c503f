"""Ride-hailing dispatch simulation with a long-term fairness objective.

Thin package wrapper around the compiled extension. See the project README
for the full CLI and file formats.
"""

from ._fairdispatch import *  # noqa: F401,F403
from ._fairdispatch import __version__  # noqa: F401
