"""Learned difference-of-convex regularizers."""

from ._dcreg import *  # noqa: F401,F403
from ._dcreg import __version__  # noqa: F401
