"""Heat, elliptic and wave problems for the conformal Laplacian on spaces of
constant curvature, with the geometric post-processing used to test whether
a domain with a stationary isothermic surface is a geodesic ball."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .modelspace import ModelSpace  # noqa: E402

__all__ = ["ModelSpace", "__version__"]
