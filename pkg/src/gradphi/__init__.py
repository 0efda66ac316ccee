"""Monte Carlo engine and estimators for heat-bath interface dynamics."""

from .potential import Potential, TiltedFamily, make_potential

__all__ = ["Potential", "TiltedFamily", "make_potential"]

__version__ = "0.1.0"
