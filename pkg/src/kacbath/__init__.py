"""kacbath: a numerical laboratory for Kac-type velocity chains with a heat bath.

Three legs, cross-checking each other:

* a characteristic-function solver on a lattice ball (fourier module),
* an exact event-driven jump-process simulator (particles module),
* contraction metrics on characteristic functions (metrics module).
"""

__version__ = "0.1.0"

from .core import KacParams, MomentRecord, ThermostatSpec

__all__ = ["KacParams", "MomentRecord", "ThermostatSpec", "__version__"]
