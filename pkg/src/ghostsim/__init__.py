"""Ghost-imaging simulator for pseudo-thermal (chaotic) light.

Subpackages and modules:

- ``field``: grids, complex fields and speckle synthesis
- ``optics``: angular-spectrum propagation, masks, lenses
- ``detect``: bucket and scanning point detectors
- ``stats``: mergeable g2 accumulators and contrast analytics
- ``scenarios``: end-to-end experiment drivers
- ``cli``: command-line entry point
"""
from .errors import (ConfigError, CoarseGridWarning, GhostSimError, InsufficientDataError,
                     OutputError, SamplingError, ValidationError, WindowingError)

__version__ = "0.1.0"
