"""
RoughFlow Core Package.
"""
from __future__ import annotations

__version__ = "0.1.0"

from . import config
from . import controlled
from . import enhance
from . import paths
from . import regularization
from . import rough

__all__ = ["config", "controlled", "enhance", "paths", "regularization", "rough", "__version__"]
