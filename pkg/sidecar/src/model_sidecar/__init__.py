"""Model sidecar: token-logit and entailment scoring over HTTP."""

from .config import SidecarConfig
from .server import create_app

__all__ = ["SidecarConfig", "create_app"]
__version__ = "0.1.0"
