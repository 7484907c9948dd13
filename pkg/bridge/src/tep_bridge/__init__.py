"""Protocol-conformant backend server skeleton with a geometric reference backend.

Wrap real model inference by registering handlers on a
:class:`~tep_bridge.reference.HandlerRegistry`; the shipped reference backend
answers every method from simulator label grids, which makes it the
cross-process stand-in used in integration tests.
"""

from .reference import BridgeError, DriftConfig, HandlerRegistry, reference_backend
from .server import serve, serve_tcp

__version__ = "0.1.0"

__all__ = [
    "BridgeError",
    "DriftConfig",
    "HandlerRegistry",
    "reference_backend",
    "serve",
    "serve_tcp",
]
