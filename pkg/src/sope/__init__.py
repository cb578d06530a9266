"""Spatial order-preserving encrypted index.

Per-axis mutable order-preserving encodings kept in client-driven B+-trees,
an R-tree over the encoded points, and the spatial queries built on top.
"""

from .client import Client, ContinuousNNError, NNResultSegment, ServerError
from .geometry import DimensionMismatch, Point, Rect, Segment
from .server import LoopbackTransport, Store, TcpServer, TcpTransport

__all__ = [
    "Client", "ContinuousNNError", "DimensionMismatch", "LoopbackTransport", "NNResultSegment",
    "Point", "Rect", "Segment", "ServerError", "Store", "TcpServer", "TcpTransport",
]
__version__ = "0.1.0"
