"""Palm tree survey pipeline: aerial tile detection, street-view linking,
infestation timelines, and survey cost reporting.
"""

from .errors import (
    BackendError,
    DomainError,
    PersistenceError,
    ProtocolError,
    ProviderError,
)
from .geo import GeoBox, GeoPoint, MercatorPoint, PixelBox, TileId

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "DomainError",
    "GeoBox",
    "GeoPoint",
    "MercatorPoint",
    "PersistenceError",
    "PixelBox",
    "ProtocolError",
    "ProviderError",
    "TileId",
    "__version__",
]
