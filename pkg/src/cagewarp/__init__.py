"""Interactive cage-based geometry editing for volumetric radiance fields."""

__version__ = "0.1.0"

PROTOCOL_VERSION = 1
