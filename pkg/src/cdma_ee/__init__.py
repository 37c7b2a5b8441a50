"""Energy-efficient power control and receiver design for multipath DS/CDMA."""

__version__ = "0.1.0"
