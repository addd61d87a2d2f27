"""Energy-aware scheduling of interactive web browsing on simulated big.LITTLE phones."""

__version__ = "0.1.0"
