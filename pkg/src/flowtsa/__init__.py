"""Flow feature extraction from single flow time series (SFTS)."""

__version__ = "0.1.0"
