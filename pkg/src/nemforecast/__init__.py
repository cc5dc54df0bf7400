"""Multi-horizon electricity price forecasting benchmark for the Australian NEM."""

__version__ = "0.1.0"
