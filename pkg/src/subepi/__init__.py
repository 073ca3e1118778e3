"""Sub-epidemic and baseline forecasting of weekly wastewater viral activity."""

__version__ = "0.1.0"
