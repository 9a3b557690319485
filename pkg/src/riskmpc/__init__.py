"""Risk-averse model predictive operation control of islanded microgrids."""

__version__ = "0.1.0"
