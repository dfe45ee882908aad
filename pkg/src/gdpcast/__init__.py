"""Univariate quarterly forecasting: SARIMA baseline versus a two-layer LSTM."""

__version__ = "0.1.0"
