"""Interpretable RUL prediction: ingestion, feature selection, models, explainers and diagnostics."""

__version__ = "0.1.0"
