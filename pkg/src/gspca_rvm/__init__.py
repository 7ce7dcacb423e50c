"""Grouped sparse-PCA feature screening + relevance vector machine classifier
for financial distress prediction."""

__version__ = "0.1.0"
