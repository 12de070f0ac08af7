"""Regime-aware synthetic scenarios and CVaR-constrained asset allocation."""

__version__ = "0.1.0"
