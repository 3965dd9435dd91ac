"""Entropic OT aggregation loss for prompt-guided generation."""
