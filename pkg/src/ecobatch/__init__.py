"""Eco-trajectory batch generation and online batch selection for a signalized approach."""
__version__ = "0.1.0"
