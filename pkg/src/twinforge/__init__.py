"""Desk-scale physics-based data-driven reduced-order modeling for oven cooking."""

__version__ = "0.1.0"
