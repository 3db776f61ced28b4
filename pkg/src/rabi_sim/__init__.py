"""Conditional all-optical Rabi interaction simulator."""
