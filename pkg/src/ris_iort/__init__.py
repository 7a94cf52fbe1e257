"""Seed-reproducible simulator and optimization suite for RIS-aided IoRT networks."""

__version__ = "0.1.0"
