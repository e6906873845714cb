"""Simulation toolkit for decoherence-driven event chains and causal models."""

__version__ = "0.1.0"
