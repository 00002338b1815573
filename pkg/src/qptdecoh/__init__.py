"""Two-qubit process matrices under Markovian decoherence."""

__version__ = "0.1.0"
