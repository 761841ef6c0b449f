"""torusbloch - Sobolev spaces on tori, compactness certificates and Bloch bands."""

__version__ = "0.1.0"
