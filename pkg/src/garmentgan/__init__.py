"""Garment attribute editing: data, networks, two-stage training, metrics, CLI, service."""

from garmentgan.backend import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
