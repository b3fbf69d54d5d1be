"""romforge: snapshot generation, POD/POD-Galerkin and autoencoder ROMs."""

__version__ = "0.1.0"
