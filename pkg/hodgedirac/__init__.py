"""Discrete Hodge-Dirac problems on 2D simplicial meshes with Whitney forms."""

__version__ = "0.1.0"
