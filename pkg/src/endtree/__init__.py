"""Ends of finitely presented infinite graphs and tree-decompositions
of finite adhesion."""

__version__ = "0.1.0"
