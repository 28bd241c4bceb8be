# Birkhoff PS Package
"""
Birkhoff and Lagrange pseudospectral discretizations for optimal control
"""

__version__ = "0.1.0"
