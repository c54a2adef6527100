"""
FOSGM core package
Online geometric-median function-on-scalar regression
"""

__version__ = "1.0.0"
