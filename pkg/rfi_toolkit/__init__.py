# rfi_toolkit/__init__.py
"""
RFI Toolkit: random function iterations, their Markov operators and convergence diagnostics.
"""

__version__ = '1.0.0.dev0'
