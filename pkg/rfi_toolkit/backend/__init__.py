"""
Numerical backend: operators, sampling, the iteration engine, measures, problems and diagnostics.
"""
