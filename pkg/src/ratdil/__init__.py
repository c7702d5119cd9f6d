"""Numerical witness that a matrix inner function on a two-holed circular domain
has cone radius below one while scalar test functions reach it.

Modules, in pipeline order: domain, harmonic, zeros, testfn, jacobian, fay,
matinner, cone, cli.
"""

__version__ = "0.1.0"
