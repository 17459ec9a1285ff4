"""Lattice Markov-chain approximations of jump processes.

The package builds conductance matrices on (1/n)Z^d from jump kernels or
Levy-measure fields, simulates the resulting chains exactly, evaluates their
discrete Dirichlet forms and semigroups, and measures how close they are to
their continuum limits.
"""
__version__ = "0.1.0"
