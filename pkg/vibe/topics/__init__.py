"""Numerical core of the disentangled neural topic model.

Everything here is plain numpy with hand-derived gradients; no I/O.
"""
