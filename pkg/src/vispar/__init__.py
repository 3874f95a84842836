"""Solver and regularity laboratory for u_t = |Du|^gamma F(D^2 u) + f."""

__version__ = "0.1.0"
