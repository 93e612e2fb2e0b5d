"""Numerics for the periodic KPZ fixed point: exact multi-point distributions,
pinched-up limit laws, Monte Carlo oracles and a ring TASEP simulator."""
__version__ = "0.1.0"
