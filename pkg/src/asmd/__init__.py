"""Adaptive stochastic mirror descent for constrained non-smooth convex problems."""
