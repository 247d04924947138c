"""Shared test utilities."""
import numpy as np


def random_points(space, m, rng, frac=0.8):
    """Admissible points with coordinate norm below ``frac`` times the bound."""
    bound = 1.0 if space.k == 0 else space.rho
    x = rng.normal(size=(m, space.n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * (frac * bound * rng.random(m) ** (1 / space.n))[:, None]
