"""Small shared utilities for the test suite."""

import numpy as np


def random_psd(rng: np.random.Generator, n: int, jitter: float = 0.0) -> np.ndarray:
    """A random symmetric PSD matrix with eigenvalues of order 1."""
    A = rng.standard_normal((n, n))
    S = A @ A.T / n
    if jitter:
        S = S + jitter * np.eye(n)
    return (S + S.T) / 2.0


def random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    """A random symmetric (generally indefinite) matrix."""
    A = rng.standard_normal((n, n))
    return (A + A.T) / 2.0
