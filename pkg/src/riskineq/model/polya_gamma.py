"""Polya-Gamma PG(1, z) draws for logistic data augmentation."""

from __future__ import annotations

import numpy as np
from polyagamma import random_polyagamma


def pg_mean(z: np.ndarray) -> np.ndarray:
    """Exact mean of PG(1, z): tanh(z/2) / (2z), with the limit 1/4 at z = 0."""

    z = np.abs(np.asarray(z, dtype=float))
    small = z < 1e-6
    safe = np.where(small, 1.0, z)
    return np.where(small, 0.25 - z ** 2 / 48.0, np.tanh(safe / 2.0) / (2.0 * safe))


def sample_pg(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One exact PG(1, z_i) draw per entry of ``z``, consuming ``rng``."""

    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return np.zeros(0)
    return np.asarray(random_polyagamma(1.0, z, random_state=rng), dtype=float).reshape(z.shape)
