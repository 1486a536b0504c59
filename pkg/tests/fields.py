"""Random smooth test fields: sums of chirped, boosted Gaussians."""

import numpy as np

from deltanls import WaveField


def gaussian_mixture(x, comps):
    out = np.zeros_like(x, dtype=complex)
    for amp, center, width, chirp, boost in comps:
        y = x - center
        out += amp * np.exp(-(y / width) ** 2 + 1j * chirp * y ** 2 + 1j * boost * x)
    return out


def random_components(rng, max_components=3):
    comps = []
    for _ in range(rng.integers(1, max_components + 1)):
        amp = rng.uniform(0.05, 1.5) * np.exp(2j * np.pi * rng.uniform())
        comps.append((amp, rng.uniform(-2, 2), rng.uniform(0.5, 2.0),
                      rng.uniform(-0.5, 0.5), rng.uniform(-2, 2)))
    return comps


def sample(grid, comps, lam=1.0, p=5.0):
    """Sample ``lam^{1/(p-1)} f(lam x)`` exactly (no interpolation)."""
    return WaveField(grid, lam ** (1.0 / (p - 1.0)) * gaussian_mixture(lam * grid.x, comps))
