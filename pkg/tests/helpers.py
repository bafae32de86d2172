"""Shared builders for the test suite."""
import numpy as np

from maxsheet.initial_data import angle_data


def random_smooth_data(seed, window=(-8.0, 8.0)):
    """Trigonometric tangent angle and normal speed with random coefficients."""
    rng = np.random.default_rng(seed)
    n = 3
    scale = 1.2 if seed % 2 else 3.0
    amp = rng.uniform(-scale, scale, n) / np.arange(1, n + 1)
    freq = rng.uniform(0.3, 1.5) * np.arange(1, n + 1)
    phase = rng.uniform(0, 2 * np.pi, n)
    b = rng.uniform(-0.6, 0.6)
    w = rng.uniform(0.2, 1.5)
    psi = rng.uniform(0, 2 * np.pi)

    def theta(s):
        s = np.asarray(s, dtype=float)
        return np.sum(amp * np.sin(freq * s[..., None] + phase), axis=-1)

    def dtheta(s):
        s = np.asarray(s, dtype=float)
        return np.sum(amp * freq * np.cos(freq * s[..., None] + phase), axis=-1)

    def mu(s):
        return b * np.sin(w * np.asarray(s, dtype=float) + psi)

    def dmu(s):
        return b * w * np.cos(w * np.asarray(s, dtype=float) + psi)

    return angle_data(theta, dtheta, window, mu=mu, dmu=dmu, name=f"random{seed}")
