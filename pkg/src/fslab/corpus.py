"""Seeded test-function corpus for inequality calibration.

Three families over the similarity coordinate eta: shifted Gaussians,
polynomial-times-exponential profiles, and compactly supported smooth bumps.
Generation is deterministic in the seed; the same corpus backs calibration
and later checking.
"""

import numpy as np


def _gaussian(a, c, w):
    return lambda eta: a * np.exp(-((eta - c) / w) ** 2)


def _polyexp(a, p, w):
    return lambda eta: a * eta ** p * np.exp(-eta / w)


def _bump(a, c, w):
    def f(eta):
        t = (np.asarray(eta, dtype=float) - c) / w
        out = np.zeros_like(t)
        inside = np.abs(t) < 1.0
        out[inside] = a * np.exp(-1.0 / (1.0 - t[inside] ** 2))
        return out
    return f


def corpus_functions(n=200, seed=20240, wall_zero=False):
    """Deterministic list of (label, callable) test profiles.

    With wall_zero=True every profile carries an extra factor eta (wall
    condition for perturbation velocities).
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        kind = i % 3
        if kind == 0:
            a = rng.uniform(0.2, 2.0)
            c = rng.uniform(0.0, 3.0)
            w = rng.uniform(0.3, 2.0)
            f = _gaussian(a, c, w)
            label = f"gauss_{i}"
        elif kind == 1:
            a = rng.uniform(0.2, 2.0)
            p = int(rng.integers(1, 4))
            w = rng.uniform(0.5, 2.5)
            f = _polyexp(a, p, w)
            label = f"polyexp_{i}"
        else:
            a = rng.uniform(0.2, 2.0)
            c = rng.uniform(1.0, 5.0)
            w = rng.uniform(0.5, min(2.0, c))
            f = _bump(a, c, w)
            label = f"bump_{i}"
        if wall_zero:
            base = f
            f = (lambda g: (lambda eta: np.asarray(eta) * g(eta)))(base)
            label += "_wz"
        out.append((label, f))
    return out
