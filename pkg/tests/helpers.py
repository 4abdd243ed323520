"""Random models and paths shared by the property tests."""
import numpy as np

from geoconnect.action import DiscretePath
from geoconnect.geometry import make_model
from geoconnect.spacetime import SpacetimeModel


def random_base(rng, d=None, beta_zero=None):
    d = d or int(rng.integers(1, 4))
    c = rng.normal(size=(d, 3))
    delta = "[" + ", ".join(
        f"{c[i, 0]:.5f} + {c[i, 1]:.5f} * sin(x{i + 1}) + {c[i, 2]:.5f} * x{(i + 1) % d + 1}" for i in range(d)
    ) + "]"
    if beta_zero is None:
        beta_zero = rng.random() < 0.5
    beta = "0" if beta_zero else f"{0.2 + abs(rng.normal()):.5f} + {abs(rng.normal()):.5f} * cos(x1)^2"
    metric = None
    if rng.random() < 0.6:
        metric = [["0"] * d for _ in range(d)]
        for i in range(d):
            metric[i][i] = f"{1 + abs(rng.normal()):.5f} + {0.3 * abs(rng.normal()):.5f} * sin(x{i + 1})^2"
        if d > 1:
            metric[0][1] = metric[1][0] = f"{0.2 * rng.normal():.5f} * cos(x1)"
    return make_model(d, delta, beta, metric)


def random_model(rng, perturbed=True):
    base = random_base(rng)
    n = int(rng.integers(1, 64)) if (perturbed or base.beta.is_zero()) else None
    return SpacetimeModel(base, n)


def random_path(rng, d, m=None, amplitude=0.5):
    m = m or int(rng.integers(16, 48))
    xp = rng.uniform(-1, 1, size=d)
    xq = rng.uniform(-1, 1, size=d)
    s = np.linspace(0.0, 1.0, m + 1)[:, None]
    bumps = sum(rng.normal(size=d) * np.sin((k + 1) * np.pi * s) / (k + 1) for k in range(3))
    return DiscretePath(xp + s * (xq - xp) + amplitude * bumps)
