"""Reference datasets shared by the tests and the scripts in ``scripts/``."""

from __future__ import annotations

import numpy as np

from .dataset import GroupSpec, SyntheticSpec

# 12 statement-analysis groups, 179 indicators, 40 of them informative
GROUP_LAYOUT = (
    ("profitability", 40, 3),
    ("per_share", 21, 3),
    ("solvency", 18, 4),
    ("growth", 16, 4),
    ("operating", 14, 3),
    ("cash_flow", 12, 3),
    ("capital_structure", 12, 4),
    ("earnings_quality", 11, 3),
    ("governance", 10, 3),
    ("market_trading", 10, 4),
    ("risk", 8, 3),
    ("dividend", 7, 3),
)


def grouped_spec(seed: int = 0, n_samples: int = 500, factor_loading: float = 1.0,
                      feature_noise_sd: float = 0.6) -> SyntheticSpec:
    groups = tuple(GroupSpec(name, size, informative, factor_loading, feature_noise_sd)
                   for name, size, informative in GROUP_LAYOUT)
    coefs = tuple(1.0 if i % 2 == 0 else -1.0 for i in range(len(groups)))
    return SyntheticSpec(n_samples, groups, coefs, 0.0, seed)


def noisy_sinc(n: int, seed: int, noise_sd: float = 0.1):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-10.0, 10.0, n)
    return x[:, None], np.sinc(x / np.pi) + rng.normal(0.0, noise_sd, n)


def two_blobs(n: int, seed: int, gap: float = 4.0):
    """Balanced unit-variance 2-D blobs whose means differ by ``gap`` sd on axis 0."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, 2))
    X[:, 0] += gap * (y - 0.5)
    return X, y
