"""Shared builders for small synthetic panels."""

import numpy as np

from hierpanel.panel import PanelDataset


def random_orthonormal(rng, T, r):
    """``T x r`` matrix with ``F'F / T = I``."""
    if r == 0:
        return np.empty((T, 0))
    q, _ = np.linalg.qr(rng.standard_normal((T, r)))
    return np.sqrt(T) * q


def random_panel(rng, L, N, T, d_x, noise=1.0, beta=None):
    """Panel ``y = X beta + noise`` with standard-normal regressors."""
    beta = rng.standard_normal(d_x) if beta is None else np.asarray(beta, dtype=float)
    Y, X = [], []
    for n in N:
        x = rng.standard_normal((n, T, d_x))
        X.append(x)
        Y.append(x @ beta + noise * rng.standard_normal((n, T)))
    return PanelDataset.from_blocks(Y, X), beta


def factor_panel(rng, N, T, beta, lG, lS, noise=0.0):
    """Panel with a known hierarchical factor structure.

    Returns ``(data, FG, FS, GG, GS)``; factors are raw normal draws.
    """
    beta = np.asarray(beta, dtype=float)
    FG = rng.standard_normal((T, lG))
    FS = [rng.standard_normal((T, k)) for k in lS]
    Y, X, GG, GS = [], [], [], []
    for n, fs in zip(N, FS):
        gg = rng.standard_normal((n, lG))
        gs = rng.standard_normal((n, fs.shape[1]))
        x = rng.standard_normal((n, T, beta.shape[0]))
        common = gg @ FG.T + gs @ fs.T
        x[:, :, 0] += 0.5 * common
        X.append(x)
        Y.append(x @ beta + common + noise * rng.standard_normal((n, T)))
        GG.append(gg)
        GS.append(gs)
    return PanelDataset.from_blocks(Y, X), FG, FS, GG, GS
