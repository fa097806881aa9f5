"""Simulation design for the hierarchical factor panel.

Units are stacked industry-major into one cross-section of size ``n_units``.
Regressor innovations and errors are cross-sectionally correlated with
covariance ``a**|m-n|`` and follow AR(1) recursions in time.  The first
regressor is shifted by the absolute values of both factor components so
that it is correlated with the unobserved structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .panel import Labels, PanelDataset

CHOLESKY_MAX_UNITS = 8000


@dataclass(frozen=True)
class DgpSpec:
    L: int
    T: int
    lG: int = 2
    lS_choices: tuple[int, ...] = (0, 1, 2, 3, 4)
    beta0: tuple[float, ...] = (1.0, 1.0)
    rho_v: float = 0.5
    rho_e: float = 0.3
    a_v: float = 0.3
    a_e: float = 0.2
    Ni_exponents: tuple[float, float] = (0.85, 1.15)
    seed: int | None = None
    # multipliers on the regressor / error innovations; 0 switches a source off
    v_scale: float = 1.0
    e_scale: float = 1.0
    burn_in: int = 50
    max_units: int = 50_000
    cov_method: str = "recursion"  # or "cholesky"

    def __post_init__(self) -> None:
        if self.L < 1 or self.T < 2:
            raise ValueError("need L >= 1 and T >= 2")
        for name in ("rho_v", "rho_e"):
            if not abs(getattr(self, name)) < 1:
                raise ValueError(f"|{name}| must be below 1")
        for name in ("a_v", "a_e"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.lG < 0 or not self.lS_choices or min(self.lS_choices) < 0:
            raise ValueError("factor counts must be non-negative")
        if len(self.beta0) < 1:
            raise ValueError("beta0 needs at least one coefficient")
        if self.cov_method not in ("recursion", "cholesky"):
            raise ValueError(f"unknown cov_method {self.cov_method!r}")

    @property
    def d_x(self) -> int:
        return len(self.beta0)

    def size_bounds(self) -> tuple[int, int]:
        lo, hi = self.Ni_exponents
        return math.floor(self.L ** lo), math.floor(self.L ** hi)


@dataclass(frozen=True, eq=False)
class DgpTruth:
    """Ground truth behind a simulated panel.

    Factors and loadings are the raw draws (not normalized); only their
    column spans matter for comparisons with estimates.
    """

    beta0: np.ndarray
    FG: np.ndarray
    FS: tuple[np.ndarray, ...]
    GammaG: tuple[np.ndarray, ...]
    GammaS: tuple[np.ndarray, ...]
    errors: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def lG(self) -> int:
        return int(self.FG.shape[1])

    @property
    def lS(self) -> tuple[int, ...]:
        return tuple(int(f.shape[1]) for f in self.FS)

    def common_component(self, i: int) -> np.ndarray:
        return self.GammaG[i] @ self.FG.T + self.GammaS[i] @ self.FS[i].T


def draw_sizes(spec: DgpSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Countries per industry, uniform on ``[floor(L^a), floor(L^b)]``."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    lo, hi = spec.size_bounds()
    return rng.integers(lo, hi + 1, size=spec.L)


def kms_draws(rng: np.random.Generator, a: float, n: int, size: int,
              method: str = "recursion") -> np.ndarray:
    """``size`` independent draws of an ``n``-vector with covariance ``a**|m-n|``.

    Both methods consume the same standard normals; ``recursion`` applies the
    closed-form bidiagonal Cholesky factor of this matrix, ``cholesky``
    factors it densely.
    """
    u = rng.standard_normal((size, n))
    if method == "cholesky":
        if n > CHOLESKY_MAX_UNITS:
            raise MemoryError(f"dense {n}x{n} covariance exceeds the {CHOLESKY_MAX_UNITS}-unit cap")
        idx = np.arange(n)
        S = a ** np.abs(idx[:, None] - idx[None, :])
        return u @ np.linalg.cholesky(S).T
    c = math.sqrt(1.0 - a * a)
    u[:, 0] /= c
    return lfilter([c], [1.0, -a], u, axis=1)


def _ar_series(rng: np.random.Generator, rho: float, a: float, n: int, T: int, width: int,
               burn_in: int, method: str) -> np.ndarray:
    """``(T, width, n)`` stationary AR(1) in time with ``a**|m-n|`` innovations."""
    total = T + burn_in
    eta = kms_draws(rng, a, n, (total + 1) * width, method).reshape(total + 1, width, n)
    out = np.empty((total, width, n))
    prev = eta[0] / math.sqrt(1.0 - rho * rho)
    for t in range(total):
        prev = rho * prev + eta[t + 1]
        out[t] = prev
    return out[burn_in:]


def generate(spec: DgpSpec) -> tuple[PanelDataset, DgpTruth]:
    """Simulate one panel and return it with its ground truth."""
    rng = np.random.default_rng(spec.seed)
    L, T, d = spec.L, spec.T, spec.d_x
    N = draw_sizes(spec, rng)
    n_units = int(N.sum())
    if n_units > spec.max_units:
        raise MemoryError(f"{n_units} units exceed the configured cap of {spec.max_units}")
    lS = rng.choice(np.asarray(spec.lS_choices, dtype=int), size=L)

    FG = 0.5 + rng.standard_normal((T, spec.lG))
    FS = [rng.standard_normal((T, int(k))) for k in lS]
    GG = [rng.standard_normal((n, spec.lG)) for n in N]
    GS = [0.3 + rng.standard_normal((n, int(k))) for n, k in zip(N, lS)]

    V = spec.v_scale * _ar_series(rng, spec.rho_v, spec.a_v, n_units, T, d, spec.burn_in, spec.cov_method)
    E = spec.e_scale * _ar_series(rng, spec.rho_e, spec.a_e, n_units, T, 1, spec.burn_in, spec.cov_method)[:, 0, :]

    beta0 = np.asarray(spec.beta0, dtype=float)
    offsets = np.concatenate([[0], np.cumsum(N)])
    Ys, Xs, errs = [], [], []
    for i in range(L):
        sl = slice(offsets[i], offsets[i + 1])
        glob = GG[i] @ FG.T  # (N_i, T)
        spec_part = GS[i] @ FS[i].T
        X = np.transpose(V[:, :, sl], (2, 0, 1)).copy()  # (N_i, T, d)
        X[:, :, 0] += np.abs(glob) + np.abs(spec_part)
        err = E[:, sl].T
        Ys.append(X @ beta0 + glob + spec_part + err)
        Xs.append(X)
        errs.append(err)

    labels = Labels(
        industries=tuple(f"I{i + 1:03d}" for i in range(L)),
        countries=tuple(tuple(f"C{j + 1:04d}" for j in range(n)) for n in N),
        variables=tuple(f"x{k + 1}" for k in range(d)),
        periods=tuple(range(1, T + 1)),
    )
    data = PanelDataset.from_blocks(Ys, Xs, labels)
    truth = DgpTruth(beta0, FG, tuple(FS), tuple(GG), tuple(GS), tuple(errs))
    return data, truth


def with_seed(spec: DgpSpec, seed: int) -> DgpSpec:
    return replace(spec, seed=seed)
