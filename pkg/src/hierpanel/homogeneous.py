"""Common-slope estimator with a hierarchical interactive factor structure.

The least-squares problem is solved by alternating two exact block updates:
slopes given per-industry factors (a pooled GLS-like normal equation), and
per-industry factors given slopes (principal components of each industry's
residual covariance).  :func:`fit_full` wraps this in the three-stage
procedure: over-fitted first pass, count selection, refit at the selected
counts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import solve_spd, sym_eig_top
from .panel import (
    FactorStructure,
    ModelConfig,
    PanelDataset,
    check_orthonormal,
    common_beta,
    validate,
)
from .selection import SelectionResult, VarianceShares, decompose, select_counts, variance_shares

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HomogeneousFit:
    beta: np.ndarray
    Fi_joint: tuple[np.ndarray, ...]
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool
    ranks: tuple[int, ...]
    factors: FactorStructure | None = None
    selection: SelectionResult | None = None
    shares: VarianceShares | None = None
    stage1: "HomogeneousFit | None" = field(default=None, repr=False)

    @property
    def max_objective_increase(self) -> float:
        """Largest step-to-step rise of the objective, over both stages."""
        worst = _max_rise(self.objective_trace)
        if self.stage1 is not None:
            worst = max(worst, self.stage1.max_objective_increase)
        return worst


def _max_rise(trace: Sequence[float]) -> float:
    if len(trace) < 2:
        return 0.0
    return float(np.max(np.diff(np.asarray(trace))))


def _time_major(data: PanelDataset, i: int) -> tuple[np.ndarray, np.ndarray]:
    """``X`` as ``(T, N_i * d_x)`` and ``Y`` as ``(T, N_i)``, cached on the dataset."""
    key = ("time_major", i)
    cache = data._blocks
    if key not in cache:
        X, Y = data.X_block(i), data.Y_block(i)
        Xt = np.ascontiguousarray(X.transpose(1, 0, 2).reshape(data.T, -1))
        cache[key] = (Xt, np.ascontiguousarray(Y.T))
    return cache[key]


def _normal_equations(data: PanelDataset, F: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray, float]:
    """Projected normal matrix, right-hand side, and the norm of the raw Gram."""
    T, d = data.T, data.d_x
    A = np.zeros((d, d))
    b = np.zeros(d)
    gram = 0.0
    # fixed industry order keeps the reduction deterministic
    for i in range(data.L):
        Xt, Yt = _time_major(data, i)
        Xf = Xt.reshape(-1, d)
        G = Xf.T @ Xf
        gram += float(np.trace(G))
        A += G
        b += Xf.T @ Yt.reshape(-1)
        Fi = F[i]
        if Fi.shape[1]:
            FX = (Fi.T @ Xt).reshape(-1, d)
            FY = (Fi.T @ Yt).reshape(-1)
            A -= FX.T @ FX / T
            b -= FX.T @ FY / T
    return A, b, gram


def beta_given_factors(data: PanelDataset, F: Sequence[np.ndarray]) -> np.ndarray:
    """Slope minimizing the objective for fixed per-industry factors.

    ``F[i]`` must be ``T x r_i`` with ``F'F / T = I`` (``r_i = 0`` allowed).
    Raises :class:`~hierpanel.linalg.SingularMatrixError` when the projected
    normal matrix is singular.
    """
    if len(F) != data.L:
        raise ValueError(f"need {data.L} factor matrices, got {len(F)}")
    F = [np.asarray(f, dtype=float).reshape(data.T, -1) for f in F]
    for f in F:
        check_orthonormal(f, data.T)
    A, b, gram = _normal_equations(data, F)
    return solve_spd(A, b, gram)


def industry_covariance(data: PanelDataset, i: int, beta) -> np.ndarray:
    E = data.Y_block(i) - data.X_block(i) @ np.asarray(beta, dtype=float)
    return E.T @ E / (data.N[i] * data.T)


def factors_given_beta(data: PanelDataset, beta, r: Sequence[int]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-industry principal-component factors of the residuals.

    Returns ``(F, V)``: ``F[i] = sqrt(T) * top r_i eigenvectors`` of the
    industry residual covariance and ``V[i]`` the matching eigenvalues.
    """
    if len(r) != data.L:
        raise ValueError(f"need {data.L} ranks, got {len(r)}")
    T = data.T
    Fs, Vs = [], []
    for i, ri in enumerate(r):
        if ri > T:
            raise ValueError(f"rank {ri} for industry {i} exceeds T={T}")
        pairs = sym_eig_top(industry_covariance(data, i, beta), int(ri))
        Fs.append(np.sqrt(T) * pairs.vectors)
        Vs.append(pairs.values)
    return Fs, Vs


def _objective(data: PanelDataset, beta: np.ndarray, F: Sequence[np.ndarray]) -> float:
    # exact summation keeps rounding far below the monotonicity slack
    T = data.T
    parts = []
    for i in range(data.L):
        E = data.Y_block(i) - data.X_block(i) @ beta
        if F[i].shape[1]:
            E = E - (E @ F[i]) @ F[i].T / T
        parts.append(math.fsum(np.square(E).ravel()))
    return math.fsum(parts)


def cap_ranks(data: PanelDataset, r: Sequence[int], d_max: int | None = None) -> tuple[int, ...]:
    """Clip ranks to what each industry's covariance can support."""
    caps = [min(n, data.T) if d_max is None else min(n, data.T, d_max) for n in data.N]
    return tuple(int(min(ri, c)) for ri, c in zip(r, caps))


def fit_alternating(data: PanelDataset, r: Sequence[int], config: ModelConfig | None = None,
                    beta_init=None) -> HomogeneousFit:
    """Alternate factor and slope updates until the slope stops moving.

    Starts from pooled OLS (all ranks zero) unless ``beta_init`` is given.
    Convergence is the sup-norm slope change falling below
    ``config.tol_beta``; hitting ``max_iter`` sets ``converged=False``.
    """
    config = config or ModelConfig()
    validate(data)
    r = tuple(int(k) for k in r)
    if len(r) != data.L:
        raise ValueError(f"need {data.L} ranks, got {len(r)}")
    if beta_init is None:
        beta = beta_given_factors(data, [np.empty((data.T, 0))] * data.L)
    else:
        beta = np.asarray(beta_init, dtype=float).reshape(data.d_x)

    trace = []
    F: list[np.ndarray] = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        F, _ = factors_given_beta(data, beta, r)
        A, b, gram = _normal_equations(data, F)
        new = solve_spd(A, b, gram)
        trace.append(_objective(data, new, F))
        step = float(np.max(np.abs(new - beta)))
        beta = new
        if step < config.tol_beta:
            converged = True
            break
    if not converged:
        log.warning("alternating fit stopped after %d iterations without converging", it)
    return HomogeneousFit(beta, tuple(F), tuple(trace), it, converged, r)


def stage1_ranks(data: PanelDataset, d_max: int) -> tuple[int, ...]:
    """Over-fitted per-industry ranks for the first estimation pass.

    Each rank is ``min(d_max, N_i // 2, T // 2)``.  Letting it reach
    ``min(N_i, T)`` would make the factors span every residual, leaving the
    slope unidentified.
    """
    return tuple(int(min(d_max, n // 2, data.T // 2)) for n in data.N)


def fit_full(data: PanelDataset, config: ModelConfig | None = None) -> HomogeneousFit:
    """Three-stage fit: over-fitted slopes, count selection, final refit.

    The returned fit carries the selected counts, the decomposed global and
    industry-specific factors with loadings, and residual variance shares.
    """
    config = config or ModelConfig()
    validate(data)
    d_sel = selection_d_max(data, config)

    first = fit_alternating(data, stage1_ranks(data, config.d_max), config)
    sel = select_counts(data, common_beta(data, first.beta), d_sel, config.omega_for(data))

    ranks = cap_ranks(data, [sel.lG_hat + k for k in sel.lS_hat])
    final = fit_alternating(data, ranks, config, beta_init=first.beta)
    betas = common_beta(data, final.beta)
    factors = decompose(data, betas, sel.lG_hat, sel.lS_hat)
    shares = variance_shares(data, betas, factors) if _has_variance(data, betas) else None
    return HomogeneousFit(final.beta, final.Fi_joint, final.objective_trace, final.iterations,
                          final.converged, final.ranks, factors, sel, shares, first)


def selection_d_max(data: PanelDataset, config: ModelConfig) -> int:
    # the ratio at d_max needs eigenvalue d_max + 1
    return max(0, min(config.d_max, data.T - 1))


def _has_variance(data: PanelDataset, betas) -> bool:
    return any(np.any(data.Y_block(i) - data.X_block(i) @ betas[i]) for i in range(data.L))
