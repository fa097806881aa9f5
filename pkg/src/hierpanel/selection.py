"""Two-step selection of global and industry-specific factor counts.

Step one reads the number of global factors off the pooled residual
covariance; step two projects the global factors out and reads each
industry's count off its own covariance.  Both steps use the thresholded
eigenvalue-ratio score with a mock eigenvalue of 1 at position zero, so
zero factors is a possible answer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import sym_eig_top
from .panel import FactorStructure, PanelDataset, check_orthonormal, residual_blocks

ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class SelectionResult:
    lG_hat: int
    lS_hat: tuple[int, ...]
    eigs_global: np.ndarray
    eigs_specific: tuple[np.ndarray, ...]
    omega: float


@dataclass(frozen=True)
class VarianceShares:
    global_share: float
    specific_share: tuple[float, ...]
    remainder: float

    @property
    def total(self) -> float:
        return self.global_share + sum(self.specific_share) + self.remainder


def ratio_scores(eigenvalues: np.ndarray, d_max: int, omega: float) -> np.ndarray:
    """Score for each candidate count ``0..d_max``.

    ``eigenvalues`` must hold at least ``d_max + 1`` values in descending
    order.  Candidates whose eigenvalue falls below ``omega`` score exactly 1.
    """
    lam = np.concatenate([[1.0], np.asarray(eigenvalues, dtype=float)[: d_max + 1]])
    if lam.shape[0] < d_max + 2:
        raise ValueError(f"need {d_max + 1} eigenvalues, got {lam.shape[0] - 1}")
    scores = np.ones(d_max + 1)
    head = lam[: d_max + 1]
    above = head >= omega
    scores[above] = lam[1:][above] / head[above]
    return scores


def _select(S: np.ndarray, d_max: int, omega: float) -> tuple[int, np.ndarray]:
    T = S.shape[0]
    if d_max + 1 > T:
        raise ValueError(f"d_max + 1 = {d_max + 1} exceeds T = {T}")
    eigs = sym_eig_top(S).values
    scores = ratio_scores(eigs, d_max, omega)
    # argmin returns the first minimizer, i.e. the smallest count on ties
    return int(np.argmin(scores)), eigs


def sigma_global(data: PanelDataset, beta_per_industry) -> np.ndarray:
    """Pooled ``T x T`` residual covariance over all units."""
    T = data.T
    S = np.zeros((T, T))
    for E in residual_blocks(data, beta_per_industry):
        S += E.T @ E
    return S / (data.n_units * T)


def select_global(SigmaG: np.ndarray, d_max: int, omega: float) -> tuple[int, np.ndarray]:
    """Selected global count and the full descending spectrum of ``SigmaG``."""
    return _select(np.asarray(SigmaG, dtype=float), d_max, omega)


def _top_factors(S: np.ndarray, k: int) -> np.ndarray:
    T = S.shape[0]
    return np.sqrt(T) * sym_eig_top(S, k).vectors


def extract_global(SigmaG: np.ndarray, lG: int) -> np.ndarray:
    """``sqrt(T)`` times the leading ``lG`` eigenvectors of ``SigmaG``."""
    return _top_factors(np.asarray(SigmaG, dtype=float), lG)


def _annihilate(FG: np.ndarray, A: np.ndarray) -> np.ndarray:
    # M_FG A for orthonormal (sqrt(T)-scaled) FG
    T = FG.shape[0]
    return A - FG @ (FG.T @ A) / T


def sigma_specific(data: PanelDataset, beta_per_industry, FG_hat: np.ndarray) -> list[np.ndarray]:
    """Per-industry covariances with the global factors projected out."""
    T = data.T
    FG_hat = np.asarray(FG_hat, dtype=float).reshape(T, -1)
    check_orthonormal(FG_hat, T)
    out = []
    for i, E in enumerate(residual_blocks(data, beta_per_industry)):
        ME = _annihilate(FG_hat, E.T)
        S = ME @ ME.T / (data.N[i] * T)
        out.append(0.5 * (S + S.T))
    return out


def select_specific(sigmas: Sequence[np.ndarray], d_max: int, omega: float) -> tuple[tuple[int, ...], tuple[np.ndarray, ...]]:
    """Per-industry counts.

    The joint criterion is a sum of terms that each depend on one industry's
    count only, so it is minimized industry by industry.
    """
    counts, eigs = [], []
    for S in sigmas:
        k, e = _select(np.asarray(S, dtype=float), d_max, omega)
        counts.append(k)
        eigs.append(e)
    return tuple(counts), tuple(eigs)


def extract_specific(sigma_i: np.ndarray, lS: int, FG_hat: np.ndarray) -> np.ndarray:
    """Leading ``lS`` industry factors, orthogonal to ``FG_hat`` by construction.

    The eigenproblem is solved inside the orthogonal complement of the global
    factors, so columns belonging to zero eigenvalues cannot drift back into
    the global span.
    """
    T = sigma_i.shape[0]
    FG_hat = np.asarray(FG_hat, dtype=float).reshape(T, -1)
    lG = FG_hat.shape[1]
    if lS == 0:
        return np.empty((T, 0))
    if lS > T - lG:
        raise ValueError(f"cannot extract {lS} factors orthogonal to {lG} global factors with T={T}")
    if lG == 0:
        return _top_factors(sigma_i, lS)
    q, _ = np.linalg.qr(FG_hat, mode="complete")
    perp = q[:, lG:]
    small = perp.T @ sigma_i @ perp
    vecs = perp @ sym_eig_top(small, lS).vectors
    # re-normalize signs in the original coordinates
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(lS)])
    signs[signs == 0] = 1.0
    return np.sqrt(T) * vecs * signs


def extract_loadings(data: PanelDataset, beta_per_industry, FG_hat: np.ndarray,
                     FS_hat: Sequence[np.ndarray]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Loadings by projecting residuals on the (scaled) factors."""
    T = data.T
    FG_hat = np.asarray(FG_hat, dtype=float).reshape(T, -1)
    if len(FS_hat) != data.L:
        raise ValueError(f"need {data.L} specific factor matrices, got {len(FS_hat)}")
    GG, GS = [], []
    for i, E in enumerate(residual_blocks(data, beta_per_industry)):
        FS = np.asarray(FS_hat[i], dtype=float).reshape(T, -1)
        GG.append(E @ FG_hat / T)
        GS.append(_annihilate(FG_hat, E.T).T @ FS / T)
    return GG, GS


def select_counts(data: PanelDataset, beta_per_industry, d_max: int, omega: float) -> SelectionResult:
    """Run both selection steps from residuals at the given slopes."""
    SG = sigma_global(data, beta_per_industry)
    lG, eigs_g = select_global(SG, d_max, omega)
    FG = extract_global(SG, lG)
    lS, eigs_s = select_specific(sigma_specific(data, beta_per_industry, FG), d_max, omega)
    return SelectionResult(lG, lS, eigs_g, eigs_s, omega)


def decompose(data: PanelDataset, beta_per_industry, lG: int, lS: Sequence[int]) -> FactorStructure:
    """Global and specific factors plus loadings for fixed counts."""
    SG = sigma_global(data, beta_per_industry)
    FG = extract_global(SG, lG)
    sigmas = sigma_specific(data, beta_per_industry, FG)
    FS = [extract_specific(S, k, FG) for S, k in zip(sigmas, lS)]
    GG, GS = extract_loadings(data, beta_per_industry, FG, FS)
    return FactorStructure(FG, tuple(FS), tuple(GG), tuple(GS))


def variance_shares(data: PanelDataset, beta_per_industry, factors: FactorStructure) -> VarianceShares:
    """Split residual energy into global, per-industry and leftover parts.

    Uses orthogonal projections: the global part is the energy of ``P_FG e``,
    industry ``i``'s part the energy of ``P_FSi M_FG e``.
    """
    T = data.T
    FG = factors.FG
    total = 0.0
    g = 0.0
    spec = []
    for i, E in enumerate(residual_blocks(data, beta_per_industry)):
        total += float(np.sum(E * E))
        pg = E @ FG
        g += float(np.sum(pg * pg)) / T
        ME = _annihilate(FG, E.T)
        ps = ME.T @ factors.FS[i]
        spec.append(float(np.sum(ps * ps)) / T)
    if not total > 0:
        raise ValueError("residuals have zero total variance")
    g_share = min(max(g / total, 0.0), 1.0)
    s_shares = tuple(min(max(s / total, 0.0), 1.0) for s in spec)
    remainder = 1.0 - g_share - sum(s_shares)
    return VarianceShares(g_share, s_shares, min(max(remainder, 0.0), 1.0))
