"""Industry-specific slopes with the same hierarchical factor decomposition.

Each industry is a two-dimensional interactive-effects panel, fitted on its
own with the alternating least-squares scheme.  The global/specific split is
then read off residuals built from each industry's own slope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .homogeneous import HomogeneousFit, cap_ranks, fit_alternating, selection_d_max, stage1_ranks
from .panel import FactorStructure, ModelConfig, PanelDataset, validate
from .selection import SelectionResult, VarianceShares, decompose, select_counts, variance_shares


@dataclass(frozen=True, eq=False)
class HeterogeneousFit:
    betas: tuple[np.ndarray, ...]
    factors: FactorStructure
    selection: SelectionResult
    per_industry_traces: tuple[tuple[float, ...], ...]
    industry_fits: tuple[HomogeneousFit, ...]
    stage1_fits: tuple[HomogeneousFit, ...]
    shares: VarianceShares | None = None

    @property
    def converged(self) -> bool:
        return all(f.converged for f in self.industry_fits)

    @property
    def max_objective_increase(self) -> float:
        return max(f.max_objective_increase for f in (*self.industry_fits, *self.stage1_fits))


def fit_industry(data_i: PanelDataset, r_i: int, config: ModelConfig | None = None,
                 beta_init=None) -> HomogeneousFit:
    """Least-squares interactive-effects fit of a single-industry panel."""
    if data_i.L != 1:
        raise ValueError(f"expected a single-industry panel, got L={data_i.L}")
    return fit_alternating(data_i, [int(r_i)], config, beta_init)


def fit_heterogeneous(data: PanelDataset, config: ModelConfig | None = None) -> HeterogeneousFit:
    """Per-industry slopes, count selection, per-industry refit, decomposition."""
    config = config or ModelConfig()
    validate(data)
    subs = [data.industry(i) for i in range(data.L)]

    first_ranks = stage1_ranks(data, config.d_max)
    first = [fit_industry(s, r, config) for s, r in zip(subs, first_ranks)]
    sel = select_counts(data, [f.beta for f in first], selection_d_max(data, config),
                        config.omega_for(data))

    ranks = cap_ranks(data, [sel.lG_hat + k for k in sel.lS_hat])
    final = [fit_industry(s, r, config, f.beta) for s, r, f in zip(subs, ranks, first)]
    betas = [f.beta for f in final]
    factors = decompose(data, betas, sel.lG_hat, sel.lS_hat)
    has_var = any(np.any(data.Y_block(i) - data.X_block(i) @ betas[i]) for i in range(data.L))
    shares = variance_shares(data, betas, factors) if has_var else None
    return HeterogeneousFit(
        betas=tuple(betas),
        factors=factors,
        selection=sel,
        per_industry_traces=tuple(f.objective_trace for f in final),
        industry_fits=tuple(final),
        stage1_fits=tuple(first),
        shares=shares,
    )
