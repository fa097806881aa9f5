"""Moving-block bootstrap intervals for the slope coefficients.

Time blocks are resampled once per replicate and applied to every unit, so
cross-sectional dependence within a period is preserved.  Factor counts are
held at the values selected on the original data; factor matrices and
slopes are re-estimated on each bootstrap panel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .heterogeneous import HeterogeneousFit, fit_heterogeneous, fit_industry
from .homogeneous import HomogeneousFit, cap_ranks, fit_alternating, fit_full
from .panel import ModelConfig, PanelDataset, validate

log = logging.getLogger(__name__)

MAX_FAILURE_SHARE = 0.05


class BootstrapError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    point: np.ndarray
    replicate_betas: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    B: int
    block_length: int
    level: float
    mode: str
    failures: int
    time_indices: np.ndarray


def default_block_length(T: int) -> int:
    return max(1, math.floor(T ** (1.0 / 3.0) + 1e-12))


def mbb_time_indices(T: int, l0: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-based period indices of one moving-block bootstrap series.

    ``T // l0 + 1`` block starts are drawn uniformly from the first
    ``T - l0`` periods; the concatenated blocks are cut to length ``T``.
    """
    if l0 < 1 or l0 > T:
        raise ValueError(f"block length {l0} outside [1, {T}]")
    if T - l0 < 1:
        raise ValueError(f"block length {l0} leaves no admissible start with T={T}")
    k0 = T // l0 + 1
    starts = rng.integers(0, T - l0, size=k0)
    return (starts[:, None] + np.arange(l0)[None, :]).ravel()[:T]


def bootstrap_samples(data: PanelDataset, B: int, l0: int, seed=None) -> Iterator[tuple[np.ndarray, PanelDataset]]:
    """Yield ``(indices, panel)`` for ``B`` replicates, one sub-stream each."""
    for child in np.random.SeedSequence(seed).spawn(B):
        idx = mbb_time_indices(data.T, l0, np.random.default_rng(child))
        yield idx, data.take_periods(idx)


def order_statistic_bounds(B: int, level: float) -> tuple[int, int]:
    """One-based ranks ``ceil(level/2 * B)`` and ``ceil((1 - level/2) * B)``."""
    lo = max(1, math.ceil(level / 2 * B - 1e-9))
    hi = min(B, math.ceil((1 - level / 2) * B - 1e-9))
    return lo, hi


def percentile_interval(samples: np.ndarray, level: float) -> tuple[np.ndarray, np.ndarray]:
    srt = np.sort(samples, axis=0)
    lo, hi = order_statistic_bounds(srt.shape[0], level)
    return srt[lo - 1], srt[hi - 1]


def bootstrap_ci(data: PanelDataset, config: ModelConfig | None = None, mode: str = "homogeneous",
                 B: int = 399, level: float = 0.05, block_length: int | None = None,
                 seed=None, fit: HomogeneousFit | HeterogeneousFit | None = None) -> BootstrapResult:
    """Percentile intervals from ``B`` moving-block bootstrap refits.

    ``fit`` is the estimate on the original data; it is computed when not
    supplied.  In heterogeneous mode the replicate array is ``(B, L, d_x)``.
    More than 5% failed replicates raises :class:`BootstrapError`.
    """
    config = config or ModelConfig()
    if mode not in ("homogeneous", "heterogeneous"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if B < 1:
        raise ValueError("B must be at least 1")
    validate(data)
    if fit is None:
        fit = fit_full(data, config) if mode == "homogeneous" else fit_heterogeneous(data, config)
    sel = fit.selection
    ranks = cap_ranks(data, [sel.lG_hat + k for k in sel.lS_hat])
    l0 = default_block_length(data.T) if block_length is None else int(block_length)
    seed = config.seed if seed is None else seed

    reps, indices, failures = [], [], 0
    for idx, boot in bootstrap_samples(data, B, l0, seed):
        indices.append(idx)
        try:
            if mode == "homogeneous":
                reps.append(fit_alternating(boot, ranks, config).beta)
            else:
                reps.append(np.stack([fit_industry(boot.industry(i), ranks[i], config).beta
                                      for i in range(data.L)]))
        except np.linalg.LinAlgError as exc:
            failures += 1
            log.warning("bootstrap replicate failed: %s", exc)
    if failures > MAX_FAILURE_SHARE * B:
        raise BootstrapError(f"{failures} of {B} bootstrap replicates failed")

    samples = np.array(reps)
    lower, upper = percentile_interval(samples, level)
    point = fit.beta if mode == "homogeneous" else np.stack(fit.betas)
    return BootstrapResult(point, samples, lower, upper, B, l0, level, mode, failures, np.array(indices))
