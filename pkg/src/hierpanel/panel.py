"""Ragged three-index panels and the primitives every estimator shares.

A panel has ``L`` industries; industry ``i`` holds ``N[i]`` countries, each
observed over the same ``T`` periods with one outcome and ``d_x`` regressors.
Storage is one dense block per industry: ``Y[i]`` is ``(N_i, T)`` and ``X[i]``
is ``(N_i, T, d_x)``.  ``y[i][j]`` / ``x[i][j]`` index single units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class Violation:
    kind: str  # "dimension", "non-finite", "empty", "size"
    i: int | None = None
    j: int | None = None
    t: int | None = None
    message: str = ""

    def __str__(self) -> str:
        where = ",".join(str(v) for v in (self.i, self.j, self.t) if v is not None)
        return f"{self.kind} at ({where}): {self.message}" if where else f"{self.kind}: {self.message}"


class PanelValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "\n  ".join(str(v) for v in violations[:50])
        more = f"\n  ... and {len(violations) - 50} more" if len(violations) > 50 else ""
        super().__init__(f"{len(violations)} panel violation(s):\n  {lines}{more}")


@dataclass(frozen=True)
class Labels:
    industries: tuple[str, ...] = ()
    countries: tuple[tuple[str, ...], ...] = ()
    variables: tuple[str, ...] = ()
    periods: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Ragged panel of outcomes ``y`` and regressors ``X``.

    ``y[i]`` is either an ``(N_i, T)`` array or a sequence of per-country
    series; ``X[i]`` likewise ``(N_i, T, d_x)``.  Construction does not
    validate; call :func:`validate` (the estimators do so themselves).
    """

    y: tuple
    X: tuple
    T: int
    labels: Labels | None = None
    _blocks: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "y", tuple(_as_industry(b, 1) for b in self.y))
        object.__setattr__(self, "X", tuple(_as_industry(b, 2) for b in self.X))

    @classmethod
    def from_blocks(cls, Y: Sequence[np.ndarray], X: Sequence[np.ndarray],
                    labels: Labels | None = None) -> "PanelDataset":
        Y = [np.ascontiguousarray(b, dtype=float) for b in Y]
        X = [np.ascontiguousarray(b, dtype=float) for b in X]
        if not Y:
            raise PanelValidationError([Violation("size", message="no industries")])
        return cls(tuple(Y), tuple(X), int(Y[0].shape[1]), labels)

    @property
    def L(self) -> int:
        return len(self.y)

    @property
    def N(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.y)

    @property
    def n_units(self) -> int:
        return sum(self.N)

    @property
    def d_x(self) -> int:
        for block in self.X:
            for x in block:
                x = np.asarray(x)
                return int(x.shape[1]) if x.ndim == 2 else 0
        return 0

    @property
    def omega(self) -> float:
        """Default eigenvalue threshold ``1 / log(max(n_units, T))``."""
        return 1.0 / math.log(max(self.n_units, self.T))

    def Y_block(self, i: int) -> np.ndarray:
        return self._block("y", i)

    def X_block(self, i: int) -> np.ndarray:
        return self._block("X", i)

    def _block(self, name: str, i: int) -> np.ndarray:
        key = (name, i)
        if key not in self._blocks:
            src = getattr(self, name)[i]
            self._blocks[key] = src if isinstance(src, np.ndarray) else np.stack(src)
        return self._blocks[key]

    def industry(self, i: int) -> "PanelDataset":
        """Single-industry panel (``L = 1``) holding industry ``i``."""
        labels = None
        if self.labels is not None and self.labels.industries:
            labels = Labels((self.labels.industries[i],), (self.labels.countries[i],),
                            self.labels.variables, self.labels.periods)
        return PanelDataset.from_blocks([self.Y_block(i)], [self.X_block(i)], labels)

    def take_periods(self, idx: np.ndarray) -> "PanelDataset":
        """Panel whose period ``t`` carries original period ``idx[t]`` for every unit."""
        idx = np.asarray(idx, dtype=int)
        Y = [self.Y_block(i)[:, idx] for i in range(self.L)]
        X = [self.X_block(i)[:, idx, :] for i in range(self.L)]
        return PanelDataset.from_blocks(Y, X, self.labels)


def _as_industry(block, ndim_unit: int):
    # keep a dense array when possible, otherwise a tuple of per-unit arrays
    if isinstance(block, np.ndarray) and block.ndim == ndim_unit + 1:
        return block.astype(float, copy=False)
    units = tuple(np.asarray(u, dtype=float) for u in block)
    shapes = {u.shape for u in units}
    if len(shapes) == 1 and len(units[0].shape) == ndim_unit:
        return np.stack(units)
    return units


@dataclass(frozen=True, eq=False)
class FactorStructure:
    """Global and industry-specific factors with their loadings.

    Factors are normalized so that ``F'F / T`` is the identity.
    """

    FG: np.ndarray
    FS: tuple[np.ndarray, ...]
    GammaG: tuple[np.ndarray, ...]
    GammaS: tuple[np.ndarray, ...]

    @property
    def lG(self) -> int:
        return int(self.FG.shape[1])

    @property
    def lS(self) -> tuple[int, ...]:
        return tuple(int(f.shape[1]) for f in self.FS)

    @property
    def counts(self) -> tuple[int, ...]:
        return (self.lG, *self.lS)

    def common_component(self, i: int) -> np.ndarray:
        """``(N_i, T)`` array of ``gamma_G' f_G + gamma_S' f_S`` for industry ``i``."""
        return self.GammaG[i] @ self.FG.T + self.GammaS[i] @ self.FS[i].T


@dataclass(frozen=True)
class ModelConfig:
    d_max: int = 20
    tol_beta: float = 1e-8
    max_iter: int = 1000
    omega_override: float | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.d_max < 1:
            raise ValueError("d_max must be at least 1")
        if not self.tol_beta > 0:
            raise ValueError("tol_beta must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def omega_for(self, data: PanelDataset) -> float:
        return data.omega if self.omega_override is None else float(self.omega_override)


def find_violations(data: PanelDataset) -> list[Violation]:
    out: list[Violation] = []
    T = data.T
    if data.L < 1:
        out.append(Violation("size", message="panel has no industries"))
    if T < 2:
        out.append(Violation("size", message=f"T={T}, need at least 2 periods"))
    if len(data.X) != data.L:
        out.append(Violation("dimension", message=f"{data.L} outcome blocks but {len(data.X)} regressor blocks"))
        return out
    d_x = data.d_x
    if d_x < 1:
        out.append(Violation("size", message="no regressors"))
    for i in range(data.L):
        ys, xs = data.y[i], data.X[i]
        if len(ys) == 0:
            out.append(Violation("empty", i, message=f"industry {i} has no countries"))
            continue
        if len(xs) != len(ys):
            out.append(Violation("dimension", i, message=f"{len(ys)} outcome series but {len(xs)} regressor blocks"))
            continue
        for j in range(len(ys)):
            yij, xij = np.asarray(ys[j]), np.asarray(xs[j])
            ok = True
            if yij.shape != (T,):
                out.append(Violation("dimension", i, j, message=f"y has shape {yij.shape}, expected ({T},)"))
                ok = False
            if xij.ndim != 2 or xij.shape != (T, d_x):
                out.append(Violation("dimension", i, j, message=f"X has shape {xij.shape}, expected ({T}, {d_x})"))
                ok = False
            if not ok:
                continue
            for t in np.flatnonzero(~np.isfinite(yij)):
                out.append(Violation("non-finite", i, j, int(t), "y is not finite"))
            for t in np.flatnonzero(~np.all(np.isfinite(xij), axis=1)):
                out.append(Violation("non-finite", i, j, int(t), "X row is not finite"))
    return out


def validate(data: PanelDataset) -> None:
    """Raise :class:`PanelValidationError` listing every violation, if any."""
    violations = find_violations(data)
    if violations:
        raise PanelValidationError(violations)


def _betas(data: PanelDataset, beta_per_industry) -> list[np.ndarray]:
    betas = [np.asarray(b, dtype=float).reshape(-1) for b in beta_per_industry]
    if len(betas) != data.L:
        raise ValueError(f"need {data.L} slope vectors, got {len(betas)}")
    for b in betas:
        if b.shape != (data.d_x,):
            raise ValueError(f"slope vector has length {b.shape[0]}, expected {data.d_x}")
    return betas


def common_beta(data: PanelDataset, beta) -> list[np.ndarray]:
    """``L`` copies of one slope vector."""
    return [np.asarray(beta, dtype=float).reshape(-1)] * data.L


def residual_blocks(data: PanelDataset, beta_per_industry) -> list[np.ndarray]:
    """Per-industry ``(N_i, T)`` arrays of ``y - X beta_i``."""
    betas = _betas(data, beta_per_industry)
    return [data.Y_block(i) - data.X_block(i) @ betas[i] for i in range(data.L)]


def residuals(data: PanelDataset, beta_per_industry) -> list[list[np.ndarray]]:
    """Ragged residual series ``e[i][j]`` of length ``T``."""
    return [list(E) for E in residual_blocks(data, beta_per_industry)]


def check_orthonormal(F: np.ndarray, T: int, tol: float = ORTHO_TOL) -> None:
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != T:
        raise ValueError(f"factor matrix has shape {F.shape}, expected ({T}, r)")
    r = F.shape[1]
    if r and np.max(np.abs(F.T @ F / T - np.eye(r))) > tol:
        raise ValueError("factor matrix does not satisfy F'F/T = I")


def objective_q(data: PanelDataset, beta, F: Sequence[np.ndarray]) -> float:
    """Sum over units of ``(Y - X beta)' M_{F_i} (Y - X beta)``."""
    if len(F) != data.L:
        raise ValueError(f"need {data.L} factor matrices, got {len(F)}")
    T = data.T
    total = 0.0
    for i, E in enumerate(residual_blocks(data, common_beta(data, beta))):
        check_orthonormal(F[i], T)
        proj = E @ F[i]
        total += float(np.sum(E * E) - np.sum(proj * proj) / T)
    return max(total, 0.0)
