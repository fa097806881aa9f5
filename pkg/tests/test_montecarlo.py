from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierpanel.dgp import DgpSpec
from hierpanel.montecarlo import aggregate, projector_distance, replication_seed, run_cell, run_grid
from hierpanel.panel import ModelConfig


def dense_projector(A):
    return A @ np.linalg.inv(A.T @ A) @ A.T if A.shape[1] else np.zeros((A.shape[0],) * 2)


def test_projector_distance_identical_and_orthogonal():
    A = np.array([[1.0], [2.0], [3.0]])
    assert projector_distance(A, 5 * A) == pytest.approx(0.0, abs=1e-14)
    assert projector_distance(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])) == pytest.approx(math.sqrt(2))


def test_projector_distance_empty():
    A = np.eye(4)[:, :2]
    assert projector_distance(A, np.empty((4, 0))) == pytest.approx(math.sqrt(2))
    assert projector_distance(np.empty((4, 0)), np.empty((4, 0))) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 3), st.integers(0, 3))
def test_projector_distance_matches_dense(seed, r, s):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((7, r)), rng.standard_normal((7, s))
    expect = np.linalg.norm(dense_projector(A) - dense_projector(B))
    assert projector_distance(A, B) == pytest.approx(expect, abs=1e-10)


def test_replication_seeds_distinct():
    seeds = {replication_seed(0, L, T, m) for L in (20, 40) for T in (20, 40) for m in range(50)}
    assert len(seeds) == 200


def test_noiseless_single_replication_is_exact():
    spec = DgpSpec(L=6, T=15, lS_choices=(0,), e_scale=0.0, seed=0)
    cell = run_cell(spec, 1, ModelConfig(tol_beta=1e-12))
    assert cell.failures == 0
    assert cell.acc_lG == cell.acc_lS == cell.acc_lS_star == 1.0
    assert cell.rmse_beta < 1e-6 and cell.rmse_FG < 1e-6 and cell.rmse_FS < 1e-6


def test_cell_deterministic_and_metrics_consistent():
    spec = DgpSpec(L=6, T=10)
    a = run_cell(spec, 6, base_seed=5)
    b = run_cell(spec, 6, base_seed=5)
    assert a == b
    assert a.replications == b.replications
    assert 0 <= a.acc_lS <= a.acc_lS_star <= 1
    assert 0 <= a.acc_lG <= 1
    assert min(a.rmse_beta, a.rmse_FG, a.rmse_FS) >= 0
    errs = [r.beta_sq_err for r in a.replications]
    assert a.rmse_beta == pytest.approx(math.sqrt(np.mean(errs)))


def test_grid_of_one_equals_cell():
    spec = DgpSpec(L=5, T=10)
    rep = run_grid([5], [10], 3, spec, base_seed=7)
    cell = run_cell(spec, 3, base_seed=7)
    assert rep.cells == (cell,)
    assert rep.grid == [(5, 10)]


def test_grid_cartesian_and_report_dict():
    rep = run_grid([4, 5], [8, 10], 2, base_seed=1)
    assert rep.grid == [(4, 8), (4, 10), (5, 8), (5, 10)]
    d = rep.to_dict()
    assert "wall_time" not in d["cells"][0]
    assert "wall_time" in rep.to_dict(timing=True)["cells"][0]


def test_parallel_matches_serial():
    spec = DgpSpec(L=4, T=8)
    assert run_cell(spec, 4, base_seed=2, n_jobs=2) == run_cell(spec, 4, base_seed=2)


def test_failures_counted_not_averaged(caplog):
    ok = run_cell(DgpSpec(L=4, T=8), 2, base_seed=3).replications
    cell = aggregate(4, 8, 3, [*ok, "seed 1: SingularMatrixError: boom"])
    assert cell.failures == 1 and cell.completed == 2
    assert "failed" in caplog.text
    assert cell.acc_lG == np.mean([r.lG_match for r in ok])


def test_all_failed_cell_is_nan():
    cell = aggregate(4, 8, 1, ["x"])
    assert cell.failures == 1 and math.isnan(cell.rmse_beta)


def test_run_cell_rejects_zero_reps():
    with pytest.raises(ValueError):
        run_cell(DgpSpec(L=3, T=5), 0)

