"""Acceptance suite: one PASS/FAIL line per criterion.

The Monte Carlo cells (200 replications each at (20,20), (40,20) and
(40,40)) are computed once per module and shared by criteria 1, 2, 3 and 6.
Run with ``pytest tests/test_acceptance.py`` and read the lines prefixed
``[acceptance]``.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from hierpanel.bootstrap import bootstrap_ci, bootstrap_samples, mbb_time_indices, order_statistic_bounds
from hierpanel.cli import main
from hierpanel.dgp import DgpSpec, generate
from hierpanel.heterogeneous import fit_heterogeneous
from hierpanel.homogeneous import beta_given_factors, fit_alternating, fit_full
from hierpanel.montecarlo import projector_distance, run_cell
from hierpanel.panel import ModelConfig, PanelDataset, objective_q
from hierpanel.selection import sigma_global, sigma_specific

from .helpers import factor_panel, random_orthonormal

REPS = 200
CELLS = [(20, 20), (40, 20), (40, 40)]


def report(capsys, number: int, title: str, checks: list[tuple[str, bool]]) -> None:
    ok = all(passed for _, passed in checks)
    with capsys.disabled():
        print(f"\n[acceptance] {'PASS' if ok else 'FAIL'} criterion {number}: {title}")
        for text, passed in checks:
            print(f"[acceptance]     {'ok ' if passed else 'BAD'} {text}")
    failed = [text for text, passed in checks if not passed]
    assert not failed, f"criterion {number} failed: {failed}"


@pytest.fixture(scope="module")
def mc():
    return {(L, T): run_cell(DgpSpec(L=L, T=T), REPS, ModelConfig(), base_seed=0) for L, T in CELLS}


def test_criterion_1_count_accuracy(mc, capsys):
    c2020, c4040 = mc[(20, 20)], mc[(40, 40)]
    checks = [(f"cell ({L},{T}) has no failed replications", mc[(L, T)].failures == 0) for L, T in CELLS]
    checks += [
        (f"acc_lG(20,20) = {c2020.acc_lG:.3f} in [0.73, 0.85]", 0.73 <= c2020.acc_lG <= 0.85),
        (f"acc_lG(40,40) = {c4040.acc_lG:.3f} >= 0.95", c4040.acc_lG >= 0.95),
        (f"acc_lS(40,40) = {c4040.acc_lS:.3f} in [0.60, 0.76]", 0.60 <= c4040.acc_lS <= 0.76),
    ]
    for L, T in CELLS:
        c = mc[(L, T)]
        checks.append((f"acc_lS_star({L},{T}) = {c.acc_lS_star:.3f} >= acc_lS = {c.acc_lS:.3f}",
                       c.acc_lS_star >= c.acc_lS))
    report(capsys, 1, "factor-count accuracy", checks)


def test_criterion_2_rmse(mc, capsys):
    c2020, c4040 = mc[(20, 20)], mc[(40, 40)]
    checks = [
        (f"rmse_beta(20,20) = {c2020.rmse_beta:.4f} in [0.015, 0.025]", 0.015 <= c2020.rmse_beta <= 0.025),
        (f"rmse_beta(40,40) = {c4040.rmse_beta:.4f} in [0.004, 0.008]", 0.004 <= c4040.rmse_beta <= 0.008),
        (f"rmse_FG(20,20) = {c2020.rmse_FG:.3f} in [0.57, 0.70]", 0.57 <= c2020.rmse_FG <= 0.70),
    ]
    for L, T in CELLS:
        c = mc[(L, T)]
        checks.append((f"rmse_FS({L},{T}) = {c.rmse_FS:.3f} > rmse_FG = {c.rmse_FG:.3f}", c.rmse_FS > c.rmse_FG))
    report(capsys, 2, "slope and factor-space errors", checks)


def test_criterion_3_trends(mc, capsys):
    a, b = mc[(40, 20)], mc[(40, 40)]
    se = math.sqrt(a.acc_lG * (1 - a.acc_lG) / a.completed + b.acc_lG * (1 - b.acc_lG) / b.completed)
    rise = b.acc_lG - a.acc_lG
    r1, r2 = mc[(20, 20)].rmse_beta, b.rmse_beta
    checks = [
        (f"acc_lG at L=40 rises {a.acc_lG:.3f} -> {b.acc_lG:.3f} by {rise:.3f} > 2 SE = {2 * se:.3f}",
         rise > 2 * se),
        (f"rmse_beta (20,20) = {r1:.4f} > (40,40) = {r2:.4f}", r2 < r1),
    ]
    report(capsys, 3, "trends in L and T", checks)


def test_criterion_4_exact_recovery(capsys):
    checks = []
    worst_beta = worst_proj = worst_q = 0.0
    for seed in range(5):
        data, truth = generate(DgpSpec(L=20, T=20, e_scale=0.0, seed=seed))
        fit = fit_alternating(data, [truth.lG + k for k in truth.lS], ModelConfig())
        worst_beta = max(worst_beta, float(np.max(np.abs(fit.beta - truth.beta0))))
        worst_proj = max(worst_proj, max(
            projector_distance(fit.Fi_joint[i], np.hstack([truth.FG, truth.FS[i]])) for i in range(data.L)))
        worst_q = max(worst_q, objective_q(data, fit.beta, fit.Fi_joint) / (data.n_units * data.T))
    checks += [
        (f"max |beta_hat - beta0| = {worst_beta:.2e} < 1e-8", worst_beta < 1e-8),
        (f"max projector distance = {worst_proj:.2e} < 1e-6", worst_proj < 1e-6),
        (f"max Q / (units * T) = {worst_q:.2e} < 1e-10", worst_q < 1e-10),
    ]
    counts = []
    for seed in range(5):
        data, _ = generate(DgpSpec(L=10, T=20, lG=0, lS_choices=(0,), e_scale=0.0, seed=seed))
        sel = fit_full(data).selection
        counts.append((sel.lG_hat, max(sel.lS_hat)))
    checks.append((f"zero-factor noiseless data selects no factors ({counts})",
                   all(c == (0, 0) for c in counts)))
    report(capsys, 4, "noiseless exact recovery", checks)


def _dense_beta(data, F):
    T, d = data.T, data.d_x
    A, b = np.zeros((d, d)), np.zeros(d)
    for i in range(data.L):
        M = np.eye(T) - (F[i] @ np.linalg.pinv(F[i]) if F[i].shape[1] else 0.0)
        for j in range(data.N[i]):
            Xij = data.X_block(i)[j]
            A += Xij.T @ M @ Xij
            b += Xij.T @ M @ data.Y_block(i)[j]
    return np.linalg.solve(A, b)


def _dense_sigmas(data, betas, FG):
    T = data.T
    M = np.eye(T) - (FG @ np.linalg.pinv(FG) if FG.shape[1] else 0.0)
    SG = np.zeros((T, T))
    SS = []
    for i in range(data.L):
        Si = np.zeros((T, T))
        for j in range(data.N[i]):
            e = data.Y_block(i)[j] - data.X_block(i)[j] @ betas[i]
            SG += np.outer(e, e)
            Si += np.outer(M @ e, M @ e)
        SS.append(Si / (data.N[i] * T))
    return SG / (data.n_units * T), SS


def test_criterion_5_oracle_equivalence(capsys):
    rng = np.random.default_rng(2024)
    n_inst = 60
    worst_beta = worst_sig = 0.0
    min_margin = np.inf
    done = 0
    while done < n_inst:
        L = int(rng.integers(1, 4))
        T = int(rng.integers(3, 7))
        N = [int(n) for n in rng.integers(1, 5, size=L)]
        d = int(rng.integers(1, 3))
        if sum(N) * T < 2 * d + 2:
            continue  # too few observations for any slope
        done += 1
        X = [rng.standard_normal((n, T, d)) for n in N]
        Y = [rng.standard_normal((n, T)) for n in N]
        data = PanelDataset.from_blocks(Y, X)
        r = [int(rng.integers(0, min(n, T - 1) + 1)) for n in N]
        # keep the normal matrix comfortably invertible
        while sum(n * (T - k) for n, k in zip(N, r)) < 2 * d + 2:
            r = [max(0, k - 1) for k in r]
        F = [random_orthonormal(rng, T, k) for k in r]
        worst_beta = max(worst_beta, float(np.max(np.abs(beta_given_factors(data, F) - _dense_beta(data, F)))))

        betas = [rng.standard_normal(d) for _ in range(L)]
        FG = random_orthonormal(rng, T, int(rng.integers(0, T)))
        SG, SS = _dense_sigmas(data, betas, FG)
        err = np.max(np.abs(sigma_global(data, betas) - SG))
        for a, b in zip(sigma_specific(data, betas, FG), SS):
            err = max(err, np.max(np.abs(a - b)))
        worst_sig = max(worst_sig, float(err))

        fit = fit_alternating(data, r)
        q_hat = objective_q(data, fit.beta, fit.Fi_joint)
        for _ in range(100):
            cand = [random_orthonormal(rng, T, k) for k in r]
            min_margin = min(min_margin, objective_q(data, fit.beta, cand) - q_hat)
    checks = [
        (f"{n_inst} instances (L <= 3, N_i <= 4, T <= 6)", n_inst >= 50),
        (f"beta vs dense normal equations: max error {worst_beta:.2e} <= 1e-10", worst_beta <= 1e-10),
        (f"covariances vs dense assembly: max error {worst_sig:.2e} <= 1e-12", worst_sig <= 1e-12),
        (f"Q(beta_hat, F_hat) <= Q(beta_hat, F_rand) over 100 candidates each: min margin {min_margin:.2e}",
         min_margin >= -1e-12),
    ]
    report(capsys, 5, "dense-oracle equivalence", checks)


def test_criterion_6_monotone_objective(mc, capsys):
    checks = []
    for L, T in CELLS:
        c = mc[(L, T)]
        worst = max(r.max_objective_rise for r in c.replications)
        checks.append((f"({L},{T}): {len(c.replications)} replications, largest Q rise {worst:.2e} <= 1e-10",
                       worst <= 1e-10 and len(c.replications) == REPS))
    report(capsys, 6, "objective never increases", checks)


def test_criterion_7_bootstrap_structure(capsys):
    rng = np.random.default_rng(7)
    struct_ok = True
    for T in range(4, 41):
        for l0 in sorted({1, max(1, int(T ** (1 / 3))), T // 2, T - 1}):
            idx = mbb_time_indices(T, l0, rng)
            blocks = [idx[k:k + l0] for k in range(0, T, l0)]
            struct_ok &= idx.shape == (T,)
            struct_ok &= all(np.all(np.diff(b) == 1) and b[0] + l0 <= T - 1 for b in blocks)

    T = 15
    tags = np.arange(T, dtype=float)
    data = PanelDataset.from_blocks([np.tile(tags, (n, 1)) for n in (3, 4)],
                                    [np.tile(tags[None, :, None], (n, 1, 1)) for n in (3, 4)])
    shared = all(np.array_equal(boot.Y_block(i), np.tile(idx.astype(float), (data.N[i], 1)))
                 and np.array_equal(boot.X_block(i)[:, :, 0], np.tile(idx.astype(float), (data.N[i], 1)))
                 for idx, boot in bootstrap_samples(data, 50, 2, seed=1) for i in range(data.L))

    lo, hi = order_statistic_bounds(399, 0.05)

    beta = np.array([1.0, -0.5])
    noiseless, *_ = factor_panel(np.random.default_rng(8), [8, 9, 7], 20, beta, 2, [0, 0, 0])
    res = bootstrap_ci(noiseless, ModelConfig(d_max=6), B=399, level=0.05, seed=3)
    spread = float(max(np.max(np.abs(res.ci_lower - beta)), np.max(np.abs(res.ci_upper - beta))))
    srt = np.sort(res.replicate_betas, axis=0)
    checks = [
        ("every index series has length T and is built from contiguous blocks of length l0", bool(struct_ok)),
        ("all units share the same resampled periods (tagged rows)", shared),
        (f"B=399, level 0.05 -> order statistics ({lo}, {hi}) == (10, 390)", (lo, hi) == (10, 390)),
        ("interval bounds equal the 10th and 390th sorted replicates",
         np.array_equal(res.ci_lower, srt[9]) and np.array_equal(res.ci_upper, srt[389])),
        (f"noiseless data: CI collapses to beta0 (max deviation {spread:.1e})", spread < 1e-6),
    ]
    report(capsys, 7, "bootstrap structure", checks)


def test_criterion_8_variance_share_closure(capsys):
    worst = 0.0
    in_range = True
    n_fits = 0
    for seed in range(10):
        data, _ = generate(DgpSpec(L=20, T=20, seed=100 + seed))
        fits = [fit_full(data)]
        if seed < 3:
            fits.append(fit_heterogeneous(data))
        for fit in fits:
            sh = fit.shares
            worst = max(worst, abs(sh.total - 1.0))
            vals = [sh.global_share, sh.remainder, *sh.specific_share]
            in_range &= all(0.0 <= v <= 1.0 for v in vals)
            n_fits += 1
    checks = [
        (f"{n_fits} fits: max |global + sum specific + remainder - 1| = {worst:.1e} <= 1e-8", worst <= 1e-8),
        ("all shares in [0, 1]", in_range),
    ]
    report(capsys, 8, "variance-share closure", checks)


def test_criterion_9_determinism(tmp_path, capsys):
    def run_twice(name, args):
        outs = []
        for k in range(2):
            o = tmp_path / f"{name}{k}"
            code = main([*args, "--out", str(o)])
            outs.append((code, o.read_bytes() if o.exists() else b""))
        return outs[0][0] == 0 and outs[0] == outs[1] and len(outs[0][1]) > 0

    csv = tmp_path / "panel.csv"
    main(["simulate", "--L", "6", "--T", "16", "--seed", "4", "--out", str(csv)])
    checks = [
        ("simulate repeated with the same seed", run_twice("sim", ["simulate", "--L", "6", "--T", "16", "--seed", "4"])),
        ("fit --format csv repeated with the same seed", run_twice("fit", ["fit", "--csv", str(csv), "--dmax", "6", "--format", "csv"])),
        ("fit --mode heterogeneous --format json repeated with the same seed",
         run_twice("het", ["fit", "--csv", str(csv), "--mode", "heterogeneous", "--dmax", "4", "--format", "json"])),
        ("bootstrap-ci --format markdown repeated with the same seed",
         run_twice("boot", ["bootstrap-ci", "--csv", str(csv), "--dmax", "5", "--bootstrap-reps", "30",
                            "--seed", "2", "--format", "markdown"])),
        ("mc-study --format json repeated with the same seed",
         run_twice("mc", ["mc-study", "--L", "4,5", "--T", "10", "--reps", "3", "--seed", "1", "--format", "json"])),
    ]
    meta = json.loads((tmp_path / "het0").read_text())["meta"]
    checks.append(("reports carry version, config echo and seed",
                   {"version", "config", "seed"} <= set(meta)))
    report(capsys, 9, "byte-identical reruns", checks)
