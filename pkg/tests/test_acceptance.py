"""End-to-end acceptance criteria.

Each test appends one PASS/FAIL line to the terminal summary section
"acceptance criteria" (see conftest.py).
"""

import math
import time

import numpy as np
import pytest

from admmtrack import analysis, cli, engine, oracle
from admmtrack.config import SimConfig
from admmtrack.process import AR1Process, ParameterState, ProcessConfig, stacked_gradient

from conftest import ACCEPTANCE_LINES, random_theta


def report(n, name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {n}. {name}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def default_setup():
    return analysis.make_setup(SimConfig())


@pytest.fixture(scope="module")
def default_run(default_setup):
    t0 = time.perf_counter()
    result = analysis.monte_carlo(default_setup)
    fit = analysis.estimate_decay(default_setup)
    return result, fit, time.perf_counter() - t0


def test_1_lemma_sweep(default_setup):
    setup = analysis.make_setup(SimConfig(num_tracks=50, track_len=200))
    t0 = time.perf_counter()
    records = analysis.run_tracks(setup, check_lemma=True)
    elapsed = time.perf_counter() - t0
    steps = sum(r.lemma_slack.size for r in records)
    bad = sum(r.lemma_violations for r in records)
    worst = min(float(np.min(r.lemma_slack / (1 + r.lemma_rhs))) for r in records)
    report(1, "tracking inequality sweep", steps >= 50 * 200 and bad == 0,
           f"{bad} violations in {steps} steps, worst relative slack {worst:.2e}, {elapsed:.1f} s")


def test_2_static_rate(default_setup):
    cfg = default_setup.cfg
    rng = np.random.default_rng(2024)
    worst, tested = -math.inf, 0
    while tested < 20:
        theta = default_setup.process.stationary_sample(rng)
        opt = oracle.solve_optimal(theta, default_setup.arcs, cfg.mu_tol)
        if not opt.is_unique_primal:
            continue
        dist, bound = analysis.static_rate_check(theta, default_setup, K=100)
        worst = max(worst, dist - bound)
        tested += 1
    # a better conditioned family as well, where the rate is far from one
    setup = analysis.make_setup(SimConfig(rho=1.0, rows_per_node=5))
    for _ in range(20):
        theta = random_theta(rng, 10, 5, 3)
        dist, bound = analysis.static_rate_check(theta, setup, K=100)
        worst = max(worst, dist - bound)
        tested += 1
    report(2, "static linear rate", worst <= 0,
           f"{tested} instances, max(dist - bound) = {worst:.2e}")


def test_3_symmetry_and_consensus(default_setup):
    arcs, rho = default_setup.arcs, default_setup.cfg.rho
    rng = np.random.default_rng(3)
    full = engine.zero_state(arcs, rho, full_lambda=True)
    compact = engine.zero_state(arcs, rho)
    mp = arcs.m_arcs * arcs.p
    E = arcs.E_o
    proj = E @ np.linalg.pinv(E)
    rev = arcs.reverse
    sym = zdiff = resid = 0.0
    for _ in range(1000):
        theta = random_theta(rng, arcs.n_nodes, 3, arcs.p)
        full = engine.step(full, theta, arcs)
        compact = engine.step(compact, theta, arcs)
        sym = max(sym, float(np.max(np.abs(full.lam_full[:mp] + full.lam_full[mp:]))))
        for s in (full, compact):
            Z = s.z.reshape(-1, arcs.p)
            zdiff = max(zdiff, float(np.max(np.abs(Z - Z[rev]))))
            resid = max(resid, float(np.linalg.norm(s.alpha - proj @ s.alpha)))
    ok = sym <= 1e-10 and zdiff <= 1e-12 and resid <= 1e-9
    report(3, "multiplier symmetry and consensus", ok,
           f"max|lam_s + lam_d| = {sym:.1e}, max z edge gap = {zdiff:.1e}, "
           f"range residual = {resid:.1e}")


def test_4_stationary_law():
    # 10^4 nodes are 10^4 independent chains; 10 steps give 1.2e6 pooled entries
    cfg = ProcessConfig(n_nodes=10_000, rows_per_node=3, p=3, epsilon_ar=0.01)
    proc = AR1Process(cfg)
    rng = np.random.default_rng(4)
    theta = proc.stationary_sample(rng)
    acc, count = 0.0, 0
    for _ in range(10):
        theta = proc.step(theta, rng)
        acc += float(np.sum(theta.H ** 2) + np.sum(theta.y ** 2))
        count += theta.H.size + theta.y.size
    var = acc / count
    target = 0.01 / (2 - 0.01)
    rel = abs(var - target) / target
    report(4, "stationary variance", count >= 10 ** 6 and rel <= 0.02,
           f"{var:.5e} vs {target:.5e} (rel err {rel:.2%}, {count} samples)")


def test_5_oracle_identities(default_setup):
    arcs = default_setup.arcs
    proc = default_setup.process
    n, m, p = arcs.n_nodes, arcs.m_arcs, arcs.p
    rng = np.random.default_rng(5)
    err_i = 0.0
    for _ in range(1000):
        a = oracle.solve_optimal(proc.stationary_sample(rng), arcs)
        b = oracle.solve_optimal(proc.stationary_sample(rng), arcs)
        lhs = np.linalg.norm(a.z_star - b.z_star)
        rhs = math.sqrt(m / n) * np.linalg.norm(a.x_star - b.x_star)
        err_i = max(err_i, abs(lhs - rhs))

    err_ii = err_iii = 0.0
    for _ in range(200):
        # every H_i annihilates a common random direction
        Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
        H = np.einsum("nri,ji->nrj", np.concatenate(
            [rng.standard_normal((n, 1, p - 1)), np.zeros((n, 1, 1))], axis=2), Q)
        theta = ParameterState(H, rng.standard_normal((n, 1)))
        opt = oracle.solve_optimal(theta, arcs)
        assert not opt.is_unique_primal
        v = np.tile(Q[:, -1] * rng.normal(scale=10.0), n)
        err_ii = max(err_ii, float(np.linalg.norm(stacked_gradient(theta, opt.x_star + v)
                                                  - opt.grad_star)))
        # stationarity on the degenerate instance and on a regular one
        for o in (opt, oracle.solve_optimal(proc.stationary_sample(rng), arcs)):
            err_iii = max(err_iii, float(np.linalg.norm(o.grad_star + arcs.E_o.T @ o.alpha_star)))
    ok = err_i <= 1e-10 and err_ii <= 1e-9 and err_iii <= 1e-8
    report(5, "oracle identities", ok,
           f"(i) {err_i:.1e}  (ii) {err_ii:.1e}  (iii) {err_iii:.1e}")


def test_6_bound_polynomials():
    from test_analysis import B1_symbolic
    b1 = analysis.bound_B1(1, 1, 1, 5, 5, 1)
    b2 = analysis.bound_B2(1, 1, 1, 5, 5, 1)
    ref = B1_symbolic(1, 1, 1, 5, 5, 1)
    ok = abs(b1 - 11.4926) <= 1e-4 and abs(b1 - ref) <= 1e-12 and b2 == 3.5
    report(6, "bound polynomials", ok, f"B1 = {b1:.6f} (symbolic {ref:.6f}), B2 = {b2!r}")


def test_7_decay_calibration(default_setup, default_run):
    stub = analysis.estimate_decay(default_setup, q_source=lambda t: np.full(300, 0.9))
    _, fit, _ = default_run
    ok = (abs(stub.gamma_hat - 0.9) <= 1e-3 and abs(stub.C_hat - 1.0) <= 1e-3
          and fit.gamma_hat < 1 and fit.r_squared >= 0.95)
    report(7, "decay fit calibration", ok,
           f"stub gamma = {stub.gamma_hat:.6f}, C = {stub.C_hat:.6f}; default "
           f"gamma = {fit.gamma_hat!r}, R^2 = {fit.r_squared:.6f}")


def test_8_plateau_and_bound(default_setup, default_run):
    result, fit, elapsed = default_run
    plateau, third = result.plateau(), result.third_quarter()
    est = result.moments
    rep = analysis.theorem1_rhs(est, fit, default_setup, plateau, result.plateau("mse_u_mean"))
    se_x, se_l = est.B_x4_sem / est.B_x4_hat, est.B_lambda4_sem / est.B_lambda4_hat
    stable = abs(plateau - third) <= 0.25 * third
    finite = all(map(math.isfinite, (est.B_x4_hat, est.B_lambda4_hat)))
    ok = stable and finite and se_x < 0.1 and se_l < 0.1 and rep.bound_satisfied
    report(8, "tracking plateau and bound", ok,
           f"plateau {plateau:.4g} vs third quarter {third:.4g}; "
           f"B_x^4 = {est.B_x4_hat:.3g} (rse {se_x:.1%}, reference {analysis.REFERENCE_BX4:g}), "
           f"B_lambda^4 = {est.B_lambda4_hat:.3g} (rse {se_l:.1%}, reference "
           f"{analysis.REFERENCE_BL4:g}); rhs {rep.theorem1_rhs:.3g} >= plateau: "
           f"{rep.bound_satisfied}; {elapsed:.0f} s")


def test_9_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text("num_tracks = 8\ntrack_len = 100\ndecay_window = 20\n")
    dirs = []
    for i, threads in enumerate((1, 1, 2, 3)):
        out = tmp_path / f"run{i}"
        for cmd in ("bound", "simulate", "verify-lemma1"):
            assert cli.main([cmd, "--config", str(cfg), "--out-dir", str(out), "--trace",
                             "--threads", str(threads)]) == 0
        dirs.append(out)
    names = sorted(p.name for p in dirs[0].iterdir())
    same = all((d / name).read_bytes() == (dirs[0] / name).read_bytes()
               for d in dirs[1:] for name in names)
    same = same and all(sorted(p.name for p in d.iterdir()) == names for d in dirs)
    report(9, "determinism across thread counts", same,
           f"{len(names)} CSVs ({', '.join(names)}) identical over threads 1, 1, 2, 3")
