"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
and then asserts the criterion. Run with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.special import expit

from sparse_duality.bench import (ClusterSpec, ExperimentConfig, RecoveryParams, SolverParams,
                                  recovery_tables, run_lambda_sweep, run_recovery_experiment,
                                  sweep_tables)
from sparse_duality.classifier import (ClassifierOptions, LabeledDesign, approx_l0_objective,
                                       fit_approx_l0_classifier, fit_type2_classifier, nll,
                                       pi_bound, type2_classifier_objective)
from sparse_duality.core import HyperState, dual_data_fit, g2_penalty
from sparse_duality.lambda_learn import learn_lambda_type1
from sparse_duality.penalties import PenaltyFamily
from sparse_duality.type1 import Type1Options, solve_type1, type1_objective
from sparse_duality.type2 import (Type2Options, em_update, solve_type2, type2_objective)
from sparse_duality.wl1 import WL1Problem, solve_wl1

from conftest import random_dictionary, sparse_problem

ARD = PenaltyFamily.ard()


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return emit


def monotone(trace, slack=1e-9):
    t = np.asarray(trace, dtype=float)
    return bool(np.all(np.diff(t) <= slack * np.maximum(1.0, np.abs(t[:-1]))))


# 1 -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_1_lambda_sweep(verdict):
    cfg = ExperimentConfig(n=100, m=50, k0=10, snr_db=0.0, trials=100,
                           lambda_grid=np.logspace(-4, 1, 50).tolist(),
                           penalties=["lp:0.01", "lp:1"], seed=2024)
    t0 = time.perf_counter()
    res = run_lambda_sweep(cfg, jobs=1)
    elapsed = time.perf_counter() - t0
    sparse, l1 = cfg.penalties
    ratios = {p: res.learned[p]["mse"] / float(np.min(res.mse[p])) for p in cfg.penalties}
    l0_sparse = res.learned[sparse]["mean_l0"]
    l0_l1 = res.learned[l1]["mean_l0"]
    ok = (all(r <= 1.10 for r in ratios.values()) and 7 <= l0_sparse <= 13 and l0_l1 > l0_sparse
          and elapsed <= 15 * 60)
    detail = "; ".join(
        f"{p}: grid-min MSE {np.min(res.mse[p]):.4f} at lambda {cfg.lambda_grid[int(np.argmin(res.mse[p]))]:.3g}, "
        f"learned lambda {res.learned[p]['mean_lambda']:.3g} MSE {res.learned[p]['mse']:.4f} "
        f"(ratio {ratios[p]:.3f}), l0 {res.learned[p]['mean_l0']:.2f}" for p in cfg.penalties)
    verdict("1 lambda sweep", ok, f"{detail}; {elapsed:.0f}s")


# 2 -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_2_clustered_recovery(verdict):
    # 16 x 32 base (two columns per row would make the clustered matrix square)
    spec = ClusterSpec(base_n=16, base_d=32, cluster_sizes=2, epsilon=0.05, seed=0)
    params = RecoveryParams(n_active=4, trials=200, seed=0)
    t0 = time.perf_counter()
    res = run_recovery_experiment(spec, params, SolverParams(q=1.0), jobs=1)
    elapsed = time.perf_counter() - t0
    s = res.summary
    ok = (s["type2_rate"] >= 0.95 and s["l1_rate"] <= 0.5 and s["dominance_violations"] == 0
          and elapsed <= 600)
    verdict("2 clustered recovery", ok,
            f"type2 {s['type2_rate']:.3f}, l1 {s['l1_rate']:.3f}, dominance violations "
            f"{s['dominance_violations']}, base l1 {s['base_l1_rate']:.3f}, {elapsed:.0f}s")


# 3 -------------------------------------------------------------------------

def test_criterion_3_duality_identity(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n, m = int(rng.integers(1, 21)), int(rng.integers(1, 41))
        lam = float(np.exp(rng.uniform(np.log(1e-3), 0.0)))
        phi = random_dictionary(rng, n, m)
        gamma = rng.uniform(0.01, 3.0, m)
        y = rng.standard_normal(n)
        # min_x ||y - Phi x||^2/lam + x' Gamma^-1 x as a stacked least-squares problem
        a = np.vstack([phi / np.sqrt(lam), np.diag(1.0 / np.sqrt(gamma))])
        b = np.concatenate([y / np.sqrt(lam), np.zeros(m)])
        x, *_ = np.linalg.lstsq(a, b, rcond=None)
        primal = float(np.sum((a @ x - b) ** 2))
        dual = dual_data_fit(phi, HyperState(gamma, lam), y)
        worst = max(worst, abs(primal - dual) / abs(dual))
    verdict("3 duality identity", worst < 1e-8, f"worst relative discrepancy {worst:.2e} over 100")


# 4 -------------------------------------------------------------------------

def test_criterion_4_scalar_oracles(verdict):
    t0 = time.perf_counter()
    checks = {}
    one = np.eye(1)

    # g2 on a 1 x 1 dictionary: min over gamma of x^2/gamma + log(lam + gamma)
    lam = 0.5
    grid = np.logspace(-9, 4, 400001)
    errs = []
    for x in (0.3, 1.0, 2.5):
        value, _ = g2_penalty(one, ARD, lam, [x])
        brute = np.min(x * x / grid + np.log(lam + grid))
        errs.append(abs(value - brute))
    checks["g2"] = (max(errs) < 1e-8, f"g2 max |err| {max(errs):.1e}")

    # MacKay and EM fixed points: argmin of y^2/(lam+gamma) + log(lam+gamma) is y^2 - lam
    y, lam = 3.0, 1.0
    grid = np.linspace(0.0, 30.0, 300001)
    g_grid = grid[np.argmin(y * y / (lam + grid) + np.log(lam + grid))]
    mk = solve_type2(one, ARD, lam, [y], Type2Options(max_iters=10000, tol=1e-15)).gamma_hat[0]
    em = solve_type2(one, ARD, lam, [y], Type2Options(update_rule="em", max_iters=20000,
                                                      tol=1e-15)).gamma_hat[0]
    step = grid[1] - grid[0]
    checks["mackay"] = (abs(mk - g_grid) <= step, f"MacKay gamma {mk:.6f} vs grid {g_grid:.4f}")
    em_fixed = em_update(one, ARD, HyperState([em], lam), [y])[0]
    checks["em"] = (abs(em - g_grid) <= step and abs(em_fixed - em) < 1e-6,
                    f"EM gamma {em:.6f} vs grid {g_grid:.4f}")

    # lambda learning, concave penalty: min over x of |x|^p + |y - x|^p
    est = learn_lambda_type1(one, PenaltyFamily.lp(0.01), [y])
    xs = np.union1d(np.linspace(-2.0, 5.0, 200001), [0.0, y])
    brute = np.min(np.abs(xs) ** 0.01 + np.abs(y - xs) ** 0.01)
    ok_concave = abs(est.objective - brute) < 1e-9
    # lambda learning, convex penalty: variance-space grid over (gamma, lam), 10^6 points
    pen = PenaltyFamily.lp(1.5)
    est = learn_lambda_type1(one, pen, [y])
    g = np.exp(np.linspace(np.log(1e-2), np.log(1e2), 1000))
    G, L = np.meshgrid(g, g, indexing="ij")
    vals = y * y / (G + L) + pen.log_plus_f(G) + pen.log_plus_f(L)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    ratio = g[1] / g[0]
    ok_convex = (abs(np.log(est.lambda_star / g[j])) <= np.log(ratio)
                 and abs(np.log(est.gamma[0] / g[i])) <= np.log(ratio)
                 and est.objective <= vals[i, j] + 1e-9)
    checks["lambda"] = (ok_concave and ok_convex,
                        f"lambda* {est.lambda_star:.4f} vs grid {g[j]:.4f}")

    elapsed = time.perf_counter() - t0
    ok = all(c[0] for c in checks.values()) and elapsed < 60
    verdict("4 scalar oracles", ok, "; ".join(c[1] for c in checks.values()) + f"; {elapsed:.1f}s")


# 5 -------------------------------------------------------------------------

def classifier_design(rng, n, m):
    feats = rng.standard_normal((n, m))
    labels = (rng.uniform(size=n) < expit(feats @ rng.standard_normal(m))).astype(float)
    labels[:2] = (0.0, 1.0)
    return LabeledDesign(feats, labels)


def test_criterion_5_monotonicity(verdict):
    rng = np.random.default_rng(5)
    pens = [PenaltyFamily.lp(0.5), PenaltyFamily.log_sum(0.1), PenaltyFamily.lp(1.0)]
    bad = {"type1": 0, "em": 0, "classifier": 0}
    for k in range(50):
        phi, _, y = sparse_problem(rng, 20, 40, 5, noise=0.05)
        pen = pens[k % 3]
        lam = 0.05
        # exact objective (no smoothing) ...
        rep = solve_type1(phi, pen, lam, y, Type1Options(epsilon_smooth=0.0, max_iters=100))
        exact_ok = monotone(rep.objective_trace)
        # ... and the smoothed schedule used by default
        rep = solve_type1(phi, pen, lam, y, Type1Options(max_iters=100))
        bad["type1"] += not (exact_ok and monotone(rep.objective_trace))

        em_pen = [ARD, PenaltyFamily.lp(1.0), PenaltyFamily.log_sum(0.1)][k % 3]
        gamma = np.ones(40)
        trace = [type2_objective(phi, em_pen, HyperState(gamma, lam), y)]
        for _ in range(100):
            gamma = em_update(phi, em_pen, HyperState(gamma, lam), y)
            trace.append(type2_objective(phi, em_pen, HyperState(gamma, lam), y))
        bad["em"] += not monotone(trace)

        d = classifier_design(rng, 25, 6)
        rep = fit_type2_classifier(d, ARD if k % 2 else PenaltyFamily.lp(1.0),
                                   ClassifierOptions(lam=0.3, max_iters=200))
        bad["classifier"] += not monotone(rep.objective_trace)
    verdict("5 monotonicity", not any(bad.values()),
            ", ".join(f"{k} violations {v}/50" for k, v in bad.items()))


# 6 -------------------------------------------------------------------------

SMALL_X = np.array([[-1.2, 0.3], [0.8, 0.5], [-1.0, 1.1], [0.7, 0.7], [0.7, 1.1], [2.2, -0.6]])
SMALL_Y = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


def best_nll(feats, labels, cols):
    """Unpenalized logistic fit on the given columns by Newton's method."""
    if not cols:
        return nll((feats, labels), np.zeros(feats.shape[1]))
    a = feats[:, cols]
    w = np.zeros(len(cols))
    for _ in range(100):
        p = expit(a @ w)
        step = np.linalg.solve(a.T @ (a * (p * (1 - p))[:, None]), a.T @ (p - labels))
        w -= step
        if np.linalg.norm(step) < 1e-14:
            break
    x = np.zeros(feats.shape[1])
    x[cols] = w
    return nll((feats, labels), x)


def test_criterion_6_classifier(verdict):
    rng = np.random.default_rng(6)
    parts = []

    d = classifier_design(rng, 12, 4)
    gaps = []
    for _ in range(1000):
        x, v = rng.standard_normal((2, 4)) * 2
        gaps.append(pi_bound(d, x, v) - nll(d, x))
    tight = max(abs(pi_bound(d, v, v) - nll(d, v)) for v in rng.standard_normal((50, 4)))
    ok_bound = min(gaps) >= -1e-12 and tight <= 1e-12
    parts.append(f"bound min gap {min(gaps):.2e}, tightness {tight:.1e}")

    converged, over = 0, 0
    for _ in range(10):
        d = classifier_design(rng, 8, 20)
        for lam in (0.2, 1.0):
            rep = fit_type2_classifier(d, ARD, ClassifierOptions(lam=lam, max_iters=5000))
            if rep.converged:
                converged += 1
                over += np.count_nonzero(rep.x_hat) > 8
    ok_cap = over == 0 and converged > 0
    parts.append(f"sparsity cap violations {over} of {converged} converged fits")

    worst, worst_obj = 0.0, 0.0
    for k in range(10):
        d = classifier_design(np.random.default_rng(600 + k), 30, 4)
        lam = [0.05, 0.2, 1.0][k % 3]
        start = np.full(4, 0.5)
        a = fit_type2_classifier(d, ARD, ClassifierOptions(lam=lam, x_init=start))
        b = fit_approx_l0_classifier(d, ClassifierOptions(alpha1=lam, alpha2=lam, stages=1,
                                                          x_init=start))
        worst = max(worst, float(np.max(np.abs(a.x_hat - b.x_hat))))
        # the two objectives coincide at the shared solution
        _, gamma = g2_penalty(d.features, ARD, lam, a.x_hat)
        one = type2_classifier_objective(d, ARD, lam, a.x_hat)
        two = approx_l0_objective(d, b.x_hat, gamma, lam, lam)
        worst_obj = max(worst_obj, abs(one - two) / abs(one))
    ok_equiv = worst <= 1e-6 and worst_obj <= 1e-9
    parts.append(f"equivalence max |dx| {worst:.1e}, objective gap {worst_obj:.1e}")

    opts = ClassifierOptions(alpha1=1.0, alpha2=1.0, alpha1_min=0.06, alpha2_min=1e-6, stages=12)
    rep = fit_approx_l0_classifier((SMALL_X, SMALL_Y), opts)
    weight = opts.alpha1_min * np.log(1.0 / opts.alpha2_min)
    supports = [s for k in range(3) for s in itertools.combinations(range(2), k)]
    scores = {s: best_nll(SMALL_X, SMALL_Y, list(s)) + weight * len(s) for s in supports}
    oracle = min(scores, key=scores.get)
    ok_support = tuple(rep.extra["support"]) == oracle
    parts.append(f"support {rep.extra['support']} vs exhaustive {list(oracle)}")

    verdict("6 classifier properties", ok_bound and ok_cap and ok_equiv and ok_support,
            "; ".join(parts))


# 7 -------------------------------------------------------------------------

def test_criterion_7_weighted_l1(verdict):
    x_vertex = solve_wl1(WL1Problem(np.array([[1.0, 1.0]]), [1.0], [1.0, 2.0]))
    ok_vertex = np.allclose(x_vertex, [1.0, 0.0], atol=1e-12)

    rng = np.random.default_rng(7)
    worst_gap, worst_obj = 0.0, 0.0
    for _ in range(50):
        phi = random_dictionary(rng, 4, 8)
        y = rng.standard_normal(4)
        w = rng.uniform(0.2, 3.0, 8)
        x, info = solve_wl1(WL1Problem(phi, y, w), return_info=True)
        worst_gap = max(worst_gap, info.duality_gap / (1 + abs(info.objective)))
        best = np.inf
        for s in itertools.combinations(range(8), 4):
            sub = phi[:, s]
            if abs(np.linalg.det(sub)) > 1e-12:
                best = min(best, float(np.sum(w[list(s)] * np.abs(np.linalg.solve(sub, y)))))
        worst_obj = max(worst_obj, abs(info.objective - best) / (1 + abs(best)))
    ok = ok_vertex and worst_gap <= 1e-6 and worst_obj <= 1e-6
    verdict("7 weighted l1", ok, f"vertex example {x_vertex.tolist()}, worst gap {worst_gap:.1e}, "
            f"worst vertex-oracle discrepancy {worst_obj:.1e}")


# 8 -------------------------------------------------------------------------

def test_criterion_8_determinism(verdict):
    cfg = ExperimentConfig(n=30, m=15, k0=3, trials=8, lambda_grid=[1e-3, 1e-2, 1e-1, 1.0],
                           seed=8)
    a = sweep_tables(run_lambda_sweep(cfg, jobs=1))
    b = sweep_tables(run_lambda_sweep(cfg, jobs=1))
    c = sweep_tables(run_lambda_sweep(cfg, jobs=4))
    spec = ClusterSpec(base_n=8, base_d=16, cluster_sizes=2, seed=8)
    params = RecoveryParams(n_active=2, trials=8, seed=8)
    r1 = recovery_tables(run_recovery_experiment(spec, params, jobs=1))
    r4 = recovery_tables(run_recovery_experiment(spec, params, jobs=4))
    ok = a == b == c and r1 == r4
    verdict("8 determinism", ok, f"sweep repeat {a == b}, sweep jobs 1 vs 4 {a == c}, "
            f"recovery jobs 1 vs 4 {r1 == r4}")
