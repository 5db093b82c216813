"""Type II (empirical Bayes) estimation.

Variance-space updates (MacKay fixed point, EM) act on the marginal cost
``y^T Sigma_y^{-1} y + log|Sigma_y| + sum f(gamma)``; the reweighted-l1
rules work on the equivalent coefficient-space cost
``||y - Phi x||^2 + lam * g2(x)``.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np

from .core import (HyperState, SolveReport, _as_matrix, g2_penalty, posterior_mean,
                   sigma_y_factor)
from .exceptions import DegenerateUpdate, InfeasibleConstraint, SingularSystem
from .penalties import PenaltyFamily
from .wl1 import WL1Mode, WL1Problem, solve_wl1


class UpdateRule(str, enum.Enum):
    MACKAY = "mackay"
    EM = "em"
    REWEIGHTED_L1 = "reweighted_l1"


@dataclass
class Type2Options:
    update_rule: UpdateRule = UpdateRule.MACKAY
    max_iters: int = 500
    tol: float = 1e-9
    prune_threshold: float = 1e-12
    gamma_init: np.ndarray | None = None
    mackay_patience: int = 10

    def __post_init__(self):
        self.update_rule = UpdateRule(self.update_rule)
        if self.prune_threshold < 0:
            raise ValueError("prune_threshold must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def type2_objective(dictionary, penalty: PenaltyFamily, hyp: HyperState, y) -> float:
    """``y^T Sigma_y^{-1} y + log|Sigma_y| + sum_i f(gamma_i)``."""
    fac = sigma_y_factor(dictionary, hyp)
    y = np.asarray(y, dtype=float)
    return fac.quad(y) + fac.logdet + penalty.f_sum(hyp.gamma)


def _posterior_stats(phi, hyp: HyperState, y):
    """Posterior mean, posterior variance diagonal and ``phi_i^T Sigma^-1 phi_i`` on the active set."""
    fac = sigma_y_factor(phi, hyp)
    act = hyp.active
    pa = phi[:, act]
    g = hyp.gamma[act]
    sy = fac.solve(y)
    mu = g * (pa.T @ sy)
    q = fac.col_quad(pa)
    s_diag = g - g * g * q
    return fac, act, mu, s_diag, q


def mackay_update(dictionary, hyp: HyperState, y, prune_threshold: float = 1e-12,
                  strict: bool = False) -> np.ndarray:
    """One MacKay / RVM fixed-point step ``gamma_i <- mu_i^2 / (1 - S_ii / gamma_i)``.

    Assumes a flat hyperprior. Variances already at zero stay at zero, and
    new values below ``prune_threshold`` are set to zero. A non-positive
    denominator prunes the coordinate (or raises ``DegenerateUpdate`` when
    ``strict``).
    """
    if hyp.lam <= 0:
        raise ValueError("mackay_update requires lam > 0")
    phi = _as_matrix(dictionary)
    y = np.asarray(y, dtype=float)
    new = np.zeros(phi.shape[1])
    if hyp.active.size == 0:
        return new
    _, act, mu, _, q = _posterior_stats(phi, hyp, y)
    # 1 - S_ii/gamma_i equals gamma_i * phi_i^T Sigma_y^{-1} phi_i
    denom = hyp.gamma[act] * q
    bad = denom <= 1e-300
    if strict and np.any(bad):
        raise DegenerateUpdate(f"non-positive MacKay denominator at {act[bad].tolist()}")
    val = np.where(bad, 0.0, mu * mu / np.where(bad, 1.0, denom))
    val[val < prune_threshold] = 0.0
    new[act] = val
    return new


def em_update(dictionary, penalty: PenaltyFamily, hyp: HyperState, y,
              prune_threshold: float = 1e-12) -> np.ndarray:
    """One EM step: ``gamma_i <- argmin_g (mu_i^2 + S_ii)/g + log g + f(g)``.

    For the flat hyperprior this is ``mu_i^2 + S_ii``. Never increases
    :func:`type2_objective`.
    """
    if hyp.lam <= 0:
        raise ValueError("em_update requires lam > 0")
    phi = _as_matrix(dictionary)
    y = np.asarray(y, dtype=float)
    new = np.zeros(phi.shape[1])
    if hyp.active.size == 0:
        return new
    _, act, mu, s_diag, _ = _posterior_stats(phi, hyp, y)
    val = penalty.gamma_star(mu * mu + np.maximum(s_diag, 0.0))
    val[val < prune_threshold] = 0.0
    new[act] = val
    return new


def _init_gamma(m, opts, y, phi, lam):
    if opts.gamma_init is not None:
        return np.array(opts.gamma_init, dtype=float).reshape(-1).copy()
    # scale so that Phi Gamma Phi^T carries roughly the signal power
    power = max(float(y @ y) / phi.shape[0] - lam, 0.0)
    return np.full(m, max(power, 1e-2))


def solve_type2(dictionary, penalty: PenaltyFamily, lam: float, y,
                opts: Type2Options | None = None) -> SolveReport:
    """Empirical Bayes estimate of ``gamma`` followed by the posterior mean.

    ``opts.update_rule`` selects MacKay, EM or coefficient-space reweighted
    l1. MacKay and reweighted l1 assume a flat hyperprior. MacKay falls
    back to EM if the objective rises for ``mackay_patience`` consecutive
    steps.
    """
    opts = opts or Type2Options()
    if lam <= 0:
        raise ValueError("solve_type2 requires lam > 0")
    rule = opts.update_rule
    if rule in (UpdateRule.MACKAY, UpdateRule.REWEIGHTED_L1) and not penalty.is_flat:
        raise ValueError(f"{rule.value} updates assume a flat hyperprior (penalty 'ard')")
    t0 = time.perf_counter()
    phi = _as_matrix(dictionary)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, m = phi.shape
    if not np.any(y):
        return SolveReport(np.zeros(m), np.zeros(m), [float(n * np.log(lam))], 0, True,
                           time.perf_counter() - t0, {"rule": rule.value})
    if rule is UpdateRule.REWEIGHTED_L1:
        return _solve_type2_rl1(phi, penalty, lam, y, opts, t0)

    gamma = _init_gamma(m, opts, y, phi, lam)
    obj = type2_objective(phi, penalty, HyperState(gamma, lam), y)
    trace = [obj]
    converged = False
    rises = 0
    fallback_at = None
    it = 0
    for it in range(1, opts.max_iters + 1):
        hyp = HyperState(gamma, lam)
        if rule is UpdateRule.MACKAY and fallback_at is None:
            gamma = mackay_update(phi, hyp, y, opts.prune_threshold)
        else:
            gamma = em_update(phi, penalty, hyp, y, opts.prune_threshold)
        new_obj = type2_objective(phi, penalty, HyperState(gamma, lam), y)
        trace.append(new_obj)
        rises = rises + 1 if new_obj > obj else 0
        if rises >= opts.mackay_patience and fallback_at is None and rule is UpdateRule.MACKAY:
            fallback_at = it
        change = abs(obj - new_obj) / max(1.0, abs(new_obj))
        obj = new_obj
        if change < opts.tol:
            converged = True
            break
    hyp = HyperState(gamma, lam)
    x = posterior_mean(phi, hyp, y)
    return SolveReport(x, gamma, trace, it, converged, time.perf_counter() - t0,
                       {"rule": rule.value, "lambda": lam, "em_fallback_at": fallback_at})


def _solve_type2_rl1(phi, penalty, lam, y, opts, t0):
    # Majorize log|Sigma_y| by its tangent z^T gamma; minimizing the bound over
    # gamma gives the weighted-l1 step with weights 2*sqrt(z).
    n, m = phi.shape
    gamma = _init_gamma(m, opts, y, phi, lam)
    x = posterior_mean(phi, HyperState(gamma, lam), y)
    value, gamma = g2_penalty(phi, penalty, lam, x)
    r = y - phi @ x
    obj = float(r @ r + lam * value)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        fac = sigma_y_factor(phi, HyperState(gamma, lam))
        z = fac.col_quad(phi)
        w = 2.0 * np.sqrt(z)
        x_new = solve_wl1(WL1Problem(phi, y, w, WL1Mode.penalized(lam)))
        value, gamma = g2_penalty(phi, penalty, lam, x_new,
                                  gamma0=np.abs(x_new) / np.sqrt(z))
        r = y - phi @ x_new
        new_obj = float(r @ r + lam * value)
        trace.append(new_obj)
        change = abs(obj - new_obj) / max(1.0, abs(new_obj))
        step = np.linalg.norm(x_new - x)
        x = x_new
        obj = new_obj
        if change < opts.tol and step <= 1e-8 * max(1.0, np.linalg.norm(x)):
            converged = True
            break
    gamma = np.where(gamma < opts.prune_threshold, 0.0, gamma)
    x_post = posterior_mean(phi, HyperState(gamma, lam), y)
    return SolveReport(x_post, gamma, trace, it, converged, time.perf_counter() - t0,
                       {"rule": UpdateRule.REWEIGHTED_L1.value, "lambda": lam, "x_l1": x})


# ---------------------------------------------------------------------------
# Noiseless maximally sparse recovery
# ---------------------------------------------------------------------------

def eta_weights(dictionary, x, alpha: float, q: float = 1.0) -> np.ndarray:
    """Reweighting functions ``[phi_i^T (alpha I + Phi |X|^2 Phi^T)^{-1} phi_i]^q``.

    ``alpha = 0`` falls back to the pseudo-inverse.

    Raises
    ------
    SingularSystem
        If the pseudo-inverse leaves some weight non-positive or non-finite.
    """
    if alpha < 0 or q <= 0:
        raise ValueError("eta_weights requires alpha >= 0 and q > 0")
    phi = _as_matrix(dictionary)
    x = np.asarray(x, dtype=float)
    x2 = x * x
    act = np.flatnonzero(x2 > 0)
    if alpha > 0:
        fac = sigma_y_factor(phi, HyperState(x2, alpha))
        quad = fac.col_quad(phi)
    else:
        pa = phi[:, act]
        mat = (pa * x2[act]) @ pa.T
        quad = np.einsum("ij,ij->j", phi, np.linalg.pinv(mat, hermitian=True) @ phi)
        if np.any(quad <= 0) or not np.all(np.isfinite(quad)):
            raise SingularSystem("eta weights undefined: pseudo-inverse is rank-deficient")
    return quad ** q


@dataclass
class NoiselessOptions:
    max_iters: int = 30
    tol: float = 1e-6
    alpha0: float | None = None
    alpha_decay: float = 0.1
    alpha_min: float = 1e-10
    wl1_tol: float = 1e-9
    wl1_max_iters: int = 20000
    feasibility_tol: float = 1e-8


def alpha_schedule(y, opts: NoiselessOptions):
    y = np.asarray(y, dtype=float)
    a0 = opts.alpha0 if opts.alpha0 is not None else 1e-2 * float(y @ y) / y.size
    k = 0
    while True:
        yield max(opts.alpha_min, a0 * opts.alpha_decay ** k)
        k += 1


def solve_type2_noiseless(dictionary, y, alpha_schedule_=None, q: float = 1.0,
                          opts: NoiselessOptions | None = None) -> SolveReport:
    """Reweighted l1 for ``min g2(x) s.t. y = Phi x`` with eta weights.

    Starts from unit weights (so the first iterate is the plain l1 solution),
    then alternates equality-constrained weighted l1 and
    ``w <- eta(x; alpha_k, q)`` with a decreasing ``alpha_k``. Stops once the
    support is unchanged and weights move by less than ``tol`` (relative).

    ``objective_trace`` records the weighted l1 objective of each iterate
    under the weights that produced it; ``extra["x_l1"]`` keeps the first
    iterate.
    """
    opts = opts or NoiselessOptions()
    t0 = time.perf_counter()
    phi = _as_matrix(dictionary)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, m = phi.shape
    x_ls = np.linalg.lstsq(phi, y, rcond=None)[0]
    if np.linalg.norm(phi @ x_ls - y) > opts.feasibility_tol * max(1.0, np.linalg.norm(y)):
        raise InfeasibleConstraint("y is not in the range of Phi")
    schedule = alpha_schedule_ if alpha_schedule_ is not None else alpha_schedule(y, opts)
    schedule = iter(schedule)
    w = np.ones(m)
    x = solve_wl1(WL1Problem(phi, y, w, WL1Mode.EQUALITY), tol=opts.wl1_tol,
                  max_iters=opts.wl1_max_iters)
    x_l1 = x.copy()
    trace = [float(np.sum(w * np.abs(x)))]
    supports = [np.abs(x) > 1e-8 * max(np.abs(x).max(), 1e-300)]
    converged = False
    alphas = []
    it = 0
    for it in range(1, opts.max_iters + 1):
        alpha = next(schedule)
        alphas.append(alpha)
        w_new = eta_weights(phi, x, alpha, q)
        w_new = w_new / np.max(w_new)
        x_new = solve_wl1(WL1Problem(phi, y, w_new, WL1Mode.EQUALITY), tol=opts.wl1_tol,
                          max_iters=opts.wl1_max_iters)
        trace.append(float(np.sum(w_new * np.abs(x_new))))
        support = np.abs(x_new) > 1e-8 * max(np.abs(x_new).max(), 1e-300)
        w_change = np.linalg.norm(w_new - w) / max(np.linalg.norm(w), 1e-300)
        x_change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-300)
        same = np.array_equal(support, supports[-1])
        supports.append(support)
        x, w = x_new, w_new
        if same and x_change < opts.tol and (w_change < opts.tol or alpha <= opts.alpha_min):
            converged = True
            break
    gamma = np.abs(x)
    return SolveReport(x, gamma, trace, it, converged, time.perf_counter() - t0,
                       {"x_l1": x_l1, "alphas": alphas, "weights": w, "q": q})


__all__ = ["UpdateRule", "Type2Options", "type2_objective", "mackay_update", "em_update",
           "solve_type2", "eta_weights", "NoiselessOptions", "solve_type2_noiseless",
           "alpha_schedule", "SingularSystem"]
