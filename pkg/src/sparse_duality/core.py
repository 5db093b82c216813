"""Shared data model and marginal-covariance algebra.

The central object is ``Sigma_y = lam * I + Phi diag(gamma) Phi^T``. All
routines factor it by Cholesky restricted to the active columns
(``gamma > 0``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar

from .exceptions import NonConvergence, NotPositiveDefinite
from .penalties import PenaltyFamily


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Dense dictionary with unit l2-norm columns.

    Use :meth:`from_matrix` to build one from raw columns; the original
    norms are kept in ``column_norms`` so coefficients can be mapped back to
    the unnormalized scale (``x_raw = x / column_norms``).
    """

    matrix: np.ndarray
    column_norms: np.ndarray | None = None
    cluster_map: np.ndarray | None = None

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise ValueError(f"dictionary must be a non-empty 2-D array, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ValueError("dictionary contains non-finite entries")
        norms = np.linalg.norm(mat, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("dictionary columns must have unit norm; use Dictionary.from_matrix")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        cn = np.ones(mat.shape[1]) if self.column_norms is None else \
            np.array(self.column_norms, dtype=float).reshape(-1)
        if cn.shape != (mat.shape[1],):
            raise ValueError("column_norms must have one entry per column")
        cn.setflags(write=False)
        object.__setattr__(self, "column_norms", cn)
        if self.cluster_map is not None:
            cm = np.asarray(self.cluster_map, dtype=int).reshape(-1)
            if cm.shape != (mat.shape[1],):
                raise ValueError("cluster_map must assign every column to a cluster")
            if cm.min() < 0:
                raise ValueError("cluster ids must be non-negative")
            cm = cm.copy()
            cm.setflags(write=False)
            object.__setattr__(self, "cluster_map", cm)

    @classmethod
    def from_matrix(cls, matrix, cluster_map=None) -> "Dictionary":
        mat = np.array(matrix, dtype=float)
        if mat.ndim == 1:
            mat = mat.reshape(1, -1)
        norms = np.linalg.norm(mat, axis=0)
        if np.any(norms == 0.0):
            raise ValueError("dictionary has an all-zero column")
        mat = mat / norms
        # one extra pass trims the last ulp of normalization error
        mat = mat / np.linalg.norm(mat, axis=0)
        return cls(mat, norms, cluster_map)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    def clusters(self) -> dict[int, np.ndarray]:
        if self.cluster_map is None:
            return {i: np.array([i]) for i in range(self.m)}
        return {int(c): np.flatnonzero(self.cluster_map == c)
                for c in np.unique(self.cluster_map)}


@dataclass(frozen=True, eq=False)
class HyperState:
    """Variances ``gamma`` (one per column) and noise variance ``lam``."""

    gamma: np.ndarray
    lam: float

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float).reshape(-1)
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("gamma must be finite and non-negative")
        if not (self.lam >= 0) or not np.isfinite(self.lam):
            raise ValueError("lambda must be finite and non-negative")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.gamma > 0)


@dataclass
class SolveReport:
    """Outcome of an iterative solve.

    ``objective_trace`` holds the objective at the initial point followed by
    one entry per iteration, so ``len(objective_trace) == iterations + 1``.
    """

    x_hat: np.ndarray
    gamma_hat: np.ndarray
    objective_trace: list[float]
    iterations: int
    converged: bool
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["x_hat"] = np.asarray(self.x_hat, dtype=float).tolist()
        out["gamma_hat"] = np.asarray(self.gamma_hat, dtype=float).tolist()
        out["objective_trace"] = [float(v) for v in self.objective_trace]
        out["extra"] = _jsonable(self.extra)
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _as_matrix(dictionary) -> np.ndarray:
    if isinstance(dictionary, Dictionary):
        return dictionary.matrix
    return np.asarray(dictionary, dtype=float)


class SigmaFactor:
    """Cholesky factorization of ``Sigma_y`` with solve/logdet helpers."""

    def __init__(self, cov: np.ndarray):
        try:
            self._cho = linalg.cho_factor(cov, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefinite("Sigma_y is not positive definite") from exc
        diag = np.diag(self._cho[0])
        if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
            raise NotPositiveDefinite("Sigma_y is not positive definite")
        self.cov = cov
        self.logdet = 2.0 * float(np.sum(np.log(diag)))

    def solve(self, v):
        return linalg.cho_solve(self._cho, v, check_finite=False)

    def quad(self, v) -> float:
        """``v^T Sigma_y^{-1} v``."""
        return float(v @ self.solve(v))

    def col_quad(self, cols: np.ndarray) -> np.ndarray:
        """``phi_i^T Sigma_y^{-1} phi_i`` for every column of ``cols``."""
        if cols.shape[1] == 0:
            return np.zeros(0)
        return np.einsum("ij,ij->j", cols, self.solve(cols))


def sigma_y_factor(dictionary, hyp: HyperState) -> SigmaFactor:
    """Factor ``Sigma_y = lam I + Phi Gamma Phi^T``.

    Raises
    ------
    NotPositiveDefinite
        If ``lam == 0`` and ``Phi Gamma Phi^T`` is singular.
    """
    phi = _as_matrix(dictionary)
    act = hyp.active
    pa = phi[:, act]
    cov = (pa * hyp.gamma[act]) @ pa.T
    cov[np.diag_indices_from(cov)] += hyp.lam
    if hyp.lam == 0.0:
        # Cholesky may succeed on a numerically singular matrix; test rank.
        if act.size < phi.shape[0] or np.linalg.matrix_rank(cov) < phi.shape[0]:
            raise NotPositiveDefinite("lambda = 0 and Phi Gamma Phi^T is singular")
    return SigmaFactor(cov)


def posterior_mean(dictionary, hyp: HyperState, y, factor: SigmaFactor | None = None) -> np.ndarray:
    """Posterior mean ``Gamma Phi^T Sigma_y^{-1} y``; exactly zero where gamma is zero."""
    phi = _as_matrix(dictionary)
    y = np.asarray(y, dtype=float)
    fac = factor or sigma_y_factor(phi, hyp)
    x = np.zeros(phi.shape[1])
    act = hyp.active
    x[act] = hyp.gamma[act] * (phi[:, act].T @ fac.solve(y))
    return x


def dual_data_fit(dictionary, hyp: HyperState, y, factor: SigmaFactor | None = None) -> float:
    """Data-fit term ``y^T Sigma_y^{-1} y``.

    Equals ``min_x ||y - Phi x||^2 / lam + x^T Gamma^{-1} x``, attained at the
    posterior mean.
    """
    y = np.asarray(y, dtype=float)
    fac = factor or sigma_y_factor(dictionary, hyp)
    return fac.quad(y)


def type2_penalty_terms(dictionary, penalty: PenaltyFamily, hyp: HyperState,
                        factor: SigmaFactor | None = None) -> float:
    """``log|Sigma_y| + sum_i f(gamma_i)``."""
    fac = factor or sigma_y_factor(dictionary, hyp)
    return fac.logdet + penalty.f_sum(hyp.gamma)


# ---------------------------------------------------------------------------
# Coefficient-space Type II penalty
# ---------------------------------------------------------------------------

def _quad_over_gamma(x, gamma) -> float:
    x2 = np.asarray(x, dtype=float) ** 2
    nz = x2 > 0
    if np.any(gamma[nz] <= 0):
        return np.inf
    return float(np.sum(x2[nz] / gamma[nz]))


def _g2_objective(phi, penalty, lam, x, gamma) -> float:
    fac = sigma_y_factor(phi, HyperState(gamma, lam))
    return _quad_over_gamma(x, gamma) + fac.logdet + penalty.f_sum(gamma)


def _scalar_gamma_flat(x2: float, s: float) -> float:
    # argmin_gamma x2/gamma + log(1 + gamma s): root of s g^2 - s x2 g - x2 = 0
    if x2 == 0.0:
        return 0.0
    return 0.5 * (x2 + np.sqrt(x2 * x2 + 4.0 * x2 / s))


def _scalar_gamma_general(x2: float, s: float, penalty: PenaltyFamily, start: float) -> float:
    def obj(t):
        gam = np.exp(t)
        val = x2 / gam + np.log1p(gam * s) + float(penalty.f(np.array([gam]))[0])
        return val if np.isfinite(val) else 1e300

    upper = min(np.log(penalty.gamma_max), 40.0) if np.isfinite(penalty.gamma_max) else 40.0
    lower = -40.0
    res = minimize_scalar(obj, bounds=(lower, upper), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 500})
    t = float(res.x)
    # Polish with a few Newton steps in log-space (finite-difference derivatives).
    h = 1e-5
    for _ in range(20):
        f0, fp, fm = obj(t), obj(t + h), obj(t - h)
        d1 = (fp - fm) / (2 * h)
        d2 = (fp - 2 * f0 + fm) / (h * h)
        if d2 <= 0 or not np.isfinite(d2):
            break
        step = -d1 / d2
        t_new = min(max(t + step, lower), upper)
        if obj(t_new) > f0:
            break
        t = t_new
        if abs(step) < 1e-12:
            break
    return float(np.exp(t))


def g2_penalty(dictionary, penalty: PenaltyFamily, lam: float, x, *, gamma0=None,
               tol: float = 1e-10, max_sweeps: int = 500):
    """Evaluate the Type II coefficient-space penalty and its minimizing variances.

    ``g2(x) = min_{gamma >= 0} sum_i x_i^2/gamma_i + log|Sigma_y| + sum_i f(gamma_i)``
    with the convention ``0/0 = 0``. Minimization is by exact coordinate
    descent over ``gamma``: closed form when ``f = 0``, a bounded 1-D search
    otherwise.

    Returns
    -------
    value : float
    gamma_star : ndarray of shape (m,)

    Raises
    ------
    NonConvergence
        If ``max_sweeps`` sweeps do not reach relative change ``tol``.
    """
    if lam <= 0:
        raise ValueError("g2_penalty requires lam > 0")
    phi = _as_matrix(dictionary)
    n, m = phi.shape
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = x * x
    flat = penalty.is_flat
    if gamma0 is None:
        gamma = x2.copy() if flat else np.where(x2 > 0, x2, 1e-2)
        if not flat:
            gamma = np.minimum(gamma, 0.5 * penalty.gamma_max) if np.isfinite(penalty.gamma_max) else gamma
    else:
        gamma = np.array(gamma0, dtype=float).reshape(-1).copy()
        if flat:
            gamma[x2 == 0] = 0.0
            gamma[(x2 > 0) & (gamma <= 0)] = x2[(x2 > 0) & (gamma <= 0)]

    def full_state(gam):
        fac = sigma_y_factor(phi, HyperState(gam, lam))
        sinv = fac.solve(np.eye(n))
        return sinv, _quad_over_gamma(x, gam) + fac.logdet + penalty.f_sum(gam)

    sinv, value = full_state(gamma)
    for sweep in range(1, max_sweeps + 1):
        for i in range(m):
            phi_i = phi[:, i]
            u = sinv @ phi_i
            big_s = float(phi_i @ u)
            g_old = gamma[i]
            # s = phi_i^T Sigma_{-i}^{-1} phi_i
            denom = 1.0 - g_old * big_s
            s = big_s / denom if denom > 1e-8 else -1.0
            if not (np.isfinite(s) and s > 0):
                # rank-one downdate lost precision (tiny lam): refactor without column i
                held = gamma[i]
                gamma[i] = 0.0
                fac_i = sigma_y_factor(phi, HyperState(gamma, lam))
                gamma[i] = held
                s = float(phi_i @ fac_i.solve(phi_i))
            if flat:
                g_new = _scalar_gamma_flat(x2[i], s)
            else:
                g_new = _scalar_gamma_general(x2[i], s, penalty, g_old)
            delta = g_new - g_old
            if delta != 0.0:
                sinv -= np.outer(u, u) * (delta / (1.0 + delta * big_s))
                gamma[i] = g_new
        sinv, new_value = full_state(gamma)
        change = abs(value - new_value) / max(1.0, abs(new_value))
        value = new_value
        if change < tol:
            return value, gamma
    raise NonConvergence(f"g2_penalty did not converge in {max_sweeps} sweeps",
                         result=(value, gamma))


# ---------------------------------------------------------------------------
# Concavity diagnostics
# ---------------------------------------------------------------------------

@dataclass
class ConcavityReport:
    passed: bool
    concavity_violation: float
    monotonicity_violation: float
    segments: int

    @property
    def worst_violation(self) -> float:
        return max(self.concavity_violation, self.monotonicity_violation)


def check_gamma_concavity(dictionary, penalty, lam: float, samples: int = 100, seed=0,
                          *, segments=None, tol: float = 1e-9) -> ConcavityReport:
    """Numerically test that ``gamma -> log|Sigma_y| + sum f(gamma)`` is concave
    and non-decreasing on the positive orthant.

    ``penalty`` may be a :class:`PenaltyFamily` or any vectorized callable
    returning ``f(gamma)`` elementwise. Random segments are drawn from a
    log-uniform distribution over ``[1e-3, 1e2]`` unless explicit
    ``segments`` (pairs of endpoints) are supplied. Violations are reported as
    absolute magnitudes; the check passes when both are below
    ``tol * (1 + |value|)``.
    """
    if lam <= 0:
        raise ValueError("check_gamma_concavity requires lam > 0")
    phi = _as_matrix(dictionary)
    m = phi.shape[1]
    f = penalty.f if isinstance(penalty, PenaltyFamily) else penalty

    def value(gam):
        fac = sigma_y_factor(phi, HyperState(gam, lam))
        return fac.logdet + float(np.sum(f(np.asarray(gam, dtype=float))))

    if segments is None:
        rng = np.random.default_rng(seed)
        segments = [(10.0 ** rng.uniform(-3, 2, m), 10.0 ** rng.uniform(-3, 2, m))
                    for _ in range(samples)]
    worst_cc = worst_mono = 0.0
    passed = True
    for a, b in segments:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        fa, fb = value(a), value(b)
        fmid = value(0.5 * (a + b))
        scale = 1.0 + max(abs(fa), abs(fb), abs(fmid))
        cc = max(0.0, 0.5 * (fa + fb) - fmid)
        fup = value(np.maximum(a, b))
        mono = max(0.0, max(fa, fb) - fup)
        worst_cc = max(worst_cc, cc)
        worst_mono = max(worst_mono, mono)
        if cc > tol * scale or mono > tol * (1.0 + abs(fup)):
            passed = False
    return ConcavityReport(passed, worst_cc, worst_mono, len(segments))


def weighted_ridge(phi: np.ndarray, y: np.ndarray, lam: float, gamma: np.ndarray,
                   gram: np.ndarray | None = None, phity: np.ndarray | None = None) -> np.ndarray:
    """``argmin_x ||y - Phi x||^2 + lam * sum_i x_i^2 / gamma_i`` (``x_i = 0`` where ``gamma_i = 0``).

    Works in whichever of the coefficient or signal space is smaller.
    """
    n, m = phi.shape
    x = np.zeros(m)
    act = np.flatnonzero(gamma > 0)
    if act.size == 0:
        return x
    if act.size <= n:
        g = gram[np.ix_(act, act)] if gram is not None else phi[:, act].T @ phi[:, act]
        b = phity[act] if phity is not None else phi[:, act].T @ y
        a = g.copy()
        a[np.diag_indices_from(a)] += lam / gamma[act]
        try:
            x[act] = linalg.cho_solve(linalg.cho_factor(a, check_finite=False), b,
                                      check_finite=False)
        except linalg.LinAlgError:
            x[act] = np.linalg.lstsq(a, b, rcond=None)[0]
        return x
    return posterior_mean(phi, HyperState(gamma, lam), y)
