"""Weighted l1 programs.

Equality mode solves ``min sum_i w_i |x_i|  s.t.  y = Phi x`` as a linear
program (HiGHS) and reports the duality gap of the returned primal/dual
pair. Penalized mode solves
``min ||y - Phi x||^2 + lam * sum_i w_i |x_i|`` by cyclic coordinate
descent with an active-set polish, falling back to the exact LARS-lasso
path when descent is slow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from sklearn.linear_model import lars_path

from .core import _as_matrix
from .exceptions import InfeasibleConstraint, NonConvergence


@dataclass(frozen=True)
class WL1Mode:
    lam: float | None = None

    @classmethod
    def penalized(cls, lam: float) -> "WL1Mode":
        if lam <= 0:
            raise ValueError("penalized mode requires lam > 0")
        return cls(float(lam))

    @property
    def is_equality(self) -> bool:
        return self.lam is None


WL1Mode.EQUALITY = WL1Mode(None)


@dataclass
class WL1Problem:
    dictionary: object
    y: np.ndarray
    weights: np.ndarray
    mode: WL1Mode = field(default_factory=lambda: WL1Mode.EQUALITY)

    def __post_init__(self):
        self.phi = _as_matrix(self.dictionary)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        n, m = self.phi.shape
        if self.y.shape != (n,):
            raise ValueError(f"y has length {self.y.size}, expected {n}")
        if self.weights.shape != (m,):
            raise ValueError(f"weights has length {self.weights.size}, expected {m}")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be positive and finite")


@dataclass
class WL1Info:
    objective: float
    duality_gap: float
    dual: np.ndarray | None
    iterations: int
    polished: bool
    kkt_residual: float = 0.0


def _check_range(phi, y, feas_tol):
    coef, *_ = np.linalg.lstsq(phi, y, rcond=None)
    resid = np.linalg.norm(phi @ coef - y)
    if resid > feas_tol * max(1.0, np.linalg.norm(y)):
        raise InfeasibleConstraint(f"y is not in the range of Phi (residual {resid:.3g})")


def _solve_equality(phi, y, w, tol, feas_tol=1e-8):
    n, m = phi.shape
    _check_range(phi, y, feas_tol)
    # split x = xp - xm with xp, xm >= 0; HiGHS returns the equality duals directly
    res = optimize.linprog(np.concatenate([w, w]), A_eq=np.hstack([phi, -phi]), b_eq=y,
                           bounds=(0, None), method="highs",
                           options={"primal_feasibility_tolerance": 1e-10,
                                    "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        raise InfeasibleConstraint("weighted l1 program is infeasible")
    if res.status != 0:
        raise NonConvergence(f"weighted l1 (equality) LP failed: {res.message}")
    x = res.x[:m] - res.x[m:]
    x[np.abs(x) <= 1e-13 * max(1.0, np.max(np.abs(x)))] = 0.0
    nu = np.asarray(res.eqlin.marginals, dtype=float)
    ratio = float(np.max(np.abs(phi.T @ nu) / w))
    if ratio > 1.0:
        nu = nu / ratio
    obj = float(np.sum(w * np.abs(x)))
    gap = obj - float(y @ nu)
    if gap > max(tol, 1e-7) * (1.0 + abs(obj)):
        raise NonConvergence(f"weighted l1 (equality) duality gap {gap:.3g} above tolerance",
                             result=x)
    return x, WL1Info(obj, max(gap, 0.0), nu, int(res.nit), False)


_LARS_AFTER = 200


def _kkt_residual(grad, x, thresh):
    on = x != 0
    res_on = np.abs(grad[on] + thresh[on] * np.sign(x[on]))
    res_off = np.maximum(np.abs(grad[~on]) - thresh[~on], 0.0)
    return max(res_on.max(initial=0.0), res_off.max(initial=0.0))


def _solve_penalized(phi, y, w, lam, tol, max_iters, x0=None):
    n, m = phi.shape
    gram = phi.T @ phi
    c = phi.T @ y
    thresh = lam * w  # on the gradient of ||y - Phi x||^2, i.e. 2(Gx - c)
    diag = np.diag(gram).copy()
    x = np.zeros(m) if x0 is None else np.array(x0, dtype=float)
    gx = gram @ x
    kkt_tol = tol * max(1.0, 2.0 * np.max(np.abs(c)))
    it = 0
    for it in range(1, max_iters + 1):
        for i in range(m):
            xi = x[i]
            rho_i = c[i] - gx[i] + diag[i] * xi
            new = np.sign(rho_i) * max(abs(rho_i) - 0.5 * thresh[i], 0.0) / diag[i]
            if new != xi:
                gx += gram[:, i] * (new - xi)
                x[i] = new
        grad = 2.0 * (gx - c)
        if _kkt_residual(grad, x, thresh) <= kkt_tol:
            return x, WL1Info(_pen_obj(phi, y, w, lam, x), 0.0, None, it, False,
                              _kkt_residual(grad, x, thresh))
        if it == _LARS_AFTER:
            # slow coordinate descent (small lam, correlated columns): try the exact path
            exact = _lars_penalized(phi, y, w, lam, gram, c, thresh)
            if exact is not None:
                res = _kkt_residual(2.0 * (gram @ exact - c), exact, thresh)
                if res <= kkt_tol:
                    return exact, WL1Info(_pen_obj(phi, y, w, lam, exact), 0.0, None, it,
                                          True, res)
        if it % 5 == 0:
            polished = _polish_penalized(gram, c, thresh, x)
            if polished is not None:
                grad = 2.0 * (gram @ polished - c)
                res = _kkt_residual(grad, polished, thresh)
                if res <= kkt_tol:
                    return polished, WL1Info(_pen_obj(phi, y, w, lam, polished), 0.0, None,
                                             it, True, res)
    raise NonConvergence(f"weighted l1 (penalized) did not reach KKT tolerance in {max_iters} sweeps",
                         result=x)


def _lars_penalized(phi, y, w, lam, gram, c, thresh):
    # columns scaled by 1/w turn the weights into a plain lasso; sklearn's
    # objective is ||.||^2 / (2 n) + alpha ||u||_1
    n = phi.shape[0]
    scaled = phi / w
    try:
        _, _, coefs = lars_path(scaled, y, method="lasso", alpha_min=lam / (2.0 * n))
    except (ValueError, FloatingPointError, linalg.LinAlgError):
        return None
    x = coefs[:, -1] / w
    polished = _polish_penalized(gram, c, thresh, x)
    return x if polished is None else polished


def _polish_penalized(gram, c, thresh, x):
    support = np.flatnonzero(x)
    if support.size == 0 or support.size > np.linalg.matrix_rank(gram):
        return None
    sgn = np.sign(x[support])
    a = gram[np.ix_(support, support)]
    b = c[support] - 0.5 * thresh[support] * sgn
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            coef = linalg.solve(a, b, assume_a="pos", check_finite=False)
    except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError):
        return None
    if np.any(np.sign(coef) != sgn):
        return None
    out = np.zeros_like(x)
    out[support] = coef
    return out


def _pen_obj(phi, y, w, lam, x):
    r = y - phi @ x
    return float(r @ r + lam * np.sum(w * np.abs(x)))


def solve_wl1(prob: WL1Problem, tol: float = 1e-8, max_iters: int = 20000,
              return_info: bool = False, x0=None):
    """Solve a weighted l1 program.

    Equality mode terminates once the duality gap is at most
    ``tol * (1 + |objective|)``; penalized mode once the subgradient
    optimality residual is at most ``tol`` (relative to ``max(1, ||2 Phi^T y||_inf)``).

    Raises
    ------
    InfeasibleConstraint
        Equality mode with ``y`` outside the range of ``Phi``.
    NonConvergence
        Iteration cap reached; the best iterate is attached as ``result``.
    """
    if prob.mode.is_equality:
        x, info = _solve_equality(prob.phi, prob.y, prob.weights, tol)
    else:
        x, info = _solve_penalized(prob.phi, prob.y, prob.weights, prob.mode.lam, tol,
                                   max_iters, x0)
    return (x, info) if return_info else x


def equality_dual_gap(phi, y, w, x, nu) -> float:
    """Duality gap of a primal/dual pair for the equality-mode program."""
    return float(np.sum(w * np.abs(x)) - y @ nu)
