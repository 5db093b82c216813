"""Sparse penalty families written in variational (Gaussian scale mixture) form.

Every family is described by a concave, non-decreasing ``h`` with
``g(x) = h(x**2)`` and the hyperprior term ``f`` satisfying

    h(z) = min_{gamma >= 0}  z / gamma + log(gamma) + f(gamma).

The minimizing variance is ``gamma_star(z) = 1 / h'(z)``; the same map gives
the closed-form M-step of the EM updates and the lambda estimate of the
lambda-learning objectives.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class PenaltyKind(str, enum.Enum):
    LP_NORM = "lp"
    LOG_SUM = "logsum"
    GAUSSIAN = "gaussian"
    ARD_FLAT = "ard"


@dataclass(frozen=True)
class PenaltyFamily:
    """A sparse prior, its ``h`` function and its variance penalty ``f``.

    Parameters
    ----------
    kind : PenaltyKind or str
        ``"lp"`` (``|x|**p``), ``"logsum"`` (``log(delta + |x|)``),
        ``"gaussian"`` (``x**2``) or ``"ard"`` (flat hyperprior, ``f = 0``).
    param : float, optional
        ``p`` in (0, 2] for ``"lp"`` (default 1) or ``delta > 0`` for
        ``"logsum"`` (default 1e-2). Ignored otherwise.
    """

    kind: PenaltyKind
    param: float | None = None

    def __post_init__(self):
        kind = PenaltyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PenaltyKind.LP_NORM:
            p = 1.0 if self.param is None else float(self.param)
            if not 0.0 < p <= 2.0:
                raise ValueError(f"LpNorm requires p in (0, 2], got {p}")
            object.__setattr__(self, "param", p)
        elif kind is PenaltyKind.LOG_SUM:
            delta = 1e-2 if self.param is None else float(self.param)
            if delta <= 0.0:
                raise ValueError(f"LogSum requires delta > 0, got {delta}")
            object.__setattr__(self, "param", delta)
        else:
            object.__setattr__(self, "param", None)

    # -- constructors -------------------------------------------------------
    @classmethod
    def lp(cls, p: float = 1.0) -> "PenaltyFamily":
        return cls(PenaltyKind.LP_NORM, p)

    @classmethod
    def log_sum(cls, delta: float = 1e-2) -> "PenaltyFamily":
        return cls(PenaltyKind.LOG_SUM, delta)

    @classmethod
    def gaussian(cls) -> "PenaltyFamily":
        return cls(PenaltyKind.GAUSSIAN)

    @classmethod
    def ard(cls) -> "PenaltyFamily":
        return cls(PenaltyKind.ARD_FLAT)

    @classmethod
    def parse(cls, spec: "str | PenaltyFamily") -> "PenaltyFamily":
        """Build a family from strings such as ``"lp:0.5"``, ``"logsum"``, ``"ard"``."""
        if isinstance(spec, PenaltyFamily):
            return spec
        name, _, arg = str(spec).strip().lower().partition(":")
        aliases = {"lp": "lp", "lpnorm": "lp", "l1": "lp", "logsum": "logsum",
                   "gaussian": "gaussian", "ridge": "gaussian", "ard": "ard",
                   "ardflat": "ard", "flat": "ard"}
        if name not in aliases:
            raise ValueError(f"unknown penalty {spec!r}")
        param = float(arg) if arg else (1.0 if name == "l1" else None)
        return cls(PenaltyKind(aliases[name]), param)

    def __str__(self):
        if self.param is None:
            return self.kind.value
        return f"{self.kind.value}:{self.param:g}"

    @property
    def is_flat(self) -> bool:
        """True when ``f`` is identically zero."""
        return self.kind is PenaltyKind.ARD_FLAT

    @property
    def gamma_max(self) -> float:
        """Upper end of the region where ``f`` is finite."""
        if self.kind is PenaltyKind.GAUSSIAN or (
                self.kind is PenaltyKind.LP_NORM and self.param == 2.0):
            return 1.0
        return np.inf

    # -- coefficient-space functions ----------------------------------------
    def h(self, z):
        z = np.asarray(z, dtype=float)
        kind = self.kind
        if kind is PenaltyKind.LP_NORM:
            return z ** (self.param / 2.0)
        if kind is PenaltyKind.LOG_SUM:
            return np.log(self.param + np.sqrt(z))
        if kind is PenaltyKind.GAUSSIAN:
            return z.copy()
        with np.errstate(divide="ignore"):
            return np.log(z) + 1.0

    def dh(self, z):
        """Derivative ``h'(z)``; infinite at ``z = 0`` for the sparse kinds."""
        z = np.asarray(z, dtype=float)
        kind = self.kind
        with np.errstate(divide="ignore"):
            if kind is PenaltyKind.LP_NORM:
                p = self.param
                return 0.5 * p * z ** (0.5 * p - 1.0)
            if kind is PenaltyKind.LOG_SUM:
                r = np.sqrt(z)
                return 1.0 / (2.0 * r * (self.param + r))
            if kind is PenaltyKind.GAUSSIAN:
                return np.ones_like(z)
            return 1.0 / z

    def g(self, x):
        return self.h(np.asarray(x, dtype=float) ** 2)

    def gamma_star(self, z):
        """``argmin_gamma z/gamma + log(gamma) + f(gamma)``, i.e. ``1/h'(z)``."""
        z = np.asarray(z, dtype=float)
        kind = self.kind
        if kind is PenaltyKind.LP_NORM:
            p = self.param
            return (2.0 / p) * z ** (1.0 - 0.5 * p)
        if kind is PenaltyKind.LOG_SUM:
            r = np.sqrt(z)
            return 2.0 * r * (self.param + r)
        if kind is PenaltyKind.GAUSSIAN:
            return np.ones_like(z)
        return z.copy()

    # -- variance-space function --------------------------------------------
    def f(self, gamma):
        """Hyperprior penalty ``f(gamma) = -2 log phi(gamma)``.

        The un-normalized conjugate of ``h``; ``+inf`` outside its domain.
        """
        gamma = np.asarray(gamma, dtype=float)
        kind = self.kind
        if kind is PenaltyKind.ARD_FLAT:
            return np.zeros_like(gamma)
        out = np.full(gamma.shape, np.inf)
        pos = gamma > 0
        gp = gamma[pos]
        if kind is PenaltyKind.GAUSSIAN or (kind is PenaltyKind.LP_NORM and self.param == 2.0):
            val = np.where(gp <= 1.0, -np.log(gp), np.inf)
        elif kind is PenaltyKind.LP_NORM:
            p = self.param
            val = (1.0 - 0.5 * p) * (0.5 * p * gp) ** (p / (2.0 - p)) - np.log(gp)
        else:
            delta = self.param
            s = 0.5 * (np.sqrt(delta * delta + 2.0 * gp) - delta)
            val = np.log(delta + s) - s * s / gp - np.log(gp)
        out[pos] = val
        return out

    def log_plus_f(self, gamma):
        """``log(gamma) + f(gamma)`` with its limit taken at ``gamma = 0``."""
        gamma = np.asarray(gamma, dtype=float)
        kind = self.kind
        out = np.empty(gamma.shape)
        pos = gamma > 0
        with np.errstate(divide="ignore"):
            out[pos] = np.log(gamma[pos]) + self.f(gamma[pos])
        if kind is PenaltyKind.ARD_FLAT:
            out[~pos] = -np.inf
        elif kind is PenaltyKind.LOG_SUM:
            out[~pos] = np.log(self.param)
        else:
            out[~pos] = 0.0
        return out

    def f_sum(self, gamma) -> float:
        if self.is_flat:
            return 0.0
        return float(np.sum(self.f(gamma)))
