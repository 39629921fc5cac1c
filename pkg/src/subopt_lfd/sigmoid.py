"""Four-parameter sigmoid regression of return against noise level.

    sigma(eta) = c / (1 + exp(-k (eta - x0))) + y0

Fits use multi-start Gauss-Newton with backtracking.  The sixteen starts
are built from the data (range, minimum and a median-crossing location),
so fitting ``a*y + b`` with ``a > 0`` yields ``(a*c, k, x0, a*y0 + b)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points

EXP_CLAMP = 500.0


@dataclass(frozen=True)
class SigmoidParams:
    c: float
    k: float
    x0: float
    y0: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.c, self.k, self.x0, self.y0])):
            raise ValueError(f"sigmoid parameters must be finite: {self}")

    def as_array(self):
        return np.array([self.c, self.k, self.x0, self.y0])

    @classmethod
    def from_array(cls, p):
        return cls(*(float(v) for v in p))

    def __call__(self, eta):
        return sigmoid_eval(self, eta)

    def to_dict(self):
        return {"c": self.c, "k": self.k, "x0": self.x0, "y0": self.y0}


def _logistic(k, x0, eta):
    z = np.clip(-k * (np.asarray(eta, dtype=np.float64) - x0), -EXP_CLAMP, EXP_CLAMP)
    return 1.0 / (1.0 + np.exp(z))


def sigmoid_eval(p: SigmoidParams, eta):
    """Closed-form sigmoid; scalar in, scalar out."""
    out = p.c * _logistic(p.k, p.x0, eta) + p.y0
    return float(out) if np.ndim(out) == 0 else out


def _model(theta, eta):
    c, k, x0, y0 = theta
    return c * _logistic(k, x0, eta) + y0


def _jacobian(theta, eta):
    c, k, x0, _ = theta
    s = _logistic(k, x0, eta)
    ds = s * (1.0 - s)
    return np.column_stack([s, c * ds * (eta - x0), -c * ds * k, np.ones_like(eta)])


def gauss_newton(theta, eta, y, max_iter=200, rtol=1e-14):
    """Gauss-Newton with step halving; returns ``(theta, ss_res)``."""
    theta = np.asarray(theta, dtype=np.float64)
    r = y - _model(theta, eta)
    ss = float(r @ r)
    for _ in range(max_iter):
        J = _jacobian(theta, eta)
        norms = np.linalg.norm(J, axis=0)
        norms[norms == 0] = 1.0
        step = np.linalg.lstsq(J / norms, r, rcond=None)[0] / norms
        alpha, improved = 1.0, False
        for _ in range(40):
            cand = theta + alpha * step
            # Oversized trial steps may overflow; they are rejected below.
            with np.errstate(over="ignore", invalid="ignore"):
                rc = y - _model(cand, eta)
                ssc = float(rc @ rc)
            if np.all(np.isfinite(cand)) and np.isfinite(ssc) and ssc < ss:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        gain = ss - ssc
        theta, r, ss = cand, rc, ssc
        if gain <= rtol * max(ss, 1e-300) or ss == 0.0:
            break
    return theta, ss


def initial_guesses(eta, y):
    """Sixteen deterministic starts: 2 slope signs x 2 slope sizes x 4 midpoints."""
    order = np.lexsort((y, eta))
    eta_s, y_s = eta[order], y[order]
    span = max(float(eta_s[-1] - eta_s[0]), 1e-12)
    lo = float(eta_s[0])
    c0 = float(y.max() - y.min())
    y0 = float(y.min())
    mid = float(eta_s[np.argmin(np.abs(y_s - np.median(y)))])
    centres = [lo + 0.25 * span, lo + 0.5 * span, lo + 0.75 * span, mid]
    starts = []
    for sign in (-1.0, 1.0):
        for mag in (4.0, 12.0):
            for x0 in centres:
                starts.append(np.array([c0, sign * mag / span, x0, y0]))
    return starts


@dataclass
class FitReport:
    params: SigmoidParams
    r_squared: float
    residuals: np.ndarray
    n_points: int
    degenerate: bool = False
    start_ss: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def ss_res(self) -> float:
        return float(np.sum(self.residuals**2))

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "r_squared": self.r_squared,
            "residuals": [float(v) for v in self.residuals],
            "n_points": self.n_points,
            "degenerate": self.degenerate,
            "start_ss": [float(v) for v in self.start_ss],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(SigmoidParams(**d["params"]), d["r_squared"], np.asarray(d["residuals"]),
                   d["n_points"], d.get("degenerate", False), d.get("start_ss", []),
                   d.get("provenance", {}))


def fit_sigmoid(eta, y=None) -> FitReport:
    """Least-squares sigmoid through ``(eta, y)`` points.

    Accepts either two arrays or a single sequence of ``(eta, y)`` pairs.
    Residuals are reported in ``(eta, y)``-sorted order so the result does
    not depend on input order.
    """
    eta, y = check_points(eta, y)
    order = np.lexsort((y, eta))
    eta, y = eta[order], y[order]
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if np.all(y == y[0]):
        params = SigmoidParams(0.0, 0.0, 0.5, float(y[0]))
        return FitReport(params, 1.0, np.zeros_like(y), len(y), degenerate=True)
    best, best_ss, start_ss = None, np.inf, []
    for start in initial_guesses(eta, y):
        theta, ss = gauss_newton(start, eta, y)
        start_ss.append(ss)
        if best is None or ss < best_ss - 1e-12 * ss_tot:
            best, best_ss = theta, ss
    residuals = y - _model(best, eta)
    ss_res = float(residuals @ residuals)
    r2 = 1.0 - ss_res / ss_tot
    return FitReport(SigmoidParams.from_array(best), r2, residuals, len(y), False, start_ss)


def r_squared(y, fitted) -> float:
    y = np.asarray(y, dtype=np.float64)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - np.asarray(fitted)) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else -np.inf
    return 1.0 - ss_res / ss_tot


def level_means(eta, y):
    """Sorted distinct levels and the mean of ``y`` at each."""
    eta = np.asarray(eta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    levels = np.unique(eta)
    return levels, np.array([y[eta == e].mean() for e in levels])


def ordinal_baseline_r2(eta, y=None) -> float:
    """R^2 of the best affine map from level rank to per-level mean return.

    This is the equal-spacing relationship that pairwise Luce-Shepard
    ranking implies between consecutive noise levels.
    """
    eta, y = check_points(eta, y, min_points=1)
    levels, means = level_means(eta, y)
    if len(levels) < 3:
        raise ValueError(f"need at least 3 distinct noise levels, got {len(levels)}")
    rank = np.arange(len(levels), dtype=np.float64)
    A = np.column_stack([rank, np.ones_like(rank)])
    coef = np.linalg.lstsq(A, means, rcond=None)[0]
    return r_squared(means, A @ coef)


class SigmoidRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_sigmoid`.

    ``X`` holds noise levels (shape ``(n,)`` or ``(n, 1)``), ``y`` returns.
    ``score`` is the coefficient of determination, as for any sklearn
    regressor.
    """

    def fit(self, X, y):
        eta = np.asarray(X, dtype=np.float64).reshape(-1)
        self.report_ = fit_sigmoid(eta, y)
        self.params_ = self.report_.params
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return np.asarray(sigmoid_eval(self.params_, np.asarray(X, dtype=np.float64).reshape(-1)),
                          dtype=np.float64).reshape(-1)
