"""Calibration fit of the ``A sin^2(sqrt(B P))`` efficiency law."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import FitError
from .spectral import EfficiencyCurve, optimal_pump_power

DEFAULT_B_STARTS = (0.005, 0.01, 0.02, 0.04)


def _model(a, b, p):
    return a * np.sin(np.sqrt(b * p)) ** 2


def _jacobian(a, b, p):
    u = np.sqrt(b * p)
    d_a = np.sin(u) ** 2
    # d/dB sin^2(sqrt(BP)) = P * sin(2u) / (2u), finite at u = 0
    d_b = a * p * np.sinc(2.0 * u / np.pi)
    return np.column_stack([d_a, d_b])


def _linear_a(b, p, eta):
    s = np.sin(np.sqrt(b * p)) ** 2
    denom = s @ s
    return (s @ eta) / denom if denom > 0 else 0.0


def levenberg_marquardt(p, eta, a0, b0, max_iter=200, xtol=1e-9, weights=None):
    """Damped Gauss-Newton on (A, B) with B kept positive.

    Returns ``(a, b, sse, n_iter, converged)``.
    """
    w = np.ones_like(eta) if weights is None else np.asarray(weights, dtype=float)
    theta = np.array([a0, b0], dtype=float)
    r = w * (_model(*theta, p) - eta)
    sse = r @ r
    lam = 1e-3
    for it in range(1, max_iter + 1):
        jac = w[:, None] * _jacobian(theta[0], theta[1], p)
        jtj = jac.T @ jac
        grad = jac.T @ r
        while True:
            damped = jtj + lam * np.diag(np.diag(jtj) + 1e-300)
            try:
                step = -np.linalg.solve(damped, grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                if lam > 1e16:
                    return theta[0], theta[1], sse, it, False
                continue
            trial = theta + step
            if trial[1] <= 0:
                lam *= 10.0
            else:
                r_trial = w * (_model(*trial, p) - eta)
                sse_trial = r_trial @ r_trial
                if sse_trial <= sse:
                    break
                lam *= 10.0
            if lam > 1e16:
                # no downhill step left: stationary to working precision
                return theta[0], theta[1], sse, it, True
        rel = np.max(np.abs(step) / np.maximum(np.abs(trial), 1e-300))
        theta, r, sse = trial, r_trial, sse_trial
        lam = max(lam / 10.0, 1e-12)
        if rel < xtol:
            return theta[0], theta[1], sse, it, True
    return theta[0], theta[1], sse, max_iter, False


class EfficiencyLawRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of ``eta = A sin^2(sqrt(B P))``.

    The objective is multimodal in B, so the damped least-squares solver
    is restarted from every value in ``b_starts`` and the lowest residual
    wins.

    Parameters
    ----------
    b_starts : sequence of float
        Initial B values (1/mW).
    max_iter : int
        Iteration budget per start.
    xtol : float
        Convergence threshold on the relative parameter step.

    Attributes
    ----------
    a_, b_ : float
        Fitted peak efficiency and B.
    rms_ : float
        Root-mean-square misfit.
    n_iter_ : int
        Iterations used by the winning start.
    """

    def __init__(self, b_starts=DEFAULT_B_STARTS, max_iter=200, xtol=1e-9):
        self.b_starts = b_starts
        self.max_iter = max_iter
        self.xtol = xtol

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, ensure_min_samples=1, y_numeric=True)
        p = X[:, 0]
        if len(p) < 4:
            raise FitError(f"need at least 4 samples, got {len(p)}")
        if np.any(p < 0):
            raise FitError("negative pump power in calibration data")
        if not np.any(y != 0):
            raise FitError("all efficiencies are zero; A and B are undetermined")
        weights = None if sample_weight is None else np.sqrt(np.asarray(sample_weight, float))

        best = None
        for b0 in self.b_starts:
            a0 = _linear_a(b0, p, y)
            if a0 <= 0:
                a0 = float(np.max(y))
            a, b, sse, n_iter, ok = levenberg_marquardt(
                p, y, a0, b0, self.max_iter, self.xtol, weights)
            if best is None or (ok, -sse) > (best[4], -best[2]):
                best = (a, b, sse, n_iter, ok)

        a, b, sse, n_iter, ok = best
        rms = float(np.sqrt(sse / len(p)))
        if not ok:
            raise FitError("no start converged within the iteration budget",
                           best=(float(a), float(b), rms))
        self.a_, self.b_, self.rms_, self.n_iter_ = float(a), float(b), rms, n_iter
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, ("a_", "b_"))
        X = check_array(X)
        return _model(self.a_, self.b_, X[:, 0])

    @property
    def optimal_power_(self):
        check_is_fitted(self, "b_")
        return optimal_pump_power(self.b_)


def fit_efficiency_curve(curve: EfficiencyCurve, **kwargs):
    """Fit a calibration curve; returns ``(A, B, rms_residual)``."""
    p = np.asarray(curve.power_mw, dtype=float).reshape(-1, 1)
    model = EfficiencyLawRegressor(**kwargs).fit(p, np.asarray(curve.efficiency, float))
    return model.a_, model.b_, model.rms_
