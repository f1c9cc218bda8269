"""Least-squares fits of decay, recovery and diffusion-attenuation curves.

The regressors follow the scikit-learn estimator protocol (``fit`` /
``predict`` / ``get_params``) with ``X`` a single column of control values.
All fits work on signals scaled by their largest magnitude, so they are
equivariant under a common rescaling of the signal.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import SimulationError
from .spin import GAMMA_1H


class FitError(SimulationError):
    """Fit did not converge or the input is degenerate."""


def _validate(X, y, min_points: int):
    X, y = check_X_y(X, y, ensure_min_samples=1, y_numeric=True)
    if X.shape[1] != 1:
        raise ValueError(f"expected a single control column, got {X.shape[1]}")
    if len(y) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(y)}")
    return X[:, 0].astype(float), y.astype(float)


FLAT_RTOL = 1e-9  # spread below this fraction of the largest |signal| counts as flat


def _is_flat(y: np.ndarray) -> bool:
    return bool(np.ptp(y) <= FLAT_RTOL * np.max(np.abs(y)))


def _check_identified(err: np.ndarray, what: str):
    if not np.all(np.isfinite(err)):
        raise FitError(f"{what} fit parameters are not identifiable (singular covariance)")


def _scale(y: np.ndarray) -> float:
    s = float(np.max(np.abs(y)))
    if s == 0:
        raise FitError("signal is identically zero")
    return s


def _scan_rate(t, y, basis, tscale):
    """Best ``(amplitude, r)`` for ``y ~ a basis(t / tscale * r)`` over a log grid of ``r``.

    The amplitude enters linearly, so each trial rate costs one projection.
    """
    best = (math.inf, 1.0, 1.0)
    for r in np.logspace(-3, 3, 121):
        f = basis(t / tscale * r)
        ff = float(f @ f)
        if ff == 0:
            continue
        a = float(f @ y) / ff
        sse = float(np.sum((y - a * f) ** 2))
        if sse < best[0]:
            best = (sse, a, r)
    return best[1], best[2]


def _stderr(pcov: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return np.sqrt(np.clip(np.diag(pcov), 0, None))


class MonoExponentialRegressor(RegressorMixin, BaseEstimator):
    """``y = A exp(-t / T)``."""

    def __init__(self, max_nfev: int = 2000):
        self.max_nfev = max_nfev

    def fit(self, X, y):
        t, y = _validate(X, y, 2)
        if _is_flat(y):
            raise FitError("degenerate input: all signals are equal (no decay to fit)")
        s = _scale(y)
        yn = y / s
        if len(t) == 2:
            a_n, tau = self._two_point(t, yn)
            err = np.array([math.nan, math.nan])
        else:
            a_n, tau, err = self._least_squares(t, yn)
        self.amplitude_ = a_n * s
        self.lifetime_ = tau
        self.stderr_ = {"amplitude": float(err[0] * s), "lifetime": float(err[1])}
        self.n_points_ = len(t)
        return self

    @staticmethod
    def _two_point(t, y):
        if y[0] * y[1] <= 0 or t[0] == t[1]:
            raise FitError("two-point exponential needs distinct times and same-sign signals")
        tau = (t[1] - t[0]) / math.log(y[0] / y[1])
        return y[0] * math.exp(t[0] / tau), tau

    def _least_squares(self, t, y):
        tscale = np.ptp(t) or 1.0
        a0, r0 = _scan_rate(t, y, lambda x: np.exp(-x), tscale)

        def model(tt, a, r):  # r = tscale / tau keeps the problem well scaled
            return a * np.exp(-tt / tscale * r)

        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                popt, pcov = curve_fit(model, t, y, p0=[a0, r0], maxfev=self.max_nfev)
        except (RuntimeError, ValueError) as exc:
            raise FitError(f"monoexponential fit did not converge: {exc}") from exc
        a, r = popt
        if r == 0:
            raise FitError("fitted decay rate is zero")
        tau = tscale / r
        err = _stderr(pcov)
        _check_identified(err, "monoexponential")
        return a, tau, np.array([err[0], tscale * err[1] / r**2])

    def predict(self, X):
        check_is_fitted(self, "lifetime_")
        t = check_array(X)[:, 0]
        return self.amplitude_ * np.exp(-t / self.lifetime_)


class InversionRecoveryRegressor(RegressorMixin, BaseEstimator):
    """``y = M0 (1 - 2 exp(-t / T1))``."""

    def __init__(self, max_nfev: int = 2000):
        self.max_nfev = max_nfev

    def fit(self, X, y):
        t, y = _validate(X, y, 4)
        if _is_flat(y):
            raise FitError("degenerate input: all signals are equal (no recovery to fit)")
        s = _scale(y)
        yn = y / s
        tscale = np.ptp(t) or 1.0
        m0, r0 = _scan_rate(t, yn, lambda x: 1 - 2 * np.exp(-x), tscale)

        def model(tt, m, r):
            return m * (1 - 2 * np.exp(-tt / tscale * r))

        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                popt, pcov = curve_fit(model, t, yn, p0=[m0, r0], maxfev=self.max_nfev)
        except (RuntimeError, ValueError) as exc:
            raise FitError(f"inversion-recovery fit did not converge: {exc}") from exc
        m, r = popt
        if r <= 0:
            raise FitError("fitted recovery rate is not positive")
        err = _stderr(pcov)
        _check_identified(err, "inversion-recovery")
        self.m0_ = m * s
        self.t1_ = tscale / r
        self.stderr_ = {"M0": float(err[0] * s), "T1": float(tscale * err[1] / r**2)}
        self.n_points_ = len(t)
        return self

    def predict(self, X):
        check_is_fitted(self, "t1_")
        t = check_array(X)[:, 0]
        return self.m0_ * (1 - 2 * np.exp(-t / self.t1_))


def kappa(G, delta: float, shape: float = 2 / math.pi, q: int = 1, gamma: float = GAMMA_1H):
    """Encoding wavenumber ``gamma q G delta s`` (rad/m) for gradient strength ``G`` (T/m)."""
    return gamma * q * np.asarray(G, dtype=float) * delta * shape


class GaussianAttenuationRegressor(RegressorMixin, BaseEstimator):
    """``y = A exp(-D kappa(G)^2 Delta)``.

    ``X`` holds gradient strengths in T/m.  The amplitude is free by default,
    which keeps the fit scale-equivariant; ``fit_amplitude=False`` pins
    ``A = 1`` for curves that are already normalised ratios.
    """

    def __init__(self, delta: float = 320e-6, big_delta: float = 1.0, shape: float = 2 / math.pi, q: int = 1,
                 gamma: float = GAMMA_1H, fit_amplitude: bool = True, max_nfev: int = 2000):
        self.delta = delta
        self.big_delta = big_delta
        self.shape = shape
        self.q = q
        self.gamma = gamma
        self.fit_amplitude = fit_amplitude
        self.max_nfev = max_nfev

    def _u(self, G):
        return kappa(G, self.delta, self.shape, self.q, self.gamma) ** 2 * self.big_delta

    def fit(self, X, y):
        g, y = _validate(X, y, 4)
        if not self.big_delta > 0:
            raise ValueError("diffusion interval must be > 0")
        u = self._u(g)
        uscale = float(np.max(u)) or 1.0
        s = _scale(y)
        yn = y / s
        self.flat_ = _is_flat(y)
        if self.flat_:
            warnings.warn("all attenuation signals are equal; the fitted D is ~0", stacklevel=2)
        if self.fit_amplitude:
            def model(uu, a, dd):
                return a * np.exp(-dd * uu / uscale)
            p0 = [yn[np.argmin(u)], 1.0]
        else:
            def model(uu, dd):
                return np.exp(-dd * uu / uscale) / s
            p0 = [1.0]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                popt, pcov = curve_fit(model, u, yn, p0=p0, maxfev=self.max_nfev)
        except (RuntimeError, ValueError) as exc:
            raise FitError(f"Gaussian attenuation fit did not converge: {exc}") from exc
        err = _stderr(pcov)
        self.diffusion_ = float(popt[-1] / uscale)
        self.amplitude_ = float(popt[0] * s) if self.fit_amplitude else 1.0
        self.stderr_ = {"D": float(err[-1] / uscale)}
        if self.fit_amplitude:
            self.stderr_["amplitude"] = float(err[0] * s)
        return self

    def predict(self, X):
        check_is_fitted(self, "diffusion_")
        g = check_array(X)[:, 0]
        return self.amplitude_ * np.exp(-self.diffusion_ * self._u(g))


def _xy(curve, y=None):
    if y is not None:
        x = np.asarray(curve, dtype=float)
        return x.reshape(-1, 1), np.asarray(y, dtype=float)
    return np.asarray(curve.control, dtype=float).reshape(-1, 1), np.asarray(curve.signal, dtype=float)


def fit_monoexponential(curve, y=None) -> dict:
    """Fit ``A exp(-t/T)``; accepts an :class:`ExperimentCurve` or ``(t, y)`` arrays."""
    m = MonoExponentialRegressor().fit(*_xy(curve, y))
    return {"amplitude": m.amplitude_, "lifetime": m.lifetime_, "stderr": m.stderr_}


def fit_inversion_recovery(curve, y=None) -> dict:
    m = InversionRecoveryRegressor().fit(*_xy(curve, y))
    return {"M0": m.m0_, "T1": m.t1_, "stderr": m.stderr_}


def fit_gaussian_attenuation(curve, settings=None, y=None, fit_amplitude: bool = True) -> dict:
    """Fit ``S(G)/S(0) = exp(-D kappa^2 Delta)``; ``settings`` is a :class:`DiffusionSettings`-like object."""
    if settings is None:
        settings = curve.metadata["settings"]
    m = GaussianAttenuationRegressor(
        delta=settings.delta, big_delta=settings.big_delta, shape=settings.shape, q=settings.q,
        gamma=settings.gamma, fit_amplitude=fit_amplitude,
    ).fit(*_xy(curve, y))
    return {"D": m.diffusion_, "amplitude": m.amplitude_, "stderr": m.stderr_, "flat": m.flat_}
