"""Sampling estimators with control variates.

All sample moments use the unbiased (n - 1) normalization. ``y`` holds the
expensive per-sample evaluations, ``z`` (n x d) the cheap control
evaluations on the same samples, and ``mu_z`` the control means.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from ._rng import keyed_rng
from .exceptions import (
    ConfigurationError,
    DegenerateControlError,
    IllConditionedControlsError,
    InsufficientSampleError,
    ParameterError,
)

COND_THRESHOLD = 1e10


@dataclass(frozen=True)
class CvEstimate:
    estimate: float
    sample_variance_of_mean: float
    beta: tuple[float, ...]
    r_squared: float
    variance_reduction_factor: float
    n: int

    @property
    def std_error(self) -> float:
        return float(np.sqrt(self.sample_variance_of_mean))

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        """Normal-approximation confidence interval for the mean."""
        half = norm.ppf(0.5 + level / 2.0) * self.std_error
        return self.estimate - half, self.estimate + half

    def scaled(self, k: float) -> "CvEstimate":
        """The same estimate for ``k`` times the target (e.g. a window total)."""
        return CvEstimate(self.estimate * k, self.sample_variance_of_mean * k * k, self.beta,
                          self.r_squared, self.variance_reduction_factor, self.n)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "sample_variance_of_mean": self.sample_variance_of_mean,
            "std_error": self.std_error,
            "beta": list(self.beta),
            "r_squared": self.r_squared,
            "variance_reduction_factor": self.variance_reduction_factor,
            "n": self.n,
        }


@dataclass(frozen=True, eq=False)
class PairedSample:
    y: np.ndarray
    z: np.ndarray
    mu_z: np.ndarray

    def __post_init__(self):
        y, z, mu = _validate(self.y, self.z, self.mu_z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "mu_z", mu)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]


def _validate_y(y) -> np.ndarray:
    y = check_array(np.asarray(y, dtype=float), ensure_2d=False, ensure_min_samples=0)
    if y.ndim != 1:
        raise ParameterError(f"y must be one-dimensional, got shape {y.shape}")
    if y.shape[0] < 2:
        raise InsufficientSampleError(f"need at least 2 samples, got {y.shape[0]}")
    return y


def _validate(y, z, mu_z):
    y = _validate_y(y)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    z = check_array(z, ensure_min_samples=0, ensure_min_features=1)
    check_consistent_length(y, z)
    mu = np.atleast_1d(np.asarray(mu_z, dtype=float))
    if mu.shape != (z.shape[1],) or not np.all(np.isfinite(mu)):
        raise ParameterError(f"mu_z must be {z.shape[1]} finite values, got {mu_z!r}")
    return y, z, mu


def _moments(y: np.ndarray, z: np.ndarray):
    n = y.shape[0]
    ybar, zbar = y.mean(), z.mean(axis=0)
    dy, dz = y - ybar, z - zbar
    s_yy = float(dy @ dy) / (n - 1)
    s_zz = (dz.T @ dz) / (n - 1)
    s_yz = (dz.T @ dy) / (n - 1)
    return ybar, zbar, s_yy, s_zz, s_yz


def _negligible(var: float, x: np.ndarray) -> bool:
    scale = max(1.0, float(np.mean(x * x)))
    return var <= 1e-24 * scale


def plain_mean(y: Sequence[float]) -> CvEstimate:
    y = _validate_y(y)
    n = y.shape[0]
    s_yy = float(np.var(y, ddof=1))
    return CvEstimate(float(y.mean()), s_yy / n, (), 0.0, 1.0, n)


def beta_star_single(x: Sequence[float], y: Sequence[float]) -> float:
    """Plug-in optimal coefficient S_YX / S_XX for a single control."""
    y, z, _ = _validate(y, x, [0.0])
    if z.shape[1] != 1:
        raise ParameterError("beta_star_single takes exactly one control")
    _, _, _, s_zz, s_yz = _moments(y, z)
    if _negligible(s_zz[0, 0], z[:, 0]):
        raise DegenerateControlError("control variate is constant on the sample (S_XX = 0)")
    return float(s_yz[0] / s_zz[0, 0])


def _halves(y, z):
    n = y.shape[0]
    if n < 4:
        raise InsufficientSampleError(f"split-sample mode needs at least 4 samples, got {n}")
    h = n // 2
    return (y[:h], z[:h]), (y[h:], z[h:])


def cv_estimate(y: Sequence[float], x, mu_x, beta: Optional[float] = None, split: bool = False) -> CvEstimate:
    """Single control-variate estimate ybar - beta * (xbar - mu_x).

    ``beta`` defaults to the plug-in optimum computed on the same sample. With
    ``split=True`` beta comes from the first half and the estimate from the
    second half only, which makes the estimator exactly unbiased.
    """
    y, z, mu = _validate(y, x, mu_x)
    if z.shape[1] != 1:
        raise ParameterError("cv_estimate takes exactly one control; use mcv_estimate")
    if split:
        (y1, z1), (y, z) = _halves(y, z)
        if beta is None:
            beta = beta_star_single(z1[:, 0], y1)
    n = y.shape[0]
    ybar, zbar, s_yy, s_zz, s_yz = _moments(y, z)
    s_xx, s_yx = float(s_zz[0, 0]), float(s_yz[0])
    if beta is None:
        if _negligible(s_xx, z[:, 0]):
            raise DegenerateControlError("control variate is constant on the sample (S_XX = 0)")
        beta = s_yx / s_xx
    beta = float(beta)
    estimate = float(ybar - beta * (zbar[0] - mu[0]))
    if s_yy == 0.0:
        return CvEstimate(estimate, 0.0, (beta,), 0.0, 1.0, n)
    cv_var = max(0.0, s_yy + beta * beta * s_xx - 2.0 * beta * s_yx)
    r2 = 0.0 if s_xx == 0.0 else min(1.0, s_yx * s_yx / (s_xx * s_yy))
    vrf = s_yy / cv_var if cv_var > 0 else float("inf")
    return CvEstimate(estimate, cv_var / n, (beta,), r2, vrf, n)


def _solve_beta(s_zz: np.ndarray, s_yz: np.ndarray, cond_threshold: float) -> np.ndarray:
    cond = np.linalg.cond(s_zz)
    if not np.isfinite(cond) or cond > cond_threshold:
        raise IllConditionedControlsError(
            f"control covariance is ill-conditioned (condition number {cond:.3g} > {cond_threshold:.3g}); "
            "drop a redundant or constant control"
        )
    try:
        factor = scipy.linalg.cho_factor(s_zz, lower=True)
    except np.linalg.LinAlgError:
        raise IllConditionedControlsError(
            "control covariance is not positive definite; drop a redundant control"
        ) from None
    return scipy.linalg.cho_solve(factor, s_yz)


def mcv_estimate(y: Sequence[float], z, mu_z, cond_threshold: float = COND_THRESHOLD,
                 split: bool = False) -> CvEstimate:
    """Multiple control-variate estimate with beta = S_ZZ^{-1} S_YZ."""
    y, z, mu = _validate(y, z, mu_z)
    d = z.shape[1]
    beta_fixed = None
    if split:
        (y1, z1), (y, z) = _halves(y, z)
        if d > y1.shape[0] - 2:
            raise InsufficientSampleError(f"{d} controls need at least {d + 2} samples per half")
        _, _, _, s_zz1, s_yz1 = _moments(y1, z1)
        beta_fixed = _solve_beta(s_zz1, s_yz1, cond_threshold)
    n = y.shape[0]
    if d > n - 2:
        raise InsufficientSampleError(f"{d} controls need at least {d + 2} samples, got {n}")
    ybar, zbar, s_yy, s_zz, s_yz = _moments(y, z)
    beta = beta_fixed if beta_fixed is not None else _solve_beta(s_zz, s_yz, cond_threshold)
    estimate = float(ybar - beta @ (zbar - mu))
    if s_yy == 0.0:
        return CvEstimate(estimate, 0.0, tuple(float(b) for b in beta), 0.0, 1.0, n)
    if beta_fixed is None:
        r2 = float(np.clip(s_yz @ beta / s_yy, 0.0, 1.0))
        var = s_yy * (1.0 - r2)
    else:
        var = max(0.0, s_yy - 2.0 * beta @ s_yz + beta @ s_zz @ beta)
        r2 = float(np.clip(s_yz @ np.linalg.solve(s_zz, s_yz) / s_yy, 0.0, 1.0))
    vrf = s_yy / var if var > 0 else float("inf")
    return CvEstimate(estimate, var / n, tuple(float(b) for b in beta), r2, vrf, n)


def two_stage_mu(control: Callable, frames: Sequence, wide_fraction: float,
                 y_indices: Optional[Sequence[int]] = None, mode: str = "superset",
                 seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Control means from a cheap evaluation over a wide sample of the window.

    ``control(frame)`` returns the d control values of one frame. The wide
    sample holds ``round(wide_fraction * len(frames))`` frames; in
    ``superset`` mode it contains ``y_indices``, in ``disjoint`` mode it
    avoids them. Returns ``(mu_z, wide_indices)``.
    """
    if not 0.0 < wide_fraction <= 1.0:
        raise ConfigurationError(f"wide_fraction must lie in (0, 1], got {wide_fraction}")
    if mode not in ("superset", "disjoint"):
        raise ConfigurationError(f"unknown two-stage mode {mode!r}")
    n_total = len(frames)
    m = max(1, int(round(wide_fraction * n_total)))
    y_idx = np.asarray([] if y_indices is None else y_indices, dtype=np.int64)
    if m < y_idx.size:
        raise ConfigurationError(f"wide sample ({m} frames) is smaller than the Y-sample ({y_idx.size})")
    rng = keyed_rng(seed)
    rest = np.setdiff1d(np.arange(n_total), y_idx)
    if mode == "superset":
        extra = rng.choice(rest, size=m - y_idx.size, replace=False) if m > y_idx.size else rest[:0]
        wide = np.sort(np.concatenate([y_idx, extra]))
    else:
        if m > rest.size:
            raise ConfigurationError(f"disjoint wide sample of {m} frames exceeds the {rest.size} frames available")
        wide = np.sort(rng.choice(rest, size=m, replace=False))
    values = np.array([np.atleast_1d(np.asarray(control(frames[i]), dtype=float)) for i in wide])
    return values.mean(axis=0), wide


class ControlVariateEstimator(BaseEstimator):
    """Estimate E[y] from paired samples with one or more control variates.

    ``fit(Z, y)`` with Z of shape (n, d). With ``d == 0`` columns (or Z=None)
    the plain sample mean is used.

    Attributes after fit: ``estimate_``, ``variance_``, ``coef_`` (beta),
    ``r_squared_``, ``variance_reduction_``, ``result_`` (a CvEstimate).
    """

    def __init__(self, control_means=None, beta=None, split=False, cond_threshold=COND_THRESHOLD):
        self.control_means = control_means
        self.beta = beta
        self.split = split
        self.cond_threshold = cond_threshold

    def fit(self, Z, y, control_means=None):
        mu = self.control_means if control_means is None else control_means
        if Z is None or np.asarray(Z).size == 0:
            res = plain_mean(y)
        else:
            if mu is None:
                raise ConfigurationError("control means are required when controls are given")
            Zarr = np.asarray(Z, dtype=float)
            d = 1 if Zarr.ndim == 1 else Zarr.shape[1]
            if self.beta is not None:
                if d != 1:
                    raise ParameterError("a fixed beta is only supported for a single control")
                res = cv_estimate(y, Zarr, mu, beta=self.beta, split=self.split)
            elif d == 1:
                res = cv_estimate(y, Zarr, mu, split=self.split)
            else:
                res = mcv_estimate(y, Zarr, mu, self.cond_threshold, split=self.split)
        self.result_ = res
        self.estimate_ = res.estimate
        self.variance_ = res.sample_variance_of_mean
        self.coef_ = np.asarray(res.beta, dtype=float)
        self.r_squared_ = res.r_squared
        self.variance_reduction_ = res.variance_reduction_factor
        self.n_samples_ = res.n
        return self

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        check_is_fitted(self, "result_")
        return self.result_.interval(level)
