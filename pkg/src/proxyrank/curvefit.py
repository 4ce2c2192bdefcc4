"""Curve families for training-time forecasting and their fitting machinery.

Three families: a saturating power law ``a - b*x^(-c)``, a four-parameter
logistic in log-compute, and a saturating exponential in CE loss.  Each fit
runs a deterministic coarse grid over the one "hard" nonlinear parameter
(with closed-form least squares for the linear ones) followed by damped
Gauss-Newton refinement that only ever accepts steps decreasing the residual
sum of squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .proxylib import PROXY_INDEX, ProxyId

GRID_POINTS = 64
NONLINEAR_GRID_LO = 1e-3
NONLINEAR_GRID_HI = 10.0
MAX_REFINE_ITERATIONS = 200
REFINE_RTOL = 1e-10

POWER_LAW_MIN_POINTS = 4
SIGMOID_MIN_POINTS = 5
EXPONENTIAL_MIN_POINTS = 4


class FitError(ValueError):
    """A curve fit could not be performed on the given series."""


@dataclass(frozen=True)
class Series:
    """An ordered predictor/target series (checkpoint order)."""

    x: np.ndarray
    y: np.ndarray
    x_kind: str = ""
    y_kind: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64))
        if self.x.ndim != 1 or self.x.shape != self.y.shape:
            raise ValueError("series needs equal-length 1-D x and y")
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise ValueError("series values must be finite")
        if self.x_kind == "step" and len(self.x) > 1 and not (np.diff(self.x) > 0).all():
            raise ValueError("step-indexed series must have strictly increasing x")

    def __len__(self) -> int:
        return len(self.x)

    def head(self, n: int) -> "Series":
        return Series(self.x[:n], self.y[:n], self.x_kind, self.y_kind)

    def tail(self, n: int) -> "Series":
        return Series(self.x[n:], self.y[n:], self.x_kind, self.y_kind)


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters of one family plus fit diagnostics.

    ``r_squared`` is NaN when the fit window has zero target variance.
    """

    family: str
    params: dict[str, float]
    rss: float
    r_squared: float
    degenerate: bool = False
    notes: str = ""

    def predict(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        p = self.params
        if self.family == "power_law":
            # x^(-c) has no real value at x <= 0: report NaN there, quietly.
            base = np.where(arr > 0, arr, np.nan)
            with np.errstate(invalid="ignore"):
                return p["a"] - p["b"] * base ** (-p["c"])
        if self.family == "sigmoid":
            z = p["slope"] * (arr - p["midpoint"])
            return p["lower"] + (p["upper"] - p["lower"]) * _sigmoid(z)
        if self.family == "exponential":
            return p["eps"] - p["k"] * np.exp(-p["gamma"] * arr)
        raise ValueError(f"unknown family {self.family!r}")


def _rss(residuals: np.ndarray) -> float:
    return float(np.dot(residuals, residuals))


def _r_squared(y: np.ndarray, rss: float) -> float:
    tss = float(np.dot(y - y.mean(), y - y.mean()))
    if tss <= 0.0:
        return float("nan")
    return 1.0 - rss / tss


def _gauss_newton(
    theta: np.ndarray,
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    max_iter: int = MAX_REFINE_ITERATIONS,
    rtol: float = REFINE_RTOL,
) -> tuple[np.ndarray, float]:
    """Damped Gauss-Newton: steps are halved until RSS strictly decreases."""
    r = residual(theta)
    best = _rss(r)
    for _ in range(max_iter):
        j = jacobian(theta)
        try:
            delta, *_ = np.linalg.lstsq(j, -r, rcond=None)
        except np.linalg.LinAlgError:
            break
        if not np.isfinite(delta).all():
            break
        step = 1.0
        accepted = None
        for _ in range(40):
            candidate = theta + step * delta
            if project is not None:
                candidate = project(candidate)
            rc = residual(candidate)
            value = _rss(rc)
            if math.isfinite(value) and value < best:
                accepted = (candidate, rc, value)
                break
            step *= 0.5
        if accepted is None:
            break
        theta, r, value = accepted
        improved = best - value
        best = value
        if improved <= rtol * max(best, 1e-300):
            break
    return theta, best


def _grid_then_refine(
    x: np.ndarray,
    y: np.ndarray,
    basis: Callable[[np.ndarray, float], np.ndarray],
    residual_factory,
    jacobian_factory,
) -> tuple[float, float, float, float]:
    """Shared two-parameter-linear + one-nonlinear fitting loop.

    The model is ``y ~ p - q * basis(x, g)``; returns (p, q, g, rss) after the
    log-spaced grid search over g and Gauss-Newton refinement on (p, q, ln g).
    """
    best = None
    design = np.empty((len(x), 2))
    design[:, 0] = 1.0
    for g in np.geomspace(NONLINEAR_GRID_LO, NONLINEAR_GRID_HI, GRID_POINTS):
        design[:, 1] = -basis(x, g)
        coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
        r = y - design @ coeffs
        rss = _rss(r)
        if best is None or rss < best[3]:
            best = (float(coeffs[0]), float(coeffs[1]), float(g), rss)
    assert best is not None
    p, q, g, grid_rss = best
    theta0 = np.asarray([p, q, math.log(g)])
    theta, rss = _gauss_newton(theta0, residual_factory(x, y), jacobian_factory(x, y))
    if rss <= grid_rss:
        return float(theta[0]), float(theta[1]), math.exp(float(theta[2])), rss
    return p, q, g, grid_rss


def fit_power_law(series: Series) -> FitResult:
    """Fit ``y = a - b * x^(-c)`` with c > 0.

    A constant-target series returns the flat fit (b = 0) flagged degenerate.
    """
    x, y = series.x, series.y
    if len(series) < POWER_LAW_MIN_POINTS:
        raise FitError(f"power-law fit needs >= {POWER_LAW_MIN_POINTS} points, got {len(series)}")
    if not (x > 0).all():
        raise FitError("power-law fit requires strictly positive x")
    if float(y.max() - y.min()) == 0.0:
        return FitResult(
            family="power_law",
            params={"a": float(y[0]), "b": 0.0, "c": 1.0},
            rss=0.0,
            r_squared=float("nan"),
            degenerate=True,
            notes="constant target",
        )
    log_x = np.log(x)

    def residual_factory(xv, yv):
        def residual(theta):
            a, b, lg = theta
            return yv - (a - b * np.exp(-math.exp(lg) * log_x))

        return residual

    def jacobian_factory(xv, yv):
        def jacobian(theta):
            a, b, lg = theta
            c = math.exp(lg)
            u = np.exp(-c * log_x)  # x^(-c)
            j = np.empty((len(xv), 3))
            j[:, 0] = -1.0
            j[:, 1] = u
            j[:, 2] = -b * c * log_x * u
            return j

        return jacobian

    a, b, c, rss = _grid_then_refine(x, y, lambda xv, g: xv ** (-g), residual_factory, jacobian_factory)
    return FitResult(
        family="power_law",
        params={"a": a, "b": b, "c": c},
        rss=rss,
        r_squared=_r_squared(y, rss),
    )


def fit_exponential(series: Series) -> FitResult:
    """Fit ``y = eps - k * exp(-gamma * x)`` with gamma > 0.

    With fewer than three distinct x values the curvature parameter is
    underdetermined; the lowest-RSS grid point is returned flagged, without
    refinement.
    """
    x, y = series.x, series.y
    if len(series) < EXPONENTIAL_MIN_POINTS:
        raise FitError(f"exponential fit needs >= {EXPONENTIAL_MIN_POINTS} points, got {len(series)}")
    if float(y.max() - y.min()) == 0.0:
        return FitResult(
            family="exponential",
            params={"eps": float(y[0]), "k": 0.0, "gamma": 1.0},
            rss=0.0,
            r_squared=float("nan"),
            degenerate=True,
            notes="constant target",
        )
    if len(np.unique(x)) < 3:
        best = None
        design = np.empty((len(x), 2))
        design[:, 0] = 1.0
        for g in np.geomspace(NONLINEAR_GRID_LO, NONLINEAR_GRID_HI, GRID_POINTS):
            design[:, 1] = -np.exp(-g * x)
            coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
            rss = _rss(y - design @ coeffs)
            if best is None or rss < best[3]:
                best = (float(coeffs[0]), float(coeffs[1]), float(g), rss)
        assert best is not None
        eps, k, gamma, rss = best
        return FitResult(
            family="exponential",
            params={"eps": eps, "k": k, "gamma": gamma},
            rss=rss,
            r_squared=_r_squared(y, rss),
            degenerate=True,
            notes="gamma underdetermined (fewer than 3 distinct x)",
        )

    def residual_factory(xv, yv):
        def residual(theta):
            eps, k, lg = theta
            return yv - (eps - k * np.exp(-math.exp(lg) * xv))

        return residual

    def jacobian_factory(xv, yv):
        def jacobian(theta):
            eps, k, lg = theta
            g = math.exp(lg)
            u = np.exp(-g * xv)
            j = np.empty((len(xv), 3))
            j[:, 0] = -1.0
            j[:, 1] = u
            j[:, 2] = -k * g * xv * u
            return j

        return jacobian

    eps, k, gamma, rss = _grid_then_refine(
        x, y, lambda xv, g: np.exp(-g * xv), residual_factory, jacobian_factory
    )
    return FitResult(
        family="exponential",
        params={"eps": eps, "k": k, "gamma": gamma},
        rss=rss,
        r_squared=_r_squared(y, rss),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Stable on both tails: never exponentiates a positive argument.
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def fit_sigmoid(series: Series) -> FitResult:
    """Fit a 4-parameter logistic ``lower + (upper-lower)*sig(slope*(x-mid))``.

    Multi-start Gauss-Newton from a deterministic grid: midpoints at the
    quartiles of the x range, slope magnitudes {0.5, 1, 2, 4} with both
    signs (decreasing targets are legitimate).  When the target is an
    accuracy, lower is kept >= 0 and upper <= 1.
    """
    x, y = series.x, series.y
    if len(series) < SIGMOID_MIN_POINTS:
        raise FitError(f"sigmoid fit needs >= {SIGMOID_MIN_POINTS} points, got {len(series)}")
    if float(y.max() - y.min()) == 0.0:
        return FitResult(
            family="sigmoid",
            params={
                "lower": float(y[0]),
                "upper": float(y[0]),
                "slope": 0.0,
                "midpoint": float(np.median(x)),
            },
            rss=0.0,
            r_squared=float("nan"),
            degenerate=True,
            notes="constant target",
        )
    bounded = series.y_kind == "accuracy"

    def project(theta: np.ndarray) -> np.ndarray:
        if not bounded:
            return theta
        # Both asymptotes clip to [0, 1]: the canonical (lower, upper) roles
        # are only assigned after fitting, when a swapped orientation is
        # normalized away.
        out = theta.copy()
        out[0] = min(max(out[0], 0.0), 1.0)
        out[1] = min(max(out[1], 0.0), 1.0)
        return out

    def residual(theta: np.ndarray) -> np.ndarray:
        lower, upper, slope, mid = theta
        return y - (lower + (upper - lower) * _sigmoid(slope * (x - mid)))

    def jacobian(theta: np.ndarray) -> np.ndarray:
        lower, upper, slope, mid = theta
        s = _sigmoid(slope * (x - mid))
        ds = s * (1.0 - s)
        j = np.empty((len(x), 4))
        j[:, 0] = -(1.0 - s)
        j[:, 1] = -s
        j[:, 2] = -(upper - lower) * ds * (x - mid)
        j[:, 3] = (upper - lower) * ds * slope
        return j

    span = float(x.max() - x.min())
    if span == 0.0:
        raise FitError("sigmoid fit requires at least two distinct x values")
    midpoints = [float(x.min()) + q * span for q in (0.25, 0.5, 0.75)]
    slopes = [s * m for m in (0.5, 1.0, 2.0, 4.0) for s in (1.0, -1.0)]
    lower0 = max(float(y.min()), 0.0) if bounded else float(y.min())
    upper0 = min(float(y.max()), 1.0) if bounded else float(y.max())

    best_theta = None
    best_rss = math.inf
    for mid in midpoints:
        for slope in slopes:
            theta0 = project(np.asarray([lower0, upper0, slope, mid]))
            theta, rss = _gauss_newton(theta0, residual, jacobian, project=project)
            if rss < best_rss:
                best_rss = rss
                best_theta = theta
    if best_theta is None or not np.isfinite(best_theta).all():
        raise FitError(f"sigmoid fit failed to converge from any start (best rss {best_rss!r})")
    lower, upper, slope, mid = (float(v) for v in best_theta)
    if upper < lower:  # canonical form: upper >= lower, slope carries direction
        lower, upper, slope = upper, lower, -slope
    return FitResult(
        family="sigmoid",
        params={"lower": lower, "upper": upper, "slope": slope, "midpoint": mid},
        rss=best_rss,
        r_squared=_r_squared(y, best_rss),
    )


def extrapolation_error(
    fit: FitResult, holdout: Series, mode: str, train_range: float | None = None
) -> float:
    """NMAE or RMSE of the fit's predictions on held-out points.

    NMAE divides the mean absolute error by the fitted quantity's range over
    the training window, which the caller supplies.
    """
    if len(holdout) == 0:
        raise ValueError("extrapolation_error needs a non-empty holdout")
    predictions = fit.predict(holdout.x)
    errors = predictions - holdout.y
    if mode == "rmse":
        return float(np.sqrt(np.mean(errors**2)))
    if mode == "nmae":
        if train_range is None or train_range <= 0.0:
            raise ValueError("nmae requires a positive training range")
        return float(np.mean(np.abs(errors))) / train_range
    raise ValueError(f"unknown error mode {mode!r}; expected 'nmae' or 'rmse'")


def inner_split_select(
    per_proxy_series: Mapping[ProxyId, Series], split_fraction: float = 0.5
) -> tuple[ProxyId, FitResult]:
    """Pick the proxy whose early-window power law extrapolates best.

    For each candidate: fit on the first ceil(fraction*n) checkpoints, score
    NMAE on the remaining checkpoints (normalized by the training window's
    target range), keep the minimizer (ties break to the lowest canonical
    proxy id), then refit that proxy on the full window.
    """
    if not per_proxy_series:
        raise ValueError("inner_split_select needs at least one candidate series")
    if not 0.0 < split_fraction < 1.0:
        raise ValueError(f"split_fraction must be in (0, 1), got {split_fraction}")
    candidates = sorted(per_proxy_series, key=lambda pid: PROXY_INDEX[pid])
    best: tuple[float, ProxyId] | None = None
    for pid in candidates:
        series = per_proxy_series[pid]
        n_train = math.ceil(split_fraction * len(series))
        if n_train < POWER_LAW_MIN_POINTS:
            raise ValueError(
                f"series for {pid} too short: inner split leaves {n_train} train points (need >= 4)"
            )
        if n_train >= len(series):
            raise ValueError(f"series for {pid} leaves no inner holdout at fraction {split_fraction}")
        train = series.head(n_train)
        holdout = series.tail(n_train)
        train_range = float(train.y.max() - train.y.min())
        if train_range <= 0.0:
            continue
        try:
            fit = fit_power_law(train)
        except FitError:
            continue
        if fit.degenerate:
            continue
        nmae = extrapolation_error(fit, holdout, "nmae", train_range)
        if best is None or nmae < best[0]:
            best = (nmae, pid)
    if best is None:
        raise ValueError("every candidate series is degenerate; nothing to select")
    winner = best[1]
    return winner, fit_power_law(per_proxy_series[winner])
