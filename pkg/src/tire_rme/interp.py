"""Model-based baselines: inverse distance weighting and ordinary kriging."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import least_squares

from .errors import ConfigError
from .grid import Grid

log = logging.getLogger(__name__)

MIN_VARIOGRAM_SAMPLES = 8


def _pixel_coords(width, height):
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.ravel().astype(np.float64), ys.ravel().astype(np.float64)


def idw_weights(s, power=2.0):
    """Row-normalized IDW weights, shape (n_pixels, n_samples); sampled pixels get a one-hot row."""
    if len(s) == 0:
        raise ConfigError("IDW needs at least one sample")
    if not power > 0:
        raise ConfigError(f"IDW power must be positive, got {power}")
    px, py = _pixel_coords(s.width, s.height)
    d = np.hypot(px[:, None] - s.xs[None, :], py[:, None] - s.ys[None, :])
    exact = d == 0
    with np.errstate(divide="ignore"):
        w = d ** (-power)
    hit = exact.any(axis=1)
    w[hit] = exact[hit].astype(np.float64)
    return w / w.sum(axis=1, keepdims=True)


def idw_interpolate(s, power=2.0):
    w = idw_weights(s, power)
    est = w @ s.values
    # exact at sample locations regardless of summation order
    est = est.reshape(s.height, s.width)
    est[s.ys, s.xs] = s.values
    return Grid(est)


@dataclass(frozen=True)
class VariogramModel:
    """Exponential semivariogram nugget + (sill - nugget)(1 - exp(-3h / range))."""

    nugget: float
    sill: float
    range_param: float
    kind: str = "exponential"

    def __post_init__(self):
        if self.kind != "exponential":
            raise ConfigError(f"unsupported variogram model {self.kind!r}")
        if self.nugget < 0 or self.sill < self.nugget or not self.range_param > 0:
            raise ConfigError(f"invalid variogram parameters {self}")

    def __call__(self, h):
        h = np.asarray(h, dtype=np.float64)
        return self.nugget + (self.sill - self.nugget) * (1.0 - np.exp(-3.0 * h / self.range_param))


def empirical_variogram(s, n_bins=10):
    """Binned semivariance ½·mean((v_i - v_j)²) up to half the largest pair distance.

    Returns (bin mean lag, semivariance, pair count) for non-empty bins.
    """
    x = s.xs.astype(np.float64)
    y = s.ys.astype(np.float64)
    i, j = np.triu_indices(len(s), k=1)
    h = np.hypot(x[i] - x[j], y[i] - y[j])
    g = 0.5 * (s.values[i] - s.values[j]) ** 2
    max_lag = h.max() / 2.0
    edges = np.linspace(0.0, max_lag, n_bins + 1)
    which = np.clip(np.digitize(h, edges) - 1, 0, n_bins - 1)
    inside = h <= max_lag
    lags, gam, counts = [], [], []
    for b in range(n_bins):
        sel = inside & (which == b)
        n = int(sel.sum())
        if n:
            lags.append(h[sel].mean())
            gam.append(g[sel].mean())
            counts.append(n)
    return np.array(lags), np.array(gam), np.array(counts)


def fit_variogram(s, n_bins=10, seed=0, n_starts=8):
    """Fit an exponential variogram by multi-start bounded least squares."""
    if len(s) < MIN_VARIOGRAM_SAMPLES:
        raise ConfigError(f"variogram fit needs >= {MIN_VARIOGRAM_SAMPLES} samples, got {len(s)}")
    lags, gam, _ = empirical_variogram(s, n_bins)
    max_lag = float(lags.max()) if len(lags) and lags.max() > 0 else 1.0
    var_scale = float(max(gam.max(), np.var(s.values), 1e-12))
    if gam.max() <= 0:
        return VariogramModel(0.0, 0.0, max_lag)

    def resid(p):
        nug, psill, rng_ = p
        return nug + psill * (1.0 - np.exp(-3.0 * lags / rng_)) - gam

    rng = np.random.default_rng(seed)
    lo = [0.0, 0.0, 1e-3 * max_lag]
    hi = [2.0 * var_scale, 4.0 * var_scale, 10.0 * max_lag]
    best = None
    for k in range(n_starts):
        if k == 0:
            x0 = [0.1 * var_scale, float(gam.max()), 0.5 * max_lag]
        else:
            x0 = [rng.uniform(0, 0.5) * var_scale, rng.uniform(0.2, 2.0) * var_scale,
                  rng.uniform(0.05, 2.0) * max_lag]
        r = least_squares(resid, x0, bounds=(lo, hi))
        if best is None or r.cost < best.cost:
            best = r
    nug, psill, rng_ = (float(v) for v in best.x)
    return VariogramModel(nug, nug + psill, rng_)


@dataclass
class KrigingResult:
    grid: Grid
    weights: np.ndarray  # (n_pixels, n_samples); IDW weights on fallback pixels
    fallback_pixels: int


def _is_singular(lu, piv, rtol=1e-12):
    d = np.abs(np.diag(lu))
    return not np.all(np.isfinite(lu)) or d.min() <= rtol * max(d.max(), 1e-300)


def kriging_solve(s, v):
    """Ordinary kriging of every pixel with a Lagrange-multiplier unbiasedness row."""
    k = len(s)
    if k == 0:
        raise ConfigError("kriging needs at least one sample")
    sx = s.xs.astype(np.float64)
    sy = s.ys.astype(np.float64)
    a = np.empty((k + 1, k + 1))
    a[:k, :k] = v(np.hypot(sx[:, None] - sx[None, :], sy[:, None] - sy[None, :]))
    np.fill_diagonal(a[:k, :k], 0.0)
    a[k, :k] = 1.0
    a[:k, k] = 1.0
    a[k, k] = 0.0
    px, py = _pixel_coords(s.width, s.height)
    d = np.hypot(sx[:, None] - px[None, :], sy[:, None] - py[None, :])
    rhs = np.empty((k + 1, len(px)))
    rhs[:k] = v(d)
    rhs[:k][d == 0] = 0.0
    rhs[k] = 1.0
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    if _is_singular(lu, piv):
        log.debug("kriging system singular; IDW fallback for %d pixels", len(px))
        w = idw_weights(s)
        return KrigingResult(idw_interpolate(s), w, len(px))
    sol = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    w = sol[:k].T
    est = (w @ s.values).reshape(s.height, s.width)
    bad = ~np.isfinite(est)
    n_bad = int(bad.sum())
    if n_bad:
        fallback = idw_interpolate(s).values
        est[bad] = fallback[bad]
        w[bad.ravel()] = idw_weights(s)[bad.ravel()]
    return KrigingResult(Grid(est), w, n_bad)


def kriging_interpolate(s, v):
    return kriging_solve(s, v).grid
