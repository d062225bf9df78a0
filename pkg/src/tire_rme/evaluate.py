"""Metrics, estimator evaluation, sampling/noise sweeps and outage evaluation."""

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, load_checkpoint
from .errors import ConfigError, DegenerateInputError, ShapeError, UsageError
from .features import build_condition, derive_seed, draw_samples
from .grid import Grid
from .interp import fit_variogram, idw_interpolate, kriging_solve, MIN_VARIOGRAM_SAMPLES
from .models import Generator, UNet
from .scene import OutageParams, outage_map

NMSE_EPS = 1.0 / 255.0
MSE_DISPLAY = 1e-4
NMSE_DISPLAY = 1e-2

_EVAL_STREAM = 3
_NOISE_STREAM = 4


def _vals(g):
    return g.values if isinstance(g, Grid) else np.asarray(g, dtype=np.float64)


def _pair(y, yhat, op):
    a, b = _vals(y), _vals(yhat)
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")
    return a, b


def mse(y, yhat, mask=None):
    a, b = _pair(y, yhat, "mse")
    d = (a - b) ** 2
    if mask is not None:
        d = d[mask]
    return float(np.mean(d))


def nmse(y, yhat, eps=NMSE_EPS, mask=None):
    """Mean of per-pixel (y - ŷ)²/y² over pixels with y >= eps."""
    a, b = _pair(y, yhat, "nmse")
    keep = a >= eps
    if mask is not None:
        keep &= mask
    if not keep.any():
        raise DegenerateInputError("nmse: every pixel is below eps")
    a, b = a[keep], b[keep]
    return float(np.mean((a - b) ** 2 / np.maximum(a * a, eps * eps)))


def nmse_agg(y, yhat, mask=None):
    """Aggregate form Σ(y - ŷ)² / Σy²."""
    a, b = _pair(y, yhat, "nmse_agg")
    if mask is not None:
        a, b = a[mask], b[mask]
    den = float(np.sum(a * a))
    if den == 0:
        raise DegenerateInputError("nmse_agg: reference map is all zero")
    return float(np.sum((a - b) ** 2)) / den


# ---------------------------------------------------------------- estimators

class Estimator:
    name = "estimator"

    def __call__(self, item, samples):
        raise NotImplementedError


class TruthEstimator(Estimator):
    name = "truth"

    def __call__(self, item, samples):
        return item.radiomap


class ZerosEstimator(Estimator):
    name = "zeros"

    def __call__(self, item, samples):
        return Grid(np.zeros(item.radiomap.shape))


class IdwEstimator(Estimator):
    name = "idw"

    def __init__(self, power=2.0):
        self.power = power

    def __call__(self, item, samples):
        return idw_interpolate(samples, self.power)


class KrigingEstimator(Estimator):
    """Fits a variogram per map; too few samples for a fit falls back to IDW."""

    name = "kriging"

    def __init__(self, n_bins=10, seed=0):
        self.n_bins = n_bins
        self.seed = seed
        self.fallback_pixels = 0

    def __call__(self, item, samples):
        if len(samples) < MIN_VARIOGRAM_SAMPLES:
            self.fallback_pixels += item.radiomap.values.size
            return idw_interpolate(samples)
        res = kriging_solve(samples, fit_variogram(samples, self.n_bins, self.seed))
        self.fallback_pixels += res.fallback_pixels
        return Grid(np.clip(res.grid.values, 0.0, 1.0))


class NetEstimator(Estimator):
    def __init__(self, model, name, use_rdm=True):
        self.model = model
        self.name = name
        self.use_rdm = use_rdm

    def __call__(self, item, samples):
        cond = build_condition(item, samples, self.use_rdm)[None]
        return Grid(self.model(Tensor(cond)).data[0, 0])


def make_estimator(name, cfg):
    """Estimator by name; network estimators load their checkpoint from the run directory."""
    if name == "truth":
        return TruthEstimator()
    if name == "zeros":
        return ZerosEstimator()
    if name == "idw":
        return IdwEstimator(cfg.eval.idw_power)
    if name == "kriging":
        return KrigingEstimator(cfg.eval.kriging_bins, cfg.eval.seed)
    if name == "tiregan":
        path = cfg.out_path / "generator.ckpt"
        if not path.exists():
            raise ConfigError(f"missing generator checkpoint {path}; run train first")
        model = Generator(cfg.generator)
        model.load_state_dict(load_checkpoint(path))
        return NetEstimator(model.freeze(), "tiregan", cfg.use_rdm)
    if name == "unet":
        path = cfg.out_path / "regressor.ckpt"
        if not path.exists():
            raise ConfigError(f"missing regressor checkpoint {path}; run train-baseline first")
        model = UNet(cfg.regressor)
        model.load_state_dict(load_checkpoint(path))
        return NetEstimator(model.freeze(), "unet", cfg.use_rdm)
    raise ConfigError(f"unknown estimator {name!r}")


# ---------------------------------------------------------------- reports

METRIC_COLUMNS = ("map", "mse", "nmse", "nmse_agg", "n_samples")


@dataclass
class MetricReport:
    estimator: str
    sr: float
    snr_db: float | None
    rows: list = field(default_factory=list)  # (map index, mse, nmse, nmse_agg, n_samples)
    config: dict = field(default_factory=dict)

    @property
    def count(self):
        return len(self.rows)

    def _col(self, k):
        return np.array([r[k] for r in self.rows], dtype=np.float64)

    @property
    def mse(self):
        return float(np.mean(self._col(1)))

    @property
    def nmse(self):
        return float(np.mean(self._col(2)))

    @property
    def nmse_agg(self):
        return float(np.mean(self._col(3)))

    @property
    def median_mse(self):
        return float(np.median(self._col(1)))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("estimator", "sr", "snr_db") + METRIC_COLUMNS)
        for r in self.rows:
            w.writerow([self.estimator, repr(self.sr), _snr_str(self.snr_db), r[0],
                        repr(r[1]), repr(r[2]), repr(r[3]), r[4]])
        w.writerow([self.estimator, repr(self.sr), _snr_str(self.snr_db), "mean",
                    repr(self.mse), repr(self.nmse), repr(self.nmse_agg), self.count])
        return buf.getvalue()


def _snr_str(snr):
    return "inf" if snr is None else repr(float(snr))


def _threads():
    try:
        return max(1, int(os.environ.get("TIRE_RME_THREADS", "1")))
    except ValueError:
        raise ConfigError("TIRE_RME_THREADS must be an integer") from None


def _map_samples(item, i, sr, seed, low_threshold, snr_db):
    s = draw_samples(item, sr, derive_seed(seed, _EVAL_STREAM, i), low_threshold)
    if snr_db is not None:
        from .dataset import add_awgn

        s = add_awgn(s, snr_db, derive_seed(seed, _NOISE_STREAM, i))
    return s


def evaluate_estimator(estimator, items, sr, seed=0, snr_db=None, low_threshold=0.0,
                       mask_buildings=False, nmse_eps=NMSE_EPS):
    """Run an estimator over every map with a seeded sparse sample per map.

    Sample draws depend only on (seed, map index), so changing the SNR alone
    changes nothing but the added noise.
    """
    if not items:
        raise ConfigError("no maps to evaluate")

    def one(i):
        it = items[i]
        s = _map_samples(it, i, sr, seed, low_threshold, snr_db)
        est = estimator(it, s)
        mask = ~it.scene.buildings.as_bool() if mask_buildings else None
        return (i, mse(it.radiomap, est, mask), nmse(it.radiomap, est, nmse_eps, mask),
                nmse_agg(it.radiomap, est, mask), len(s))

    n = _threads()
    if n > 1 and not isinstance(estimator, NetEstimator):
        with ThreadPoolExecutor(max_workers=n) as ex:
            rows = list(ex.map(one, range(len(items))))
    else:
        rows = [one(i) for i in range(len(items))]
    return MetricReport(getattr(estimator, "name", "estimator"), sr, snr_db, rows,
                        {"seed": seed, "mask_buildings": mask_buildings})


SWEEP_COLUMNS = ("estimator", "sr", "snr_db", "mse", "nmse", "nmse_agg", "median_mse", "n_maps")


def _summary_row(rep):
    return [rep.estimator, repr(rep.sr), _snr_str(rep.snr_db), repr(rep.mse), repr(rep.nmse),
            repr(rep.nmse_agg), repr(rep.median_mse), rep.count]


def sweep_table(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in reports:
        w.writerow(_summary_row(r))
    return buf.getvalue()


def sweep_sampling(estimators, sr_list, items, seed=0, **kw):
    """One report per (estimator, sr)."""
    if not estimators:
        raise UsageError("sweep_sampling needs at least one estimator")
    if not sr_list:
        raise UsageError("sweep_sampling needs at least one sampling ratio")
    return [evaluate_estimator(e, items, sr, seed, **kw) for e in estimators for sr in sr_list]


def sweep_noise(estimator, snr_list, items, sr=0.01, seed=0, **kw):
    """One report per SNR at a fixed sampling ratio; None means noiseless."""
    if not snr_list:
        raise UsageError("sweep_noise needs at least one SNR")
    return [evaluate_estimator(estimator, items, sr, seed, snr_db=_parse_snr(s), **kw) for s in snr_list]


def _parse_snr(s):
    if s is None:
        return None
    if isinstance(s, str):
        if s.lower() in ("none", "inf", "+inf"):
            return None
        s = float(s)
    return None if np.isinf(s) and s > 0 else float(s)


def evaluate_outage(estimator, tin, items, threshold, sr=0.01, seed=0, low_threshold=0.0):
    """Mean over maps of MSE between the task network's outage prediction on the
    estimated radiomap and the thresholded ground truth."""
    if tin is None:
        raise ConfigError("outage evaluation needs a task network")
    o = OutageParams(threshold)
    vals = []
    for i, it in enumerate(items):
        s = _map_samples(it, i, sr, seed, low_threshold, None)
        est = estimator(it, s)
        zhat = tin_predict(tin, est)
        vals.append(mse(outage_map(it.radiomap, o), zhat))
    return float(np.mean(vals)), vals


def tin_predict(tin, g):
    """Outage probabilities for one radiomap; any callable Grid -> array works as ``tin``."""
    if isinstance(tin, UNet):
        return tin(Tensor(_vals(g)[None, None])).data[0, 0]
    return _vals(tin(g))


def render_table(reports):
    """Human-readable table in display units: NMSE ×1e-2 and MSE ×1e-4."""
    lines = [f"{'estimator':<10} {'sr':>7} {'snr':>6} {'NMSE(x1e-2)':>12} {'MSE(x1e-4)':>11}"]
    for r in reports:
        lines.append(f"{r.estimator:<10} {r.sr:>7.4f} {_snr_str(r.snr_db):>6} "
                     f"{r.nmse / NMSE_DISPLAY:>12.4f} {r.mse / MSE_DISPLAY:>11.4f}")
    return "\n".join(lines)


def display_values(rep):
    return rep.nmse / NMSE_DISPLAY, rep.mse / MSE_DISPLAY
