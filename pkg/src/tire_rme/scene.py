"""Synthetic scenes and log-distance ground-truth radiomaps."""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .grid import BinaryGrid, Grid, PixelCoord, in_bounds

DEFAULT_OUTAGE_THRESHOLD = 0.2


@dataclass(frozen=True)
class Scene:
    buildings: BinaryGrid
    transmitters: tuple
    seed: int = 0

    def __post_init__(self):
        txs = tuple(PixelCoord(int(x), int(y)) for x, y in self.transmitters)
        object.__setattr__(self, "transmitters", txs)
        if not txs:
            raise ConfigError("a scene needs at least one transmitter")
        b = self.buildings
        for t in txs:
            if not in_bounds(t, b.width, b.height):
                raise ConfigError(f"transmitter {tuple(t)} outside {b.width}x{b.height} scene")
            if b.values[t.y, t.x]:
                raise ConfigError(f"transmitter {tuple(t)} sits on a building pixel")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def size(self):
        return self.buildings.width, self.buildings.height

    def tx_grid(self):
        """Binary transmitter map: 1 at each transmitter pixel."""
        m = np.zeros(self.buildings.shape, dtype=np.uint8)
        for t in self.transmitters:
            m[t.y, t.x] = 1
        return BinaryGrid(m)

    def to_dict(self):
        rows = ["".join("1" if v else "0" for v in row) for row in self.buildings.as_uint8()]
        return {
            "width": self.buildings.width,
            "height": self.buildings.height,
            "tx": [[t.x, t.y] for t in self.transmitters],
            "seed": int(self.seed),
            "buildings": rows,
        }

    @classmethod
    def from_dict(cls, d, base_dir=None):
        try:
            b = d["buildings"]
            if isinstance(b, str):
                from .dataset import load_raster

                path = Path(b) if base_dir is None else Path(base_dir) / b
                mask = load_raster(path).values >= 0.5
            else:
                mask = np.array([[ch == "1" for ch in row] for row in b], dtype=bool)
            return cls(BinaryGrid(mask), tuple(tuple(t) for t in d["tx"]), int(d.get("seed", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise DataError(f"malformed scene description: {exc}") from exc


def save_scene(scene, path):
    Path(path).write_text(json.dumps(scene.to_dict(), indent=1))


def load_scene(path):
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    return Scene.from_dict(d, base_dir=path.parent)


@dataclass(frozen=True)
class SimParams:
    ref_power_db: float = 0.0
    pathloss_exponent: float = 3.0
    wall_loss_db: float = 6.0
    shadow_sigma_db: float = 0.0
    floor_db: float = -60.0

    def __post_init__(self):
        vals = (self.ref_power_db, self.pathloss_exponent, self.wall_loss_db,
                self.shadow_sigma_db, self.floor_db)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("simulation parameters must be finite")
        if self.pathloss_exponent <= 0:
            raise ConfigError("pathloss_exponent must be positive")
        if self.wall_loss_db < 0 or self.shadow_sigma_db < 0:
            raise ConfigError("wall_loss_db and shadow_sigma_db must be non-negative")
        if not self.floor_db < self.ref_power_db:
            raise ConfigError("floor_db must be below ref_power_db")


@dataclass(frozen=True)
class OutageParams:
    threshold: float = DEFAULT_OUTAGE_THRESHOLD

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ConfigError(f"outage threshold must lie in (0, 1), got {self.threshold}")


def simulate_db(scene, p):
    """Per-pixel received power in dB before clamping and building masking."""
    b = scene.buildings.as_uint8()
    h, w = b.shape
    ys, xs = np.mgrid[0:h, 0:w]
    best = np.full((h, w), -np.inf)
    for t in scene.transmitters:
        d = np.maximum(np.hypot(xs - t.x, ys - t.y), 1.0)
        free, total = kernels.los_counts(b, t.x, t.y)
        walls = total - free
        power = p.ref_power_db - 10.0 * p.pathloss_exponent * np.log10(d) - p.wall_loss_db * walls
        np.maximum(best, power, out=best)
    if p.shadow_sigma_db > 0:
        rng = np.random.default_rng(scene.seed)
        best = best + rng.normal(0.0, p.shadow_sigma_db, size=best.shape)
    return best


def simulate_radiomap(scene, p=None):
    """Normalized ground-truth radiomap in [0, 1] (strongest-server LDPL + wall loss)."""
    p = p or SimParams()
    db = np.clip(simulate_db(scene, p), p.floor_db, p.ref_power_db)
    db[scene.buildings.as_bool()] = p.floor_db
    return Grid((db - p.floor_db) / (p.ref_power_db - p.floor_db))


def outage_map(rm, o):
    """1 where the normalized power is below the failure threshold, else 0."""
    if not isinstance(o, OutageParams):
        o = OutageParams(float(o))
    vals = rm.values if isinstance(rm, Grid) else np.asarray(rm, dtype=np.float64)
    out = (vals < o.threshold).astype(np.float64)
    return Grid(out) if isinstance(rm, Grid) else out


def random_scene(n, n_buildings, n_tx, seed, max_tries=1000):
    """Scene with axis-aligned rectangular buildings that avoid every transmitter."""
    if n < 2 or n_tx < 1 or n_buildings < 0:
        raise ConfigError(f"infeasible scene request n={n} buildings={n_buildings} tx={n_tx}")
    if n_tx > n * n:
        raise ConfigError("more transmitters than pixels")
    rng = np.random.default_rng(seed)
    flat = rng.choice(n * n, size=n_tx, replace=False)
    txs = [PixelCoord(int(i % n), int(i // n)) for i in flat]
    tx_mask = np.zeros((n, n), dtype=bool)
    for t in txs:
        tx_mask[t.y, t.x] = True
    lo = max(1, n // 16)
    hi = max(lo + 1, n // 4)
    mask = np.zeros((n, n), dtype=bool)
    for _ in range(n_buildings):
        for _attempt in range(max_tries):
            bw, bh = (int(v) for v in rng.integers(lo, hi + 1, size=2))
            x0 = int(rng.integers(0, n - bw + 1))
            y0 = int(rng.integers(0, n - bh + 1))
            if not tx_mask[y0:y0 + bh, x0:x0 + bw].any():
                mask[y0:y0 + bh, x0:x0 + bw] = True
                break
        else:
            raise ConfigError(f"could not place building without covering a transmitter after {max_tries} tries")
    return Scene(BinaryGrid(mask), tuple(txs), int(seed))
