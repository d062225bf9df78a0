"""Radio depth map: inverse-distance gain times line-of-sight building-free ratio,
summed over transmitters and max-normalized."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError
from .grid import Grid, euclidean_distance, los_pixels, max_normalize


@dataclass(frozen=True)
class RdmParams:
    lam: float = 2.0
    min_distance: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError(f"RDM decay exponent must be positive, got {self.lam}")
        if not self.min_distance >= 1:
            raise ConfigError(f"min_distance must be >= 1, got {self.min_distance}")


def shadow_ratio(buildings, target, tx):
    """Fraction of line-of-sight pixels between target and tx that are not buildings.

    Adjacent or identical pixels have an empty path and count as unobstructed.
    """
    cells = los_pixels(target, tx, buildings.width, buildings.height)
    if not cells:
        return 1.0
    b = buildings.values
    free = sum(1 for c in cells if not b[c.y, c.x])
    return free / len(cells)


def idw_gain(target, tx, p=RdmParams()):
    return max(euclidean_distance(target, tx), p.min_distance) ** (-p.lam)


def shadow_ratio_map(buildings, tx):
    """shadow_ratio for every pixel of the grid at once."""
    free, total = kernels.los_counts(buildings.as_uint8(), int(tx[0]), int(tx[1]))
    ratio = np.ones(free.shape)
    nz = total > 0
    ratio[nz] = free[nz] / total[nz]
    return ratio


def depth_sum(scene, p=RdmParams()):
    """Pre-normalization sum over transmitters of gain × shadow ratio."""
    h, w = scene.buildings.shape
    ys, xs = np.mgrid[0:h, 0:w]
    acc = np.zeros((h, w))
    for t in scene.transmitters:
        d = np.maximum(np.hypot(xs - t.x, ys - t.y), p.min_distance)
        acc += d ** (-p.lam) * shadow_ratio_map(scene.buildings, t)
    return acc


def radio_depth_map(scene, p=RdmParams()):
    acc = depth_sum(scene, p)
    # transmitters never sit on buildings and the distance clamp keeps gains
    # finite, so the transmitter pixel itself guarantees a positive maximum
    assert acc.max() > 0
    return max_normalize(Grid(acc))
