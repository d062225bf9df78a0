"""Radiomap estimation: radio depth maps, a task-incentivized cGAN and interpolation baselines."""

from .errors import (BoundsError, ConfigError, DataError, DegenerateInputError, FormatError,
                     NumericalAbort, ParseError, ShapeError, UsageError)
from .grid import BinaryGrid, Grid, PixelCoord, euclidean_distance, los_pixels, max_normalize
from .kernels import BACKEND as KERNEL_BACKEND
from .rdm import RdmParams, idw_gain, radio_depth_map, shadow_ratio
from .scene import OutageParams, Scene, SimParams, outage_map, random_scene, simulate_radiomap

__version__ = "0.1.0"
