"""Stacking of the four generator input planes and derived-seed helpers."""

import numpy as np

from .dataset import PreprocessParams, sample_uniform, to_observation_grid

CHANNELS = ("buildings", "transmitters", "samples", "depth")


def derive_seed(*keys):
    """Deterministic 64-bit seed from a tuple of non-negative integers."""
    ss = np.random.SeedSequence([int(k) % 2**64 for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def build_condition(item, samples, use_rdm=True):
    """(4, H, W) array of buildings, transmitter map, zero-padded samples, depth map."""
    h, w = item.radiomap.shape
    out = np.zeros((4, h, w))
    out[0] = item.scene.buildings.values
    out[1] = item.scene.tx_grid().values
    out[2] = to_observation_grid(samples).values
    if use_rdm:
        out[3] = item.rdm.values
    return out


def draw_samples(item, sr, seed, low_threshold=0.0, snr_db=None):
    return sample_uniform(item.radiomap, PreprocessParams(low_threshold, sr, snr_db, seed))
