"""Shared fixtures: tiny configs, clips, and field windows.

Unit tests run on a shrunken architecture (8 channels, 1 block per stage)
so forward/backward passes take milliseconds; the full-size defaults are
exercised only where the contract is about the defaults themselves.
"""

import numpy as np
import pytest

from fieldnet.data import generate_clip
from fieldnet.fields import make_window, synth_interlaced
from fieldnet.model import NetworkConfig, init_weights

TINY = dict(base_channels=8, qk_channels=1, feat_blocks=1, align_blocks=1,
            recon_blocks=2)


@pytest.fixture(scope="session")
def tiny_config():
    return NetworkConfig(**TINY)


@pytest.fixture(scope="session")
def tiny_weights(tiny_config):
    return init_weights(tiny_config, seed=0)


@pytest.fixture(scope="session")
def small_clip():
    """8 frames of 16x16 moving texture, 8-bit aligned."""
    return generate_clip(seed=11, num_frames=8, height=16, width=16,
                         velocity=2)


@pytest.fixture(scope="session")
def small_stream(small_clip):
    return synth_interlaced(small_clip)


@pytest.fixture(scope="session")
def small_window(small_stream):
    return make_window(small_stream, 3)


def rand_frame(rng, h=16, w=16):
    """Random [0,1] float32 frame pixels on the 8-bit grid."""
    x = rng.random((3, h, w))
    return (np.round(x * 255.0) / 255.0).astype(np.float32)
