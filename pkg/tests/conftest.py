"""Pytest configuration and shared fixtures for depth2flow tests."""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from depth2flow.config import GenConfig, LateralAugConfig
from depth2flow.depth_unify import VirtualStereoConfig, synth_virtual_stereo
from depth2flow.fields import PixelGrid
from depth2flow.synthetic import (
    slanted_plane_depth,
    stereo_scene,
    textured_image,
    write_demo_dataset,
)

FIXTURES = Path(__file__).parent / "fixtures"

WIDTH = 64
HEIGHT = 48


@pytest.fixture
def load_fixture():
    """Load a JSON file from tests/fixtures."""

    def _load(name):
        return json.loads((FIXTURES / name).read_text())

    return _load


@pytest.fixture
def grid():
    return PixelGrid(WIDTH, HEIGHT)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def texture_image():
    """Smooth RGB texture, 64x48."""
    return textured_image(WIDTH, HEIGHT, seed=1)


@pytest.fixture
def plane_depth():
    """Slanted plane between 4 and 8 scene units."""
    return slanted_plane_depth(WIDTH, HEIGHT)


@pytest.fixture
def narrow_stereo_config():
    """Virtual stereo with at most ~10% disparity, always shifting left."""
    return VirtualStereoConfig(disparity_fraction_range=(0.04, 0.1), side_sign=-1)


@pytest.fixture
def virtual_pair(texture_image, plane_depth, narrow_stereo_config):
    """A virtual stereo pair built from the textured plane."""
    return synth_virtual_stereo(
        texture_image, plane_depth, narrow_stereo_config, np.random.default_rng(5)
    )


@pytest.fixture
def stereo_inputs():
    """Analytic rectified pair (left, right, disparity) with 2..6 px disparity."""
    return stereo_scene(WIDTH, HEIGHT, seed=2)


@pytest.fixture
def demo_manifest(tmp_path):
    """One mono and one stereo sample on disk, returns the manifest path."""
    return write_demo_dataset(tmp_path / "data", WIDTH, HEIGHT, seed=0)


@pytest.fixture
def smoke_config():
    """Generation config that keeps masks large: narrow disparities, no augmentation."""
    return GenConfig(
        global_seed=7,
        virtual_stereo=VirtualStereoConfig(disparity_fraction_range=(0.03, 0.08)),
        lateral=LateralAugConfig(probability=0.0),
    )
