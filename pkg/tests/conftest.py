"""
Pytest configuration and shared fixtures for the HDP-HSMM tests.
"""
import pytest
import sys
import json
from pathlib import Path

import numpy as np

# Add backend to path
BACKEND_DIR = Path(__file__).parent.parent / "backend"
sys.path.insert(0, str(BACKEND_DIR))
sys.path.insert(0, str(Path(__file__).parent))

# Default fit configuration
SETTINGS_FILE = Path(__file__).parent.parent / "settings.json"


@pytest.fixture(scope="session")
def settings():
    """Load the repository's default settings.json."""
    if SETTINGS_FILE.exists():
        with open(SETTINGS_FILE, "r") as f:
            return json.load(f)
    return {}


@pytest.fixture
def rng():
    """A fresh, fixed-seed generator per test."""
    return np.random.default_rng(20240611)


@pytest.fixture
def temp_dir(tmp_path):
    """Provide a temporary directory for file operations."""
    return tmp_path


@pytest.fixture
def gaussian_1d():
    """1-D Gaussian emission family with a unit NIW prior."""
    from distributions import NIWParams
    from observations import GaussianObservation
    return GaussianObservation(NIWParams(mean=[0.0], scale=1.0, dof=4.0, scatter=[[4.0]]))


@pytest.fixture
def tiny_dataset(temp_dir):
    """A written poisson-hsmm bundle: 2 sequences of 60 frames."""
    from genmodel import make_experiment, write_bundle
    bundle = make_experiment("poisson-hsmm", seed=3, n_sequences=2, T=60)
    return write_bundle(bundle, temp_dir / "data")
