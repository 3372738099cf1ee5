"""Shared fixtures.  The lane-keeping synthesis runs once per session."""

import numpy as np
import pytest

from lpvtube.artifact import save_artifact
from lpvtube.config import default_config
from lpvtube.synthesis import compute_rpi, synthesize_gains


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def model(cfg):
    return cfg.lateral_model()


@pytest.fixture(scope="session")
def lon_model(cfg):
    return cfg.longitudinal_model()


@pytest.fixture(scope="session")
def synthesis(cfg, model):
    """``(gains, S)`` for the default configuration."""
    syn = cfg.synthesis
    gains = synthesize_gains(model, syn.Q_syn * np.eye(model.nx), syn.R_syn)
    S = compute_rpi(model, gains, max_iter=syn.max_iter)
    return gains, S


@pytest.fixture(scope="session")
def gains(synthesis):
    return synthesis[0]


@pytest.fixture(scope="session")
def rpi(synthesis):
    return synthesis[1]


@pytest.fixture(scope="session")
def artifact_path(tmp_path_factory, model, synthesis):
    path = tmp_path_factory.mktemp("artifact") / "synthesis.json"
    save_artifact(path, model, *synthesis, metadata={"origin": "test session"})
    return path
