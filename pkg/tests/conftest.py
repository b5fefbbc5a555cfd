import json

import numpy as np
import pytest

from infopriv import settings
from infopriv.problem import build_instance, hamming
from infopriv.prob_core import Alphabet, Channel, JointPmf, Pmf


BINARY = Alphabet(("0", "1"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture
def binary():
    return BINARY


@pytest.fixture
def uniform_binary():
    return Pmf.uniform(BINARY)


@pytest.fixture
def symmetric_joint():
    return JointPmf(BINARY, BINARY, [[0.4, 0.1], [0.1, 0.4]])


@pytest.fixture
def symmetric_instance(symmetric_joint):
    """The symmetric 2x2 instance with Hamming distortion and budget 0.25."""
    return build_instance(symmetric_joint, [(hamming(2), 0.25)])


@pytest.fixture
def rr_mechanism():
    return Channel(BINARY, BINARY, [[0.75, 0.25], [0.25, 0.75]])


@pytest.fixture
def fast_settings():
    return settings.SolverSettings(max_iters=20000)


@pytest.fixture
def config_file(tmp_path, monkeypatch):
    path = tmp_path / "config.yaml"
    path.write_text("debug: false\nprocesses_pool_size: 2\n")
    monkeypatch.setenv("INFOPRIV_CONFIG", str(path))
    return path


@pytest.fixture
def instance_file(tmp_path):
    def write(document: dict, name: str = "instance.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return str(path)
    return write


@pytest.fixture
def symmetric_document():
    return {
        "S": ["0", "1"],
        "Y": ["0", "1"],
        "U_size": 2,
        "p_SY": [[0.4, 0.1], [0.1, 0.4]],
        "distortions": [{"matrix": [[0, 1], [1, 0]], "delta": 0.25}],
    }
